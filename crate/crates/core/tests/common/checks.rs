use hip::losses::{gradients, total_objective, Block};
use hip::{Family, HipParams, MultiViewDataset};
use ndarray::Array2;

use super::{config, random_dataset, random_params};

const STEP: f64 = 1e-5;

fn block_value(params: &HipParams, block: Block) -> Array2<f64> {
    match block {
        Block::Z(s) => params.z[s].clone(),
        Block::G(d) => params.g[d].clone(),
        Block::Xi(d, s) => params.xi[d][s].clone(),
        Block::ThetaBeta => {
            let (k, q) = params.theta.dim();
            Array2::from_shape_fn((k + 1, q), |(r, j)| if r == 0 { params.beta0[j] } else { params.theta[[r - 1, j]] })
        }
    }
}

fn set_entry(params: &mut HipParams, block: Block, (r, c): (usize, usize), v: f64) {
    match block {
        Block::Z(s) => params.z[s][[r, c]] = v,
        Block::G(d) => params.g[d][[r, c]] = v,
        Block::Xi(d, s) => params.xi[d][s][[r, c]] = v,
        Block::ThetaBeta if r == 0 => params.beta0[c] = v,
        Block::ThetaBeta => params.theta[[r - 1, c]] = v,
    }
}

pub fn blocks(data: &MultiViewDataset) -> Vec<Block> {
    let mut out: Vec<Block> = (0..data.n_subgroups()).map(Block::Z).collect();
    out.extend((0..data.n_views()).map(Block::G));
    for d in 0..data.n_views() {
        out.extend((0..data.n_subgroups()).map(|s| Block::Xi(d, s)));
    }
    out.push(Block::ThetaBeta);
    out
}

/// Largest relative error, over all blocks, between the analytic gradient
/// and central differences of the total objective.
pub fn worst_gradient_error(seed: u64, family: Family) -> f64 {
    let p = [8, 6];
    let data = random_dataset(seed, family, 15, &p);
    let params = random_params(seed, &data, family, 2);
    let cfg = config(family, 2, 0.7, 0.4, p.len());
    let mut worst: f64 = 0.0;
    for block in blocks(&data) {
        let analytic = gradients(&data, &params, &cfg, block).unwrap();
        let x0 = block_value(&params, block);
        let mut numeric = Array2::zeros(x0.dim());
        let mut probe = params.clone();
        for (idx, &v) in x0.indexed_iter() {
            set_entry(&mut probe, block, idx, v + STEP);
            let up = total_objective(&data, &probe, &cfg).unwrap().total;
            set_entry(&mut probe, block, idx, v - STEP);
            let down = total_objective(&data, &probe, &cfg).unwrap().total;
            set_entry(&mut probe, block, idx, v);
            numeric[idx] = (up - down) / (2.0 * STEP);
        }
        let diff = (&analytic - &numeric).mapv(|v| v * v).sum().sqrt();
        let scale = numeric.mapv(|v| v * v).sum().sqrt().max(1e-12);
        worst = worst.max(diff / scale);
    }
    worst
}
