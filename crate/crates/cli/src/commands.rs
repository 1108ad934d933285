use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Map, Value};

use hip::config::{Family, FitConfig, Standardization};
use hip::data::{standardize_subgroup, validate_dataset, MultiViewDataset, StandardizationParams};
use hip::experiment::{self, ExperimentSpec};
use hip::io::{self, ModelFile, SearchReport};
use hip::optim::{self, FitTrace};
use hip::predict::{self, Metric, SelectionMetrics};
use hip::selection::{self, Criterion, KTarget, SearchMode, SearchSpec, SelectionResult};
use hip::simulate::{self, Dimension, GroundTruth, Overlap, ScenarioSpec};
use hip::HipParams;

use crate::args::*;
use crate::manifest::{self, RunManifest};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}

fn parse_family(s: &str) -> Result<Family> {
    match s.trim().to_ascii_lowercase().as_str() {
        "binary" => Ok(Family::MultiClass { classes: 2 }),
        "poisson" => Ok(Family::Poisson),
        "zip" => Ok(Family::Zip),
        other => match other.strip_prefix("multiclass:").map(str::parse::<usize>) {
            Some(Ok(m)) => Ok(Family::MultiClass { classes: m }),
            _ => usage(format!("unknown family '{s}' (binary, multiclass:M, poisson, zip)")),
        },
    }
}

fn family_name(f: Family) -> String {
    match f {
        Family::MultiClass { classes: 2 } => "binary".into(),
        Family::MultiClass { classes } => format!("multiclass:{classes}"),
        other => other.label().into(),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| v.trim().parse::<T>().or_else(|_| usage(format!("bad {what} value '{v}' in '{s}'"))))
        .collect()
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 2 {
        return usage(format!("range must look like low:high, got '{s}'"));
    }
    let low = parts[0].trim().parse::<f64>().or_else(|_| usage(format!("bad range '{s}'")))?;
    let high = parts[1].trim().parse::<f64>().or_else(|_| usage(format!("bad range '{s}'")))?;
    Ok((low, high))
}

fn parse_standardization(s: Option<&str>) -> Result<Standardization> {
    match s.unwrap_or("subgroup") {
        "subgroup" => Ok(Standardization::Subgroup),
        "none" => Ok(Standardization::None),
        other => usage(format!("standardize must be subgroup or none, got '{other}'")),
    }
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("hip_output"));
    fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    io::write_json(path, value).map_err(CliError::from)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn millis(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

struct Run {
    command: &'static str,
    config: Value,
    jobs: usize,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    timings: BTreeMap<String, f64>,
    started: Instant,
}

impl Run {
    fn new(command: &'static str, config: Value, jobs: usize) -> Self {
        Self {
            command,
            config,
            jobs,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            started: Instant::now(),
        }
    }

    fn finish(mut self, dir: &Path) -> Result<()> {
        self.timings.insert("total_ms".into(), millis(self.started));
        let m = RunManifest {
            command: self.command.into(),
            engine_version: VERSION.into(),
            config: self.config,
            seeds: self.seeds,
            jobs: self.jobs,
            inputs: manifest::digests(&self.inputs)?,
            outputs: manifest::digests(&self.outputs)?,
            timings: self.timings,
        };
        let path = dir.join("run_manifest.json");
        write_json(&path, &m)?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn scenario_from(a: &ScenarioArgs) -> Result<ScenarioSpec> {
    let family = parse_family(a.family.as_deref().unwrap_or("zip"))?;
    let overlap = match a.overlap.as_deref().unwrap_or("full") {
        "full" => Overlap::Full,
        "partial" => Overlap::Partial,
        o => return usage(format!("overlap must be full or partial, got '{o}'")),
    };
    let dim = match a.dim.as_deref().unwrap_or("low") {
        "low" => Dimension::Low,
        "high" => Dimension::High,
        d => return usage(format!("dim must be low or high, got '{d}'")),
    };
    let mut spec = ScenarioSpec::standard(family, overlap, dim, a.seed.unwrap_or(0));
    if let Some(p) = &a.p {
        spec.p = parse_list(p, "p")?;
    }
    if let Some(n) = &a.n {
        spec.n = parse_list(n, "n")?;
    }
    spec.k = a.k.unwrap_or(spec.k);
    spec.signals = a.signals.unwrap_or(spec.signals);
    spec.common = a.common.unwrap_or(spec.common);
    spec.noise_sd = a.noise_sd.unwrap_or(spec.noise_sd);
    spec.validate()?;
    Ok(spec)
}

pub fn simulate(cli: &SimulateArgs, file: Option<Map<String, Value>>, jobs: usize) -> Result<()> {
    let (a, config) = manifest::merge(cli, file)?;
    let spec = scenario_from(&a.scenario)?;
    let dir = out_dir(&a.out)?;
    let mut run = Run::new("simulate", config, jobs);
    run.seeds.insert("simulate".into(), spec.seed);

    let (train, test, truth) = if a.test_set.unwrap_or(false) {
        let (train, test, truth) = simulate::generate_train_test(&spec)?;
        (train, Some(test), truth)
    } else {
        let (train, truth) = simulate::generate_dataset(&spec)?;
        (train, None, truth)
    };
    run.outputs.extend(io::write_dataset(&dir.join("train"), "dataset.json", &train)?);
    if let Some(test) = &test {
        run.outputs.extend(io::write_dataset(&dir.join("test"), "dataset.json", test)?);
    }
    let truth_path = dir.join("truth.json");
    write_json(&truth_path, &truth)?;
    run.outputs.push(truth_path);

    for (s, sg) in train.subgroups.iter().enumerate() {
        for (d, view) in train.views.iter().enumerate() {
            println!("{} {}: {} x {}", sg.name, view.name, train.n(s), train.p(d));
        }
    }
    run.finish(&dir)
}

struct Prepared {
    raw: MultiViewDataset,
    data: MultiViewDataset,
    scaling: StandardizationParams,
    config: FitConfig,
    n_top: Option<Vec<usize>>,
    inputs: Vec<PathBuf>,
}

fn prepare(m: &ModelArgs) -> Result<Prepared> {
    let Some(path) = &m.data else { return usage("--data is required") };
    let (raw, inputs) = io::load_dataset(path)?;
    let report = validate_dataset(&raw);
    if !report.passed() {
        let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Data(msgs.join("; ")));
    }
    let family = match &m.family {
        Some(f) => parse_family(f)?,
        None => raw.family,
    };
    let standardization = parse_standardization(m.standardize.as_deref())?;
    let (data, scaling) = match standardization {
        Standardization::Subgroup => standardize_subgroup(&raw),
        Standardization::None => (raw.clone(), StandardizationParams::identity(&raw)),
    };
    let mut config = FitConfig::new(m.k.unwrap_or(2), 1.0, 1.0, raw.n_views(), family).with_seed(m.seed.unwrap_or(0));
    config.standardization = standardization;
    if let Some(g) = &m.gamma {
        config.gamma = parse_list::<u8>(g, "gamma")?.into_iter().map(|v| v != 0).collect();
    }
    config.epsilon_conv = m.epsilon.unwrap_or(config.epsilon_conv);
    config.iter_max = m.iter_max.unwrap_or(config.iter_max);
    config.solver.max_inner_iter = m.inner_iter_max.unwrap_or(config.solver.max_inner_iter);
    config.solver.inner_tol = m.inner_tol.unwrap_or(config.solver.inner_tol);
    let n_top = m.n_top.as_deref().map(|s| parse_list(s, "n-top")).transpose()?;
    if let Some(n) = &n_top {
        if n.len() != raw.n_views() {
            return usage(format!("{} n-top values for {} views", n.len(), raw.n_views()));
        }
    }
    Ok(Prepared { raw, data, scaling, config, n_top, inputs })
}

/// Accuracy or `D²` of the model on `raw`, scoring it exactly as `predict`.
fn data_metric(model: &ModelFile, raw: &MultiViewDataset) -> Result<Option<Metric>> {
    if !raw.has_outcomes() {
        return Ok(None);
    }
    let data = model.prepare(raw)?;
    let (z, _) = predict::predict_all_scores(&data, &model.params)?;
    Ok(Some(predict::outcome_metric(&data, &z, &model.params, model.config.family, raw.family)?))
}

#[allow(clippy::too_many_arguments)]
fn build_model(
    p: &Prepared,
    config: FitConfig,
    columns: Vec<Vec<usize>>,
    params: HipParams,
    trace: FitTrace,
    selection: Option<SelectionResult>,
    ebic: Option<selection::EbicTriple>,
    search: Option<SearchReport>,
) -> Result<ModelFile> {
    let mut warnings = trace.warnings.clone();
    let mut model = ModelFile {
        engine_version: VERSION.into(),
        config,
        views: p.raw.views.clone(),
        subgroups: p.raw.subgroups.iter().map(|s| s.name.clone()).collect(),
        standardization: p.scaling.clone(),
        columns,
        loadings: ModelFile::loadings_of(&params),
        params,
        trace,
        selection,
        ebic,
        search,
        training_metric: None,
        warnings: Vec::new(),
    };
    model.training_metric = data_metric(&model, &p.raw)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    model.warnings.append(&mut warnings);
    Ok(model)
}

fn write_importance(path: &Path, model: &ModelFile, selection: &SelectionResult) -> Result<()> {
    let mut text = String::from("view,subgroup,variable,rank,score,selected\n");
    for (d, per_s) in selection.ranked.iter().enumerate() {
        for (s, block) in per_s.iter().enumerate() {
            for (rank, (&j, score)) in block.order.iter().zip(&block.scores).enumerate() {
                text.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    model.views[d].name,
                    model.subgroups[s],
                    model.views[d].variables[j],
                    rank + 1,
                    score,
                    rank < selection.n_top[d]
                ));
            }
        }
    }
    write_text(path, &text)
}

fn trace_timings(run: &mut Run, prefix: &str, trace: &FitTrace) {
    for (i, r) in trace.iterations.iter().enumerate() {
        run.timings.insert(format!("{prefix}_iteration_{i:04}_ms"), r.elapsed_ms);
    }
}

fn save_model(run: &mut Run, dir: &Path, model: &ModelFile) -> Result<()> {
    let path = dir.join("model.json");
    write_json(&path, model)?;
    run.outputs.push(path);
    if let Some(sel) = &model.selection {
        let path = dir.join("importance.csv");
        write_importance(&path, model, sel)?;
        run.outputs.push(path);
    }
    if let Some(m) = &model.training_metric {
        println!("training metric: {}", describe_metric(m));
    }
    Ok(())
}

fn describe_metric(m: &Metric) -> String {
    match m {
        Metric::Accuracy(a) => format!("accuracy {a:.4}"),
        Metric::Deviance(d) => match d.d2 {
            Some(v) => format!("D2 {v:.4}"),
            None => "D2 undefined (null deviance is zero)".into(),
        },
    }
}

pub fn fit(cli: &FitArgs, file: Option<Map<String, Value>>, jobs: usize) -> Result<()> {
    let (a, config_value) = manifest::merge(cli, file)?;
    let p = prepare(&a.model)?;
    let (Some(lambda_g), Some(lambda_xi)) = (a.lambda_g, a.lambda_xi) else {
        return usage("fit needs --lambda-g and --lambda-xi (use tune to search)");
    };
    let config = FitConfig { lambda_g, lambda_xi, ..p.config.clone() };
    let dir = out_dir(&a.model.out)?;
    let mut run = Run::new("fit", config_value, jobs);
    run.seeds.insert("fit".into(), config.seed);
    run.inputs = p.inputs.clone();

    let started = Instant::now();
    let (params, trace) = optim::fit(&p.data, &config)?;
    run.timings.insert("fit_ms".into(), millis(started));
    trace_timings(&mut run, "fit", &trace);
    let model = match &p.n_top {
        None => {
            let columns = (0..p.data.n_views()).map(|d| (0..p.data.p(d)).collect()).collect();
            build_model(&p, config, columns, params, trace, None, None, None)?
        }
        Some(n_top) => {
            let sel = selection::rank_variables(&params, n_top)?;
            let started = Instant::now();
            let subset = selection::subset_refit(&p.data, &config, &sel)?;
            run.timings.insert("subset_fit_ms".into(), millis(started));
            trace_timings(&mut run, "subset", &subset.trace);
            let ebic = selection::ebic_triple(&subset.data, &subset.params, config.family, &sel)?;
            build_model(&p, config, subset.columns, subset.params, subset.trace, Some(sel), Some(ebic), None)?
        }
    };
    println!(
        "fit: {} outer iterations, objective {:.6}, converged {}",
        model.trace.iterations.len(),
        model.trace.final_objective().total,
        model.trace.converged
    );
    save_model(&mut run, &dir, &model)?;
    run.finish(&dir)
}

fn search_spec(a: &SearchArgs, n_top: Vec<usize>, seed: u64) -> Result<SearchSpec> {
    let mut spec = SearchSpec::new(n_top);
    spec.mode = match a.mode.as_deref().unwrap_or("random") {
        "random" => SearchMode::Random,
        "grid" => SearchMode::Grid,
        m => return usage(format!("mode must be grid or random, got '{m}'")),
    };
    spec.num_steps = a.steps.unwrap_or(spec.num_steps);
    if let Some(r) = &a.range {
        (spec.lambda_low, spec.lambda_high) = parse_range(r)?;
    }
    spec.criterion = match a.criterion.as_deref().unwrap_or("ebic1") {
        "ebic0" => Criterion::Ebic0,
        "ebic05" | "ebic0.5" => Criterion::Ebic05,
        "ebic1" => Criterion::Ebic1,
        c => return usage(format!("criterion must be ebic0, ebic05 or ebic1, got '{c}'")),
    };
    spec.random_fraction = a.random_fraction.unwrap_or(spec.random_fraction);
    spec.seed = a.search_seed.unwrap_or(seed);
    spec.validate()?;
    Ok(spec)
}

/// One tenth of each view's variables, at least one.
fn default_n_top(data: &MultiViewDataset) -> Vec<usize> {
    (0..data.n_views()).map(|d| data.p(d).div_ceil(10).max(1)).collect()
}

pub fn tune(cli: &TuneArgs, file: Option<Map<String, Value>>, jobs: usize) -> Result<()> {
    let (a, config_value) = manifest::merge(cli, file)?;
    let p = prepare(&a.model)?;
    let n_top = p.n_top.clone().unwrap_or_else(|| default_n_top(&p.data));
    let spec = search_spec(&a.search, n_top, p.config.seed)?;
    let dir = out_dir(&a.model.out)?;
    let mut run = Run::new("tune", config_value, jobs);
    run.seeds.insert("fit".into(), p.config.seed);
    run.seeds.insert("search".into(), spec.seed);
    run.inputs = p.inputs.clone();

    let started = Instant::now();
    let outcome = selection::lambda_search(&p.data, &p.config, &spec, jobs)?;
    run.timings.insert("search_ms".into(), millis(started));
    for (i, c) in outcome.candidates.iter().enumerate() {
        run.timings.insert(format!("candidate_{i:03}_ms"), c.elapsed_ms);
    }
    let failed = outcome.candidates.iter().filter(|c| c.error.is_some()).count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} candidates failed", outcome.candidates.len());
    }
    let best = outcome.best;
    println!(
        "tune: {} candidates, best lambda_G {} lambda_xi {} ({:?} {:.4})",
        outcome.candidates.len(),
        best.lambda_g,
        best.lambda_xi,
        spec.criterion,
        spec.criterion.pick(&best.ebic)
    );
    let report = SearchReport { spec, candidates: outcome.candidates };
    let config = FitConfig { lambda_g: best.lambda_g, lambda_xi: best.lambda_xi, ..p.config.clone() };
    let model = build_model(
        &p,
        config,
        best.subset.columns,
        best.subset.params,
        best.subset.trace,
        Some(best.selection),
        Some(best.ebic),
        Some(report.clone()),
    )?;
    let search_path = dir.join("search.json");
    write_json(&search_path, &report)?;
    run.outputs.push(search_path);
    save_model(&mut run, &dir, &model)?;
    run.finish(&dir)
}

pub fn predict(cli: &PredictArgs, file: Option<Map<String, Value>>, jobs: usize) -> Result<()> {
    let (a, config_value) = manifest::merge(cli, file)?;
    let (Some(model_path), Some(data_path)) = (&a.model, &a.data) else {
        return usage("predict needs --model and --data");
    };
    let model: ModelFile = io::read_json(model_path)?;
    let (raw, inputs) = io::load_dataset(data_path)?;
    let dir = out_dir(&a.out)?;
    let mut run = Run::new("predict", config_value, jobs);
    run.inputs.push(model_path.clone());
    run.inputs.extend(inputs);

    let data = model.prepare(&raw)?;
    let (zs, regularized) = predict::predict_all_scores(&data, &model.params)?;
    let family = model.config.family;
    for (s, z) in zs.iter().enumerate() {
        let outcome = raw.subgroups[s].outcome.as_ref();
        let offsets = outcome.and_then(|o| o.as_counts()).map(|c| c.offsets().clone());
        let preds = predict::predict_outcome(z, &model.params.theta, &model.params.beta0, model.params.tau, family, offsets.as_ref())?;
        let truth = outcome.map(predict::outcome_values);
        let path = dir.join(format!("predictions_{}.csv", raw.subgroups[s].name));
        io::write_predictions_csv(&path, &preds, truth.as_deref())?;
        run.outputs.push(path);
    }
    let metric = if raw.has_outcomes() {
        for s in 0..raw.n_subgroups() {
            if !raw.outcome(s)?.supports(family) {
                return Err(CliError::Data(format!(
                    "outcome of subgroup {} does not match the model family {}",
                    raw.subgroups[s].name,
                    family_name(family)
                )));
            }
        }
        Some(predict::outcome_metric(&data, &zs, &model.params, family, raw.family)?)
    } else {
        None
    };
    let notice = match &metric {
        Some(m) => {
            println!("test metric: {}", describe_metric(m));
            None
        }
        None => {
            let msg = "no outcome data available; metrics not computed";
            println!("{msg}");
            Some(msg)
        }
    };
    let metrics = json!({
        "model_family": family_name(family),
        "data_family": family_name(raw.family),
        "metric": metric,
        "value": metric.as_ref().and_then(Metric::value),
        "notice": notice,
        "regularized_scores": regularized,
    });
    let path = dir.join("metrics.json");
    write_json(&path, &metrics)?;
    run.outputs.push(path);
    run.finish(&dir)
}

#[derive(Serialize)]
struct BlockEvaluation {
    view: String,
    subgroup: String,
    #[serde(flatten)]
    metrics: SelectionMetrics,
}

pub fn evaluate(cli: &EvaluateArgs, file: Option<Map<String, Value>>, jobs: usize) -> Result<()> {
    let (a, config_value) = manifest::merge(cli, file)?;
    let (Some(model_path), Some(truth_path)) = (&a.model, &a.truth) else {
        return usage("evaluate needs --model and --truth");
    };
    let model: ModelFile = io::read_json(model_path)?;
    let truth: GroundTruth = io::read_json(truth_path)?;
    let dir = out_dir(&a.out)?;
    let mut run = Run::new("evaluate", config_value, jobs);
    run.inputs = vec![model_path.clone(), truth_path.clone()];

    let sel = match (&model.selection, &a.n_top) {
        (_, Some(n)) => {
            let n_top: Vec<usize> = parse_list(n, "n-top")?;
            selection::rank_loadings(&model.full_loadings(), &n_top)?
        }
        (Some(s), None) => s.clone(),
        (None, None) => return usage("the model has no variable ranking; pass --n-top"),
    };
    if truth.signals.len() != sel.ranked.len() || truth.signals.iter().zip(&sel.ranked).any(|(a, b)| a.len() != b.len()) {
        return Err(CliError::Data("truth and model have different views or subgroups".into()));
    }
    let mut blocks = Vec::new();
    for (d, per_s) in truth.signals.iter().enumerate() {
        for (s, signal) in per_s.iter().enumerate() {
            let m = predict::selection_metrics(signal, &sel.ranked[d][s].selected, sel.p[d])?;
            println!(
                "{} {}: TPR {:.3} FPR {:.4} F1 {:.3}",
                model.views[d].name, model.subgroups[s], m.tpr, m.fpr, m.f1
            );
            blocks.push(BlockEvaluation { view: model.views[d].name.clone(), subgroup: model.subgroups[s].clone(), metrics: m });
        }
    }
    let n = blocks.len() as f64;
    let mean = |f: fn(&SelectionMetrics) -> f64| blocks.iter().map(|b| f(&b.metrics)).sum::<f64>() / n;
    let report = json!({
        "blocks": blocks,
        "mean": { "tpr": mean(|m| m.tpr), "fpr": mean(|m| m.fpr), "f1": mean(|m| m.f1) },
        "tau": { "fitted": model.params.tau, "true": truth.tau },
    });
    let path = dir.join("evaluation.json");
    write_json(&path, &report)?;
    run.outputs.push(path);
    run.finish(&dir)
}

pub fn scree(cli: &ScreeArgs, file: Option<Map<String, Value>>, jobs: usize) -> Result<()> {
    let (a, config_value) = manifest::merge(cli, file)?;
    let Some(data_path) = &a.data else { return usage("--data is required") };
    let threshold = a.threshold.unwrap_or(0.2);
    if !(threshold > 0.0 && threshold < 1.0) {
        return usage(format!("threshold must lie in (0, 1), got {threshold}"));
    }
    let targets = match a.target.as_deref().unwrap_or("both") {
        "concatenated" => vec![KTarget::Concatenated],
        "per-view-subgroup" => vec![KTarget::PerViewSubgroup],
        "both" => vec![KTarget::Concatenated, KTarget::PerViewSubgroup],
        t => return usage(format!("target must be concatenated, per-view-subgroup or both, got '{t}'")),
    };
    let (raw, inputs) = io::load_dataset(data_path)?;
    let data = match parse_standardization(Some(a.standardize.as_deref().unwrap_or("none")))? {
        Standardization::Subgroup => standardize_subgroup(&raw).0,
        Standardization::None => raw,
    };
    let dir = out_dir(&a.out)?;
    let mut run = Run::new("scree", config_value, jobs);
    run.inputs = inputs;

    let mut results = Vec::new();
    for t in targets {
        results.extend(selection::select_k(&data, threshold, t)?);
    }
    let mut csv = String::from("target,index,singular_value\n");
    for r in &results {
        println!("{}: suggested K = {}", r.label, r.k);
        for (i, v) in r.singular_values.iter().enumerate() {
            csv.push_str(&format!("{},{},{}\n", r.label, i + 1, v));
        }
    }
    let csv_path = dir.join("scree.csv");
    write_text(&csv_path, &csv)?;
    let json_path = dir.join("scree.json");
    let suggestions: Vec<Value> = results.iter().map(|r| json!({"target": r.label, "k": r.k})).collect();
    write_json(&json_path, &json!({ "threshold": threshold, "suggestions": suggestions }))?;
    run.outputs.extend([csv_path, json_path]);
    run.finish(&dir)
}

pub fn experiment(cli: &ExperimentArgs, file: Option<Map<String, Value>>, jobs: usize) -> Result<()> {
    let (a, config_value) = manifest::merge(cli, file)?;
    let scenario = scenario_from(&a.scenario)?;
    let engines = match &a.engine {
        Some(e) => e.split(',').map(parse_family).collect::<Result<Vec<_>>>()?,
        None => vec![scenario.family],
    };
    let n_top = match &a.n_top {
        Some(n) => parse_list(n, "n-top")?,
        None => vec![scenario.signals; scenario.p.len()],
    };
    let search = search_spec(&a.search, n_top, scenario.seed)?;
    let keep: Option<Vec<String>> = a.metrics.as_ref().map(|m| m.split(',').map(|s| s.trim().to_string()).collect());
    let dir = out_dir(&a.out)?;
    let mut run = Run::new("experiment", config_value, jobs);
    run.seeds.insert("base".into(), scenario.seed);

    let mut reports = Vec::new();
    let mut csv = String::from("family,metric,mean,sd,count\n");
    for engine in engines {
        let mut spec = ExperimentSpec::new(scenario.clone(), engine, search.clone(), a.replicates.unwrap_or(5));
        spec.epsilon_conv = a.epsilon.unwrap_or(spec.epsilon_conv);
        spec.iter_max = a.iter_max.unwrap_or(spec.iter_max);
        let started = Instant::now();
        let report = experiment::run_experiment(&spec, jobs)?;
        run.timings.insert(format!("{}_ms", family_name(engine)), millis(started));
        for (seed, err) in &report.failures {
            eprintln!("warning: replicate {seed} failed: {err}");
        }
        for row in &report.summary {
            if keep.as_ref().is_some_and(|k| !k.contains(&row.metric)) {
                continue;
            }
            println!("{:<8} {:<8} {:.4} ± {:.4} (n = {})", row.family, row.metric, row.mean, row.sd, row.count);
            csv.push_str(&format!("{},{},{},{},{}\n", row.family, row.metric, row.mean, row.sd, row.count));
        }
        reports.push(report);
    }
    let csv_path = dir.join("summary.csv");
    write_text(&csv_path, &csv)?;
    let json_path = dir.join("replicates.json");
    write_json(&json_path, &reports)?;
    run.outputs.extend([csv_path, json_path]);
    run.finish(&dir)
}
