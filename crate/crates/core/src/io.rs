//! File formats: one CSV per (view, subgroup) block with variable names in
//! the header, one outcome CSV per subgroup, and a JSON manifest tying them
//! together. Paths in a manifest are relative to the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::config::{Family, FitConfig};
use crate::data::{ClassOutcome, CountOutcome, HipParams, MultiViewDataset, OutcomeData, StandardizationParams, Subgroup, ViewInfo};
use crate::error::{HipError, Result};
use crate::optim::FitTrace;
use crate::predict::{Metric, Predictions};
use crate::selection::{CandidateSummary, EbicTriple, SearchSpec, SelectionResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupEntry {
    pub name: String,
    /// One covariate file per view, in view order.
    pub x: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub family: Family,
    pub views: Vec<String>,
    pub subgroups: Vec<SubgroupEntry>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HipError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| HipError::Data(format!("{}: {e}", path.display())))
}

/// Writes a matrix with a header row of column names.
pub fn write_matrix_csv(path: &Path, names: &[String], m: &Array2<f64>) -> Result<()> {
    if names.len() != m.ncols() {
        return Err(HipError::Shape(format!("{} names for {} columns", names.len(), m.ncols())));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(names)?;
    let mut record = Vec::with_capacity(m.ncols());
    for row in m.rows() {
        record.clear();
        record.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_number(field: &str, path: &Path, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| HipError::Data(format!("{}:{line}: '{field}' is not a number", path.display())))
}

/// Reads a matrix CSV; returns the header names and the values.
pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HipError::Data(format!("{}: {e}", path.display())))?;
    let names: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(HipError::Data(format!(
                "{}:{}: {} fields, header has {}",
                path.display(),
                i + 2,
                rec.len(),
                names.len()
            )));
        }
        for f in rec.iter() {
            values.push(parse_number(f, path, i + 2)?);
        }
        rows += 1;
    }
    let m = Array2::from_shape_vec((rows, names.len()), values).expect("row lengths checked");
    Ok((names, m))
}

pub fn write_outcome_csv(path: &Path, outcome: &OutcomeData) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    match outcome {
        OutcomeData::Classes(c) => {
            w.write_record(["class"])?;
            for l in c.labels() {
                w.write_record([l.to_string()])?;
            }
        }
        OutcomeData::Counts(c) => {
            w.write_record(["count", "offset"])?;
            for (y, t) in c.counts().iter().zip(c.offsets()) {
                w.write_record([y.to_string(), t.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a `class` column for multi-class data, or `count` and an optional
/// `offset` column for count data.
pub fn read_outcome_csv(path: &Path, family: Family) -> Result<OutcomeData> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HipError::Data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let records: Vec<csv::StringRecord> = r.records().collect::<std::result::Result<_, _>>()?;
    match family {
        Family::MultiClass { classes } => {
            let c = col("class").ok_or_else(|| HipError::Data(format!("{}: no 'class' column", path.display())))?;
            let labels = records
                .iter()
                .enumerate()
                .map(|(i, rec)| {
                    let v = parse_number(&rec[c], path, i + 2)?;
                    if v < 0.0 || v.fract() != 0.0 {
                        return Err(HipError::Data(format!("{}:{}: class label {v}", path.display(), i + 2)));
                    }
                    Ok(v as usize)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(OutcomeData::Classes(ClassOutcome::new(labels, classes)?))
        }
        Family::Poisson | Family::Zip => {
            let c = col("count").ok_or_else(|| HipError::Data(format!("{}: no 'count' column", path.display())))?;
            let o = col("offset");
            let mut y = Vec::with_capacity(records.len());
            let mut t = Vec::with_capacity(records.len());
            for (i, rec) in records.iter().enumerate() {
                y.push(parse_number(&rec[c], path, i + 2)?);
                t.push(match o {
                    Some(o) => parse_number(&rec[o], path, i + 2)?,
                    None => 1.0,
                });
            }
            Ok(OutcomeData::Counts(CountOutcome::new(Array1::from(y), Array1::from(t))?))
        }
    }
}

/// Loads a dataset from its manifest and returns it with every file read.
/// Variable names come from the first subgroup and must agree across
/// subgroups.
pub fn load_dataset(manifest_path: &Path) -> Result<(MultiViewDataset, Vec<PathBuf>)> {
    let manifest: DatasetManifest = read_json(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut files = vec![manifest_path.to_path_buf()];
    let mut names: Vec<Option<Vec<String>>> = vec![None; manifest.views.len()];
    let mut subgroups = Vec::with_capacity(manifest.subgroups.len());
    for entry in &manifest.subgroups {
        if entry.x.len() != manifest.views.len() {
            return Err(HipError::Data(format!(
                "subgroup {} lists {} view files for {} views",
                entry.name,
                entry.x.len(),
                manifest.views.len()
            )));
        }
        let mut views = Vec::with_capacity(entry.x.len());
        for (d, file) in entry.x.iter().enumerate() {
            let path = base.join(file);
            let (header, m) = read_matrix_csv(&path)?;
            match &names[d] {
                None => names[d] = Some(header),
                Some(existing) if *existing != header => {
                    return Err(HipError::Data(format!(
                        "{}: variable names differ from the first subgroup of view {}",
                        path.display(),
                        manifest.views[d]
                    )))
                }
                Some(_) => {}
            }
            views.push(m);
            files.push(path);
        }
        let outcome = match &entry.outcome {
            Some(file) => {
                let path = base.join(file);
                let o = read_outcome_csv(&path, manifest.family)?;
                files.push(path);
                Some(o)
            }
            None => None,
        };
        subgroups.push(Subgroup { name: entry.name.clone(), views, outcome });
    }
    let views = manifest
        .views
        .iter()
        .zip(names)
        .map(|(name, vars)| ViewInfo::new(name.clone(), vars.unwrap_or_default()))
        .collect();
    Ok((MultiViewDataset { family: manifest.family, views, subgroups }, files))
}

/// Writes every block, outcome and the manifest into `dir`; returns the
/// manifest path followed by the data files.
pub fn write_dataset(dir: &Path, manifest_name: &str, data: &MultiViewDataset) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut entries = Vec::with_capacity(data.n_subgroups());
    for (s, sg) in data.subgroups.iter().enumerate() {
        let mut x = Vec::with_capacity(data.n_views());
        for (d, view) in data.views.iter().enumerate() {
            let file = format!("{}_{}.csv", sg.name, view.name);
            write_matrix_csv(&dir.join(&file), &view.variables, data.x(d, s))?;
            files.push(dir.join(&file));
            x.push(file);
        }
        let outcome = match &sg.outcome {
            Some(o) => {
                let file = format!("{}_outcome.csv", sg.name);
                write_outcome_csv(&dir.join(&file), o)?;
                files.push(dir.join(&file));
                Some(file)
            }
            None => None,
        };
        entries.push(SubgroupEntry { name: sg.name.clone(), x, outcome });
    }
    let manifest = DatasetManifest {
        family: data.family,
        views: data.views.iter().map(|v| v.name.clone()).collect(),
        subgroups: entries,
    };
    let path = dir.join(manifest_name);
    write_json(&path, &manifest)?;
    files.insert(0, path);
    Ok(files)
}

/// Everything needed to apply a fitted model to new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub engine_version: String,
    pub config: FitConfig,
    /// Views of the training data with all variable names.
    pub views: Vec<ViewInfo>,
    pub subgroups: Vec<String>,
    /// Training scalings on the original columns.
    pub standardization: StandardizationParams,
    /// Original column indices the model uses, per view.
    pub columns: Vec<Vec<usize>>,
    /// Parameters on the retained columns.
    pub params: HipParams,
    /// `B^{d,s} = G^d ⊙ Ξ^{d,s}` on the retained columns, indexed `[d][s]`.
    pub loadings: Vec<Vec<Array2<f64>>>,
    pub trace: FitTrace,
    /// Ranking of the full fit, when variables were selected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ebic: Option<EbicTriple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_metric: Option<Metric>,
    pub warnings: Vec<String>,
}

impl ModelFile {
    /// Variable names of the retained columns of view `d`.
    pub fn retained_names(&self, d: usize) -> Vec<String> {
        self.columns[d].iter().map(|&j| self.views[d].variables[j].clone()).collect()
    }

    pub fn loadings_of(params: &HipParams) -> Vec<Vec<Array2<f64>>> {
        (0..params.g.len()).map(|d| (0..params.z.len()).map(|s| params.loading(d, s)).collect()).collect()
    }

    /// Loadings in the original variable space, zero for dropped columns.
    pub fn full_loadings(&self) -> Vec<Vec<Array2<f64>>> {
        self.loadings
            .iter()
            .enumerate()
            .map(|(d, per_s)| {
                per_s
                    .iter()
                    .map(|b| {
                        let mut full = Array2::zeros((self.views[d].variables.len(), b.ncols()));
                        for (r, &j) in self.columns[d].iter().enumerate() {
                            full.row_mut(j).assign(&b.row(r));
                        }
                        full
                    })
                    .collect()
            })
            .collect()
    }

    /// Transforms test data like the training data and keeps the model's
    /// columns. View and subgroup names and variable names must match.
    pub fn prepare(&self, data: &MultiViewDataset) -> Result<MultiViewDataset> {
        let names: Vec<&str> = data.subgroups.iter().map(|s| s.name.as_str()).collect();
        if names != self.subgroups.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(HipError::Data(format!("test subgroups {names:?} differ from the model's {:?}", self.subgroups)));
        }
        if data.views.len() != self.views.len() {
            return Err(HipError::Data("test data has a different number of views".into()));
        }
        for (a, b) in data.views.iter().zip(&self.views) {
            if a.variables != b.variables {
                return Err(HipError::Data(format!("variables of view {} differ from the training data", a.name)));
            }
        }
        self.standardization.apply(data)?.select_columns(&self.columns)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub spec: SearchSpec,
    pub candidates: Vec<CandidateSummary>,
}

/// One CSV per subgroup: `sample,prediction` and `truth` when known.
pub fn write_predictions_csv(path: &Path, predictions: &Predictions, truth: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if truth.is_some() {
        w.write_record(["sample", "prediction", "truth"])?;
    } else {
        w.write_record(["sample", "prediction"])?;
    }
    for i in 0..predictions.len() {
        let mut rec = vec![i.to_string(), predictions.value(i).to_string()];
        if let Some(t) = truth {
            rec.push(t[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = MultiViewDataset {
            family: Family::Zip,
            views: vec![ViewInfo::numbered("a", 2), ViewInfo::numbered("b", 1)],
            subgroups: vec![Subgroup {
                name: "g".into(),
                views: vec![array![[0.1, -2.5e-7], [3.0, 1.0 / 3.0]], array![[1.0], [2.0]]],
                outcome: Some(OutcomeData::Counts(CountOutcome::new(array![0.0, 4.0], array![1.0, 2.5]).unwrap())),
            }],
        };
        let files = write_dataset(dir.path(), "data.json", &data).unwrap();
        let (back, read) = load_dataset(&files[0]).unwrap();
        assert_eq!(back, data);
        assert_eq!(read.len(), files.len());
    }

    #[test]
    fn missing_offset_defaults_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.csv");
        fs::write(&path, "count\n0\n3\n").unwrap();
        let o = read_outcome_csv(&path, Family::Poisson).unwrap();
        assert_eq!(o.as_counts().unwrap().offsets(), &array![1.0, 1.0]);
    }

    #[test]
    fn bad_number_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        fs::write(&path, "a,b\n1,2\n3,x\n").unwrap();
        let err = read_matrix_csv(&path).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
    }
}
