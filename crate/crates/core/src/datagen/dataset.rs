use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::math::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    /// Generator spec that produced the data.
    pub spec: serde_json::Value,
    pub spec_hash: String,
    pub seed: u64,
    /// Per-sample integer side columns (e.g. the ±1 label and spurious
    /// attribute of the Gaussian family, or cue labels of conflict data).
    #[serde(default)]
    pub extras: BTreeMap<String, Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub y: Vec<usize>,
    pub classes: usize,
    pub groups: Option<Vec<usize>>,
    pub envs: Option<Vec<usize>>,
    pub meta: DatasetMeta,
}

/// Hex SHA-256 of the canonical JSON encoding of `value`.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable value");
    hex::encode(Sha256::digest(bytes))
}

impl DatasetMeta {
    pub fn new<S: Serialize>(name: &str, spec: &S, seed: u64) -> Self {
        DatasetMeta {
            name: name.to_string(),
            spec: serde_json::to_value(spec).expect("serializable spec"),
            spec_hash: hash_json(spec),
            seed,
            extras: BTreeMap::new(),
        }
    }
}

impl Dataset {
    pub fn new(x: Tensor, y: Vec<usize>, classes: usize, meta: DatasetMeta) -> Result<Self> {
        let ds = Dataset { x, y, classes, groups: None, envs: None, meta };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_groups(mut self, groups: Vec<usize>) -> Result<Self> {
        self.groups = Some(groups);
        self.validate()?;
        Ok(self)
    }

    pub fn with_envs(mut self, envs: Vec<usize>) -> Result<Self> {
        self.envs = Some(envs);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if n == 0 {
            return Err(Error::validation("n", "dataset must contain at least one sample"));
        }
        if self.x.shape().len() != 2 || self.x.rows() != n {
            return Err(Error::Shape { op: "dataset", shapes: vec![self.x.shape().to_vec(), vec![n]] });
        }
        if self.classes < 2 {
            return Err(Error::validation("classes", "need at least two classes"));
        }
        if let Some(bad) = self.y.iter().find(|&&y| y >= self.classes) {
            return Err(Error::validation("y", format!("label {bad} outside 0..{}", self.classes)));
        }
        for (name, col) in [("groups", &self.groups), ("envs", &self.envs)] {
            if col.as_ref().is_some_and(|c| c.len() != n) {
                return Err(Error::validation(name, "annotation length differs from sample count"));
            }
        }
        if let Some((name, _)) = self.meta.extras.iter().find(|(_, v)| v.len() != n) {
            return Err(Error::validation(name.clone(), "extra column length differs from sample count"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn extra(&self, key: &str) -> Option<&[i64]> {
        self.meta.extras.get(key).map(Vec::as_slice)
    }

    /// Subset of rows, in the given order. Annotations follow their rows.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let pick = |v: &Vec<usize>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let mut meta = self.meta.clone();
        for col in meta.extras.values_mut() {
            *col = idx.iter().map(|&i| col[i]).collect();
        }
        Dataset {
            x: self.x.select_rows(idx),
            y: pick(&self.y),
            classes: self.classes,
            groups: self.groups.as_ref().map(pick),
            envs: self.envs.as_ref().map(pick),
            meta,
        }
    }

    /// Copy with column `coord` replaced by `values`.
    pub fn with_column(&self, coord: usize, values: &[f64]) -> Dataset {
        let mut out = self.clone();
        let d = self.dim();
        for (i, v) in values.iter().enumerate() {
            out.x.data_mut()[i * d + coord] = *v;
        }
        out
    }

    /// Write `<stem>.csv` and the `<stem>.json` sidecar into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        self.write_csv(&csv_path)?;
        let sidecar = Sidecar { classes: self.classes, dim: self.dim(), meta: self.meta.clone() };
        let mut w = BufWriter::new(File::create(&json_path)?);
        serde_json::to_writer_pretty(&mut w, &sidecar)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(vec![csv_path, json_path])
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let d = self.dim();
        let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        if self.groups.is_some() {
            header.push("group".into());
        }
        if self.envs.is_some() {
            header.push("env".into());
        }
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            record.clear();
            record.extend(self.x.row(i).iter().map(|v| format_f64(*v)));
            record.push(self.y[i].to_string());
            if let Some(g) = &self.groups {
                record.push(g[i].to_string());
            }
            if let Some(e) = &self.envs {
                record.push(e[i].to_string());
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Dataset> {
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        for p in [&csv_path, &json_path] {
            if !p.exists() {
                return Err(Error::Missing(p.clone()));
            }
        }
        let sidecar: Sidecar = serde_json::from_reader(File::open(&json_path)?)?;
        let mut r = csv::Reader::from_path(&csv_path)?;
        let header = r.headers()?.clone();
        let d = sidecar.dim;
        let col = |name: &str| header.iter().position(|h| h == name);
        let y_col = col("y").ok_or_else(|| Error::validation("y", "missing label column"))?;
        let (g_col, e_col) = (col("group"), col("env"));
        let parse_usize = |s: &str, field: &str| {
            s.parse::<usize>().map_err(|e| Error::validation(field, format!("{s:?}: {e}")))
        };
        let (mut xs, mut ys, mut gs, mut es) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            for j in 0..d {
                let s = &rec[j];
                xs.push(s.parse::<f64>().map_err(|e| Error::validation(format!("x{j}"), format!("{s:?}: {e}")))?);
            }
            ys.push(parse_usize(&rec[y_col], "y")?);
            if let Some(c) = g_col {
                gs.push(parse_usize(&rec[c], "group")?);
            }
            if let Some(c) = e_col {
                es.push(parse_usize(&rec[c], "env")?);
            }
        }
        let n = ys.len();
        let mut ds = Dataset::new(Tensor::matrix(n, d, xs)?, ys, sidecar.classes, sidecar.meta)?;
        if g_col.is_some() {
            ds = ds.with_groups(gs)?;
        }
        if e_col.is_some() {
            ds = ds.with_envs(es)?;
        }
        Ok(ds)
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    classes: usize,
    dim: usize,
    meta: DatasetMeta,
}

/// Scientific notation with 17 significant digits; parses back to the same bits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}
