//! Evaluation metrics computed from hard predictions, plus CSV emitters.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::datagen::{format_f64, Dataset};
use crate::error::{Error, Result};
use crate::math::{RngStream, Tensor};
use crate::models::ModelParams;
use crate::trainers::TrainRun;

fn check_dims(model: &ModelParams, data: &Dataset) -> Result<()> {
    if model.input_dim != data.dim() {
        return Err(Error::Shape { op: "eval", shapes: vec![vec![model.input_dim], vec![data.dim()]] });
    }
    Ok(())
}

fn hits(pred: &[usize], y: &[usize]) -> usize {
    pred.iter().zip(y).filter(|(p, y)| p == y).count()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupAccuracy {
    pub group: usize,
    pub count: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub groups: Vec<GroupAccuracy>,
    pub worst_group: f64,
    /// False when the data had no group annotations and a single group was used.
    pub grouped: bool,
}

pub fn metrics(model: &ModelParams, data: &Dataset) -> Result<MetricsReport> {
    check_dims(model, data)?;
    metrics_from_predictions(&model.predict(&data.x)?, data)
}

pub fn metrics_from_predictions(pred: &[usize], data: &Dataset) -> Result<MetricsReport> {
    if pred.len() != data.len() {
        return Err(Error::Shape { op: "metrics", shapes: vec![vec![pred.len()], vec![data.len()]] });
    }
    if data.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty dataset".into()));
    }
    let accuracy = hits(pred, &data.y) as f64 / data.len() as f64;
    let Some(groups) = &data.groups else {
        return Ok(MetricsReport {
            accuracy,
            groups: vec![GroupAccuracy { group: 0, count: data.len(), accuracy }],
            worst_group: accuracy,
            grouped: false,
        });
    };
    let k = groups.iter().max().map_or(0, |g| g + 1);
    let mut count = vec![0usize; k];
    let mut correct = vec![0usize; k];
    for i in 0..data.len() {
        count[groups[i]] += 1;
        correct[groups[i]] += usize::from(pred[i] == data.y[i]);
    }
    let per: Vec<GroupAccuracy> = (0..k)
        .filter(|&g| count[g] > 0)
        .map(|g| GroupAccuracy { group: g, count: count[g], accuracy: correct[g] as f64 / count[g] as f64 })
        .collect();
    let worst_group = per.iter().map(|g| g.accuracy).fold(f64::INFINITY, f64::min);
    Ok(MetricsReport { accuracy, groups: per, worst_group, grouped: true })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapReport {
    pub iid_accuracy: f64,
    pub ood_accuracy: f64,
    /// `100·(ood − iid)`, in percentage points.
    pub delta_gap: f64,
}

impl GapReport {
    pub fn from_accuracies(iid: f64, ood: f64) -> Self {
        GapReport { iid_accuracy: iid, ood_accuracy: ood, delta_gap: 100.0 * (ood - iid) }
    }
}

pub fn delta_gap(model: &ModelParams, iid: &Dataset, ood: &Dataset) -> Result<GapReport> {
    Ok(GapReport::from_accuracies(metrics(model, iid)?.accuracy, metrics(model, ood)?.accuracy))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShapeBias {
    pub value: f64,
    pub complex_matches: usize,
    pub simple_matches: usize,
    pub neither: usize,
}

impl ShapeBias {
    pub fn from_counts(complex_matches: usize, simple_matches: usize, neither: usize) -> Result<Self> {
        let total = complex_matches + simple_matches;
        if total == 0 {
            return Err(Error::UndefinedMetric("no prediction matches either cue".into()));
        }
        Ok(ShapeBias { value: 100.0 * complex_matches as f64 / total as f64, complex_matches, simple_matches, neither })
    }

    /// Share of cue-consistent predictions that follow the simple cue.
    pub fn texture_fraction(&self) -> f64 {
        100.0 * self.simple_matches as f64 / (self.complex_matches + self.simple_matches) as f64
    }
}

/// Shape-bias analog on cue-conflict data: predictions matching the complex
/// cue label `lb` over predictions matching either `lb` or the simple `la`.
pub fn shape_bias(model: &ModelParams, conflict: &Dataset) -> Result<ShapeBias> {
    check_dims(model, conflict)?;
    shape_bias_from_predictions(&model.predict(&conflict.x)?, conflict)
}

pub fn shape_bias_from_predictions(pred: &[usize], conflict: &Dataset) -> Result<ShapeBias> {
    let la = conflict.extra("la").ok_or_else(|| Error::validation("la", "conflict data needs simple-cue labels"))?;
    let lb = conflict.extra("lb").ok_or_else(|| Error::validation("lb", "conflict data needs complex-cue labels"))?;
    let (mut complex, mut simple, mut neither) = (0, 0, 0);
    for (i, &p) in pred.iter().enumerate() {
        if la[i] == lb[i] {
            return Err(Error::validation("la", format!("row {i} has agreeing cues")));
        }
        match p as i64 {
            v if v == lb[i] => complex += 1,
            v if v == la[i] => simple += 1,
            _ => neither += 1,
        }
    }
    ShapeBias::from_counts(complex, simple, neither)
}

/// Accuracy after permuting column `coord` across samples.
pub fn randomize_coord_accuracy(model: &ModelParams, data: &Dataset, coord: usize, seed: u64) -> Result<f64> {
    check_dims(model, data)?;
    if coord >= data.dim() {
        return Err(Error::validation("coord", format!("{coord} out of range for dimension {}", data.dim())));
    }
    let perm = RngStream::new(seed).permutation(data.len());
    let column: Vec<f64> = perm.iter().map(|&i| data.x.get(i, coord)).collect();
    metrics(model, &data.with_column(coord, &column)).map(|m| m.accuracy)
}

const SCAN_STEPS: usize = 64;
const BISECTIONS: usize = 48;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginReport {
    pub margins: Vec<f64>,
    pub mean: f64,
    /// Correct samples for which no axis-aligned flip was found within the
    /// search radius; their margin is recorded as that radius.
    pub censored: usize,
    pub misclassified: usize,
}

/// Smallest axis-aligned perturbation size (ℓ1 norm of a single-coordinate
/// move) that flips each sample's hard prediction. Each coordinate and sign
/// is scanned up to the data's range on that coordinate in `SCAN_STEPS`
/// steps, and the first flip is refined by bisection. For linear models this
/// equals `min_j |w·x + b| / |w_j|` when that is within range; otherwise it is
/// an upper bound on the axis-aligned margin. Misclassified samples get 0.
pub fn l1_flip_margins(model: &ModelParams, data: &Dataset) -> Result<MarginReport> {
    check_dims(model, data)?;
    let (n, d) = (data.len(), data.dim());
    if n == 0 {
        return Err(Error::UndefinedMetric("margins of an empty dataset".into()));
    }
    let pred = model.predict(&data.x)?;
    let correct: Vec<usize> = (0..n).filter(|&i| pred[i] == data.y[i]).collect();
    let mut best = vec![f64::INFINITY; n];
    let mut limit = 0.0f64;
    for j in 0..d {
        let col = (0..n).map(|i| data.x.get(i, j));
        let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let radius = hi - lo;
        limit = limit.max(radius);
        if radius <= 0.0 {
            continue;
        }
        for sign in [1.0, -1.0] {
            let shifted = |rows: &[usize], t: &[f64]| -> Result<Vec<usize>> {
                let mut x = data.x.select_rows(rows);
                for (r, &ti) in t.iter().enumerate() {
                    x.data_mut()[r * d + j] += sign * ti;
                }
                model.predict(&x)
            };
            // coarse scan: first step at which the prediction changes
            let mut bracket: Vec<Option<(f64, f64)>> = vec![None; correct.len()];
            for k in 1..=SCAN_STEPS {
                let open: Vec<usize> = (0..correct.len()).filter(|&c| bracket[c].is_none()).collect();
                if open.is_empty() {
                    break;
                }
                let t = radius * k as f64 / SCAN_STEPS as f64;
                let rows: Vec<usize> = open.iter().map(|&c| correct[c]).collect();
                let p = shifted(&rows, &vec![t; rows.len()])?;
                for (o, &c) in open.iter().enumerate() {
                    if p[o] != pred[correct[c]] {
                        bracket[c] = Some((t - radius / SCAN_STEPS as f64, t));
                    }
                }
            }
            let found: Vec<usize> = (0..correct.len()).filter(|&c| bracket[c].is_some()).collect();
            if found.is_empty() {
                continue;
            }
            let rows: Vec<usize> = found.iter().map(|&c| correct[c]).collect();
            let mut lo_t: Vec<f64> = found.iter().map(|&c| bracket[c].unwrap().0).collect();
            let mut hi_t: Vec<f64> = found.iter().map(|&c| bracket[c].unwrap().1).collect();
            for _ in 0..BISECTIONS {
                let mid: Vec<f64> = lo_t.iter().zip(&hi_t).map(|(a, b)| 0.5 * (a + b)).collect();
                let p = shifted(&rows, &mid)?;
                for f in 0..found.len() {
                    if p[f] != pred[rows[f]] {
                        hi_t[f] = mid[f];
                    } else {
                        lo_t[f] = mid[f];
                    }
                }
            }
            for (f, &i) in rows.iter().enumerate() {
                best[i] = best[i].min(hi_t[f]);
            }
        }
    }
    let mut censored = 0;
    let margins: Vec<f64> = (0..n)
        .map(|i| {
            if pred[i] != data.y[i] {
                0.0
            } else if best[i].is_finite() {
                best[i]
            } else {
                censored += 1;
                limit
            }
        })
        .collect();
    let mean = margins.iter().sum::<f64>() / n as f64;
    Ok(MarginReport { margins, mean, censored, misclassified: n - correct.len() })
}

/// Margin of a single sample; see [`l1_flip_margins`].
pub fn l1_flip_margin(model: &ModelParams, data: &Dataset, index: usize) -> Result<f64> {
    if index >= data.len() {
        return Err(Error::validation("index", format!("{index} out of range for {} samples", data.len())));
    }
    // the search radius comes from the full data, so keep every row
    let report = l1_flip_margins(model, data)?;
    Ok(report.margins[index])
}

/// Hard predictions over a 2-D slice through coordinates `(cx, cy)` with all
/// other inputs fixed at 0. `values` is row-major with rows along `ys`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionGrid {
    pub cx: usize,
    pub cy: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<usize>,
}

impl DecisionGrid {
    pub fn at(&self, row: usize, col: usize) -> usize {
        self.values[row * self.xs.len() + col]
    }

    /// CSV matrix: comment lines with the axis metadata, a header of x
    /// values, then one line per y value.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "# x axis: input coordinate {}; y axis: input coordinate {}", self.cx, self.cy)?;
        writeln!(f, "# other coordinates fixed at 0")?;
        let header: Vec<String> = self.xs.iter().map(|&v| format_f64(v)).collect();
        writeln!(f, "y\\x,{}", header.join(","))?;
        for (r, &y) in self.ys.iter().enumerate() {
            let row: Vec<String> = (0..self.xs.len()).map(|c| self.at(r, c).to_string()).collect();
            writeln!(f, "{},{}", format_f64(y), row.join(","))?;
        }
        f.flush()?;
        Ok(())
    }
}

pub fn decision_grid(model: &ModelParams, bounds: [(f64, f64); 2], resolution: usize) -> Result<DecisionGrid> {
    decision_grid_on(model, (0, 1), bounds, resolution)
}

pub fn decision_grid_on(
    model: &ModelParams,
    coords: (usize, usize),
    bounds: [(f64, f64); 2],
    resolution: usize,
) -> Result<DecisionGrid> {
    let d = model.input_dim;
    if d < 2 || coords.0 >= d || coords.1 >= d || coords.0 == coords.1 {
        return Err(Error::validation("coords", format!("{coords:?} is not a valid pair for dimension {d}")));
    }
    if resolution < 2 {
        return Err(Error::validation("resolution", "need at least 2 points per axis"));
    }
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        (0..resolution).map(|k| lo + (hi - lo) * k as f64 / (resolution - 1) as f64).collect()
    };
    let (xs, ys) = (axis(bounds[0]), axis(bounds[1]));
    let mut data = vec![0.0; resolution * resolution * d];
    for (r, &y) in ys.iter().enumerate() {
        for (c, &x) in xs.iter().enumerate() {
            let row = (r * resolution + c) * d;
            data[row + coords.0] = x;
            data[row + coords.1] = y;
        }
    }
    let values = model.predict(&Tensor::matrix(resolution * resolution, d, data)?)?;
    Ok(DecisionGrid { cx: coords.0, cy: coords.1, xs, ys, values })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CmiTrajectory {
    pub points: Vec<(usize, f64)>,
    pub first: f64,
    pub last: f64,
}

pub fn cmi_trajectory(run: &TrainRun) -> Result<CmiTrajectory> {
    let points: Vec<(usize, f64)> = run
        .log
        .iter()
        .map(|e| e.probe_hard_cmi.map(|v| (e.epoch, v)))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::validation("log", "run did not log probe CMI on every epoch"))?;
    let (first, last) = match (points.first(), points.last()) {
        (Some(a), Some(b)) => (a.1, b.1),
        _ => return Err(Error::validation("log", "run has no epochs")),
    };
    Ok(CmiTrajectory { points, first, last })
}

/// Writes a CSV table with a one-line header.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
