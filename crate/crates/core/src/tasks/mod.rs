//! Benchmark tasks, offline datasets and score normalization.

pub mod io;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::numeric::rng::{domain, RngStream};

/// Design space of a task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TaskKind {
    Continuous { bounds: Vec<(f64, f64)> },
    /// Fixed-length categorical sequences, encoded as concatenated one-hot blocks.
    Discrete { length: usize, categories: usize },
}

#[derive(Clone, Debug, PartialEq)]
enum Objective {
    /// Negated Levy function.
    Levy,
    /// `-‖x‖²`
    Sphere,
    /// Exhaustive score table indexed by the sequence read as a base-`categories` number.
    Lookup(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub kind: TaskKind,
    objective: Objective,
}

/// Standard Levy function; global minimum 0 at `x = (1, …, 1)`.
pub fn levy(x: &[f64]) -> f64 {
    let w: Vec<f64> = x.iter().map(|v| 1.0 + (v - 1.0) / 4.0).collect();
    let d = w.len();
    let mut s = (PI * w[0]).sin().powi(2);
    for wi in &w[..d - 1] {
        s += (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2));
    }
    let wd = w[d - 1];
    s + (wd - 1.0).powi(2) * (1.0 + (2.0 * PI * wd).sin().powi(2))
}

impl TaskSpec {
    /// Inverse Levy on `[-10, 10]^dim` (maximize `-levy(x)`).
    pub fn levy(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("levy task needs dim >= 1"));
        }
        Ok(Self {
            name: "levy".into(),
            kind: TaskKind::Continuous {
                bounds: vec![(-10.0, 10.0); dim],
            },
            objective: Objective::Levy,
        })
    }

    /// `-‖x‖²` on `[-bound, bound]^dim`.
    pub fn sphere(dim: usize, bound: f64) -> Result<Self> {
        if dim == 0 || !(bound > 0.0) {
            return Err(invalid("sphere task needs dim >= 1 and bound > 0"));
        }
        Ok(Self {
            name: "sphere".into(),
            kind: TaskKind::Continuous {
                bounds: vec![(-bound, bound); dim],
            },
            objective: Objective::Sphere,
        })
    }

    /// Categorical lookup task with a seeded score table. Scores are an
    /// additive per-position preference plus a smaller interaction term.
    pub fn lookup(length: usize, categories: usize, seed: u64) -> Result<Self> {
        if length == 0 || categories < 2 {
            return Err(invalid("lookup task needs length >= 1 and >= 2 categories"));
        }
        let size = (categories as u64)
            .checked_pow(length as u32)
            .filter(|&s| s <= 1 << 22)
            .ok_or_else(|| invalid("lookup table too large"))? as usize;
        let mut rng = RngStream::derive(seed, domain::TASK_TABLE, 0);
        let prefs = rng.gaussian(length * categories);
        let table = (0..size)
            .map(|idx| {
                let seq = index_to_sequence(idx, length, categories);
                let additive: f64 = seq.iter().enumerate().map(|(p, &c)| prefs[p * categories + c]).sum();
                additive + 0.5 * rng.normal()
            })
            .collect();
        Ok(Self {
            name: "lookup".into(),
            kind: TaskKind::Discrete { length, categories },
            objective: Objective::Lookup(table),
        })
    }

    /// Builds a task from its config name: `levy`, `sphere` or `lookup`.
    pub fn by_name(name: &str, dim: usize, seed: u64) -> Result<Self> {
        match name {
            "levy" => Self::levy(dim),
            "sphere" => Self::sphere(dim, 2.0),
            "lookup" => Self::lookup(dim, 4, seed),
            other => Err(invalid(format!("unknown task {other:?} (expected levy, sphere or lookup)"))),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, TaskKind::Discrete { .. })
    }

    /// Length of the design vector the models see.
    pub fn dim(&self) -> usize {
        match &self.kind {
            TaskKind::Continuous { bounds } => bounds.len(),
            TaskKind::Discrete { length, categories } => length * categories,
        }
    }

    /// Ground-truth score. Continuous designs are clamped into bounds first;
    /// discrete designs are decoded blockwise by argmax.
    pub fn oracle(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(shape(format!(
                "task {} expects designs of length {}, got {}",
                self.name,
                self.dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite(format!("design passed to {} oracle", self.name)));
        }
        match (&self.kind, &self.objective) {
            (TaskKind::Continuous { bounds }, obj) => {
                let clamped: Vec<f64> = x.iter().zip(bounds).map(|(&v, &(lo, hi))| v.clamp(lo, hi)).collect();
                if clamped != x {
                    log::debug!("{}: design clamped into bounds before scoring", self.name);
                }
                Ok(match obj {
                    Objective::Levy => -levy(&clamped),
                    Objective::Sphere => -clamped.iter().map(|v| v * v).sum::<f64>(),
                    Objective::Lookup(_) => unreachable!("lookup is discrete"),
                })
            }
            (TaskKind::Discrete { categories, .. }, Objective::Lookup(table)) => {
                let seq = self.decode(x)?;
                Ok(table[sequence_to_index(&seq, *categories)])
            }
            _ => unreachable!("objective matches kind by construction"),
        }
    }

    /// Uniform random design: uniform in bounds, or uniform categories one-hot encoded.
    pub fn sample_design(&self, rng: &mut RngStream) -> Vec<f64> {
        match &self.kind {
            TaskKind::Continuous { bounds } => bounds.iter().map(|&(lo, hi)| rng.uniform(lo, hi)).collect(),
            TaskKind::Discrete { length, categories } => {
                let seq: Vec<usize> = (0..*length).map(|_| rng.below(*categories)).collect();
                self.encode(&seq).expect("valid sequence")
            }
        }
    }

    /// Concatenated one-hot encoding of a categorical sequence.
    pub fn encode(&self, seq: &[usize]) -> Result<Vec<f64>> {
        let TaskKind::Discrete { length, categories } = self.kind else {
            return Err(invalid(format!("task {} is continuous", self.name)));
        };
        if seq.len() != length {
            return Err(shape(format!("sequence of length {} for a length-{length} task", seq.len())));
        }
        let mut x = vec![0.0; length * categories];
        for (p, &c) in seq.iter().enumerate() {
            if c >= categories {
                return Err(invalid(format!("category {c} at position {p} (only {categories})")));
            }
            x[p * categories + c] = 1.0;
        }
        Ok(x)
    }

    /// Blockwise argmax; ties go to the lowest index.
    pub fn decode(&self, x: &[f64]) -> Result<Vec<usize>> {
        let TaskKind::Discrete { length, categories } = self.kind else {
            return Err(invalid(format!("task {} is continuous", self.name)));
        };
        if x.len() != length * categories {
            return Err(shape(format!(
                "one-hot design of length {}, expected {}",
                x.len(),
                length * categories
            )));
        }
        Ok(x.chunks_exact(categories)
            .map(|block| {
                let mut best = 0;
                for (c, &v) in block.iter().enumerate() {
                    if v > block[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }

    /// Every sequence of a discrete task in index order.
    pub fn enumerate_sequences(&self) -> Option<Vec<Vec<usize>>> {
        let TaskKind::Discrete { length, categories } = self.kind else {
            return None;
        };
        let size = categories.pow(length as u32);
        Some((0..size).map(|i| index_to_sequence(i, length, categories)).collect())
    }
}

fn index_to_sequence(mut idx: usize, length: usize, categories: usize) -> Vec<usize> {
    let mut seq = vec![0; length];
    for p in (0..length).rev() {
        seq[p] = idx % categories;
        idx /= categories;
    }
    seq
}

fn sequence_to_index(seq: &[usize], categories: usize) -> usize {
    seq.iter().fold(0, |acc, &c| acc * categories + c)
}

/// `(y - y_min) / (y_max - y_min)`; may exceed 1 for designs better than the dataset best.
pub fn normalize_score(y: f64, y_min: f64, y_max: f64) -> Result<f64> {
    if !(y_max > y_min) {
        return Err(Error::Degenerate(format!(
            "normalization bounds y_min = {y_min}, y_max = {y_max}"
        )));
    }
    Ok((y - y_min) / (y_max - y_min))
}

pub fn denormalize_score(y_norm: f64, y_min: f64, y_max: f64) -> f64 {
    y_min + y_norm * (y_max - y_min)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredDesign {
    pub x: Vec<f64>,
    pub y_raw: f64,
    pub y_norm: f64,
}

/// Designs with raw and normalized scores. `y_min`/`y_max` are the offline
/// extremes and are carried unchanged into derived datasets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub task: String,
    pub items: Vec<ScoredDesign>,
    pub y_min: f64,
    pub y_max: f64,
    /// Labels are surrogate predictions rather than oracle scores.
    pub predicted: bool,
}

impl Dataset {
    /// Dataset from designs and raw scores under the given bounds.
    pub fn from_raw(task: &str, xs: Vec<Vec<f64>>, ys: Vec<f64>, y_min: f64, y_max: f64) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(shape("designs and scores differ in length"));
        }
        let dim = xs.first().map_or(0, Vec::len);
        let items = xs
            .into_iter()
            .zip(ys)
            .map(|(x, y_raw)| {
                if x.len() != dim {
                    return Err(shape("designs differ in length"));
                }
                Ok(ScoredDesign {
                    y_norm: normalize_score(y_raw, y_min, y_max)?,
                    x,
                    y_raw,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            task: task.to_string(),
            items,
            y_min,
            y_max,
            predicted: false,
        })
    }

    /// Dataset whose bounds are its own score extremes.
    pub fn from_scored(task: &str, xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self> {
        let y_min = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let y_max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::from_raw(task, xs, ys, y_min, y_max)
    }

    /// Dataset labelled directly in normalized units.
    pub fn from_normalized(task: &str, xs: Vec<Vec<f64>>, y_norm: Vec<f64>, y_min: f64, y_max: f64) -> Result<Self> {
        let ys = y_norm.iter().map(|&v| denormalize_score(v, y_min, y_max)).collect();
        let mut d = Self::from_raw(task, xs, ys, y_min, y_max)?;
        for (item, v) in d.items.iter_mut().zip(y_norm) {
            item.y_norm = v;
        }
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.items.first().map_or(0, |i| i.x.len())
    }

    pub fn designs(&self) -> Vec<Vec<f64>> {
        self.items.iter().map(|i| i.x.clone()).collect()
    }

    pub fn normalized_scores(&self) -> Vec<f64> {
        self.items.iter().map(|i| i.y_norm).collect()
    }

    /// Same labels, designs replaced by `f(x)`.
    pub fn map_designs(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut out = self.clone();
        for item in &mut out.items {
            item.x = f(&item.x);
        }
        out
    }
}

/// Samples `ceil(n / keep_fraction)` uniform designs, scores them with the
/// oracle, and keeps the `n` lowest-scoring ones (in sampling order).
pub fn build_offline_dataset(task: &TaskSpec, n: usize, keep_fraction: f64, rng: &mut RngStream) -> Result<Dataset> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(invalid(format!("keep_fraction {keep_fraction} outside (0, 1]")));
    }
    if n < 10 {
        return Err(invalid(format!("offline dataset needs n >= 10, got {n}")));
    }
    let total = ((n as f64) / keep_fraction).ceil() as usize;
    let total = total.max(n);
    let xs: Vec<Vec<f64>> = (0..total).map(|_| task.sample_design(rng)).collect();
    let ys = crate::par::try_map_range(total, |i| task.oracle(&xs[i]))?;

    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| ys[a].total_cmp(&ys[b]).then(a.cmp(&b)));
    let mut keep = vec![false; total];
    for &i in &order[..n] {
        keep[i] = true;
    }
    let (kx, ky): (Vec<_>, Vec<_>) = xs
        .into_iter()
        .zip(ys)
        .zip(keep)
        .filter_map(|(pair, k)| k.then_some(pair))
        .unzip();
    let d = Dataset::from_scored(&task.name, kx, ky);
    match d {
        Err(Error::Degenerate(_)) => Err(Error::Degenerate(
            "offline dataset has a single distinct score; normalization undefined".into(),
        )),
        other => other,
    }
}

/// Per-coordinate affine standardization of designs, fitted on an offline
/// dataset. Models work in the standardized space; the oracle sees raw designs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DesignScaler {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn fit(data: &Dataset) -> Self {
        let d = data.dim();
        let n = data.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for it in &data.items {
            for (m, v) in mean.iter_mut().zip(&it.x) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for it in &data.items {
            for ((s, v), m) in var.iter_mut().zip(&it.x).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let std = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, std }
    }

    pub fn to_model(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn to_design(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levy_minimum_at_ones() {
        for d in [1, 2, 10, 60] {
            let task = TaskSpec::levy(d).unwrap();
            let y = task.oracle(&vec![1.0; d]).unwrap();
            assert!(y.abs() < 1e-15 && y <= 0.0, "d={d}: {y}");
        }
        // Any other point scores strictly lower.
        let task = TaskSpec::levy(3).unwrap();
        assert!(task.oracle(&[1.5, 0.2, -3.0]).unwrap() < -1e-3);
    }

    #[test]
    fn levy_reference_value() {
        // x = 0 => w = 0.75 everywhere:
        // sin²(0.75π) + (d-1)·0.0625·(1 + 10 sin²(0.75π + 1)) + 0.0625·(1 + sin²(1.5π))
        let d = 4;
        let w: f64 = 0.75;
        let want = (PI * w).sin().powi(2)
            + (d as f64 - 1.0) * 0.0625 * (1.0 + 10.0 * (PI * w + 1.0).sin().powi(2))
            + 0.0625 * (1.0 + (2.0 * PI * w).sin().powi(2));
        assert!((levy(&[0.0; 4]) - want).abs() < 1e-14);
    }

    #[test]
    fn sphere_at_origin() {
        let t = TaskSpec::sphere(3, 2.0).unwrap();
        assert_eq!(t.oracle(&[0.0; 3]).unwrap(), 0.0);
        // Clamped to the bound before scoring.
        assert_eq!(t.oracle(&[5.0, 0.0, 0.0]).unwrap(), -4.0);
    }

    #[test]
    fn lookup_scores_match_table_for_all_256() {
        let t = TaskSpec::lookup(4, 4, 3).unwrap();
        let Objective::Lookup(table) = &t.objective else { panic!() };
        let seqs = t.enumerate_sequences().unwrap();
        assert_eq!(seqs.len(), 256);
        for (i, s) in seqs.iter().enumerate() {
            let x = t.encode(s).unwrap();
            assert_eq!(t.oracle(&x).unwrap(), table[i]);
            assert_eq!(&t.decode(&x).unwrap(), s);
        }
    }

    #[test]
    fn encode_and_decode_examples() {
        let t = TaskSpec::lookup(2, 4, 0).unwrap();
        assert_eq!(t.encode(&[0, 3]).unwrap(), vec![1., 0., 0., 0., 0., 0., 0., 1.]);
        assert_eq!(t.decode(&[0.4, 0.35, 0.15, 0.1, 0.2, 0.2, 0.5, 0.1]).unwrap(), vec![0, 2]);
        // Ties go to the lowest index.
        assert_eq!(t.decode(&[0.3, 0.3, 0.3, 0.1, 0.0, 0.5, 0.5, 0.0]).unwrap(), vec![0, 1]);
        assert!(matches!(t.encode(&[0]), Err(Error::Shape(_))));
        assert!(matches!(t.decode(&[0.0; 3]), Err(Error::Shape(_))));
        assert!(t.encode(&[0, 4]).is_err());
    }

    #[test]
    fn normalize_endpoints_and_errors() {
        assert_eq!(normalize_score(-3.0, -3.0, 5.0).unwrap(), 0.0);
        assert_eq!(normalize_score(5.0, -3.0, 5.0).unwrap(), 1.0);
        assert!(normalize_score(6.0, -3.0, 5.0).unwrap() > 1.0);
        assert!(matches!(normalize_score(1.0, 2.0, 2.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn offline_dataset_keep_all() {
        let t = TaskSpec::sphere(2, 1.0).unwrap();
        let d = build_offline_dataset(&t, 50, 1.0, &mut RngStream::new(0, 1)).unwrap();
        assert_eq!(d.len(), 50);
        // Same draws as sampling directly.
        let mut rng = RngStream::new(0, 1);
        for it in &d.items {
            assert_eq!(it.x, t.sample_design(&mut rng));
        }
        let max = d.items.iter().map(|i| i.y_raw).fold(f64::MIN, f64::max);
        assert_eq!(max, d.y_max);
        assert!(d.items.iter().any(|i| i.y_norm == 1.0));
        assert!(d.items.iter().any(|i| i.y_norm == 0.0));
    }

    #[test]
    fn offline_dataset_filters_below_median() {
        let t = TaskSpec::levy(3).unwrap();
        let d = build_offline_dataset(&t, 100, 0.5, &mut RngStream::new(4, 1)).unwrap();
        assert_eq!(d.len(), 100);
        let mut rng = RngStream::new(4, 1);
        let mut all: Vec<f64> = (0..200).map(|_| t.oracle(&t.sample_design(&mut rng)).unwrap()).collect();
        let best = all.iter().copied().fold(f64::MIN, f64::max);
        all.sort_by(f64::total_cmp);
        let median = 0.5 * (all[99] + all[100]);
        assert!(d.y_max <= median);
        assert!(d.items.iter().all(|i| i.y_raw < best));
    }

    #[test]
    fn offline_dataset_is_deterministic() {
        let t = TaskSpec::levy(4).unwrap();
        let a = build_offline_dataset(&t, 40, 0.9, &mut RngStream::new(9, 1)).unwrap();
        let b = build_offline_dataset(&t, 40, 0.9, &mut RngStream::new(9, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn offline_dataset_errors() {
        let t = TaskSpec::levy(2).unwrap();
        let mut rng = RngStream::new(0, 0);
        assert!(build_offline_dataset(&t, 5, 0.9, &mut rng).is_err());
        assert!(build_offline_dataset(&t, 50, 0.0, &mut rng).is_err());
        assert!(build_offline_dataset(&t, 50, 1.5, &mut rng).is_err());
        let e = Dataset::from_scored("flat", vec![vec![0.0]; 3], vec![1.0; 3]).unwrap_err();
        assert!(matches!(e, Error::Degenerate(_)), "{e}");
    }

    #[test]
    fn scaler_round_trip() {
        let t = TaskSpec::levy(3).unwrap();
        let d = build_offline_dataset(&t, 200, 1.0, &mut RngStream::new(1, 1)).unwrap();
        let s = DesignScaler::fit(&d);
        let x = &d.items[5].x;
        let back = s.to_design(&s.to_model(x));
        for (a, b) in back.iter().zip(x) {
            assert!((a - b).abs() < 1e-12);
        }
        let z = d.map_designs(|x| s.to_model(x));
        let m0: f64 = z.items.iter().map(|i| i.x[0]).sum::<f64>() / z.len() as f64;
        assert!(m0.abs() < 1e-12);
    }
}
