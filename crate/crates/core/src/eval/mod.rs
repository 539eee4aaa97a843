//! Evaluation protocol: per-seed percentile metrics, ranks across tasks,
//! pairwise significance, and the ablation and noise-level runners.

pub mod bench;
pub mod stats;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use bench::{run_ablation, run_ablations, ablations_from_runs, sweep_m, sweep_m_from_runs, SweepRow, Variant};
pub use stats::{mean, percentile_score, proportion_above_best, std_error, welch_t_test, WelchResult};

use crate::error::{invalid, Error, Result};

/// Oracle-scored normalized candidates of one method on one task, one list
/// per seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub task: String,
    pub seeds: Vec<u64>,
    pub scores: Vec<Vec<f64>>,
}

impl MethodResult {
    pub fn new(method: &str, task: &str, seeds: Vec<u64>, scores: Vec<Vec<f64>>) -> Result<Self> {
        if seeds.len() != scores.len() || seeds.is_empty() {
            return Err(invalid("need one nonempty score list per seed"));
        }
        let k = scores[0].len();
        if k == 0 || scores.iter().any(|s| s.len() != k) {
            return Err(invalid(format!("method {method}: every seed must contribute the same K > 0 scores")));
        }
        Ok(Self {
            method: method.to_string(),
            task: task.to_string(),
            seeds,
            scores,
        })
    }

    pub fn budget(&self) -> usize {
        self.scores[0].len()
    }

    /// The metric evaluated on each seed's candidates.
    pub fn per_seed(&self, metric: Metric) -> Result<Vec<f64>> {
        self.scores.iter().map(|s| metric.eval(s)).collect()
    }

    pub fn metric_mean(&self, metric: Metric) -> Result<f64> {
        Ok(mean(&self.per_seed(metric)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// 100th percentile.
    Max,
    /// 50th percentile.
    Median,
    /// Fraction strictly above the offline best (normalized 1.0).
    Proportion,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Max, Metric::Median, Metric::Proportion];

    pub fn eval(self, scores: &[f64]) -> Result<f64> {
        match self {
            Metric::Max => percentile_score(scores, 100.0),
            Metric::Median => percentile_score(scores, 50.0),
            Metric::Proportion => proportion_above_best(scores, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Max => "max",
            Metric::Median => "median",
            Metric::Proportion => "proportion",
        }
    }
}

/// Ranks of one task's values: descending, rank 1 best, ties share the
/// lower rank.
pub fn rank_values(values: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|v| 1 + values.iter().filter(|w| *w > v).count())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub method: String,
    pub ranks: Vec<usize>,
    pub mean_rank: f64,
    pub median_rank: f64,
}

/// Ranks from a table `values[method][task]`.
pub fn rank_table(methods: &[String], values: &[Vec<f64>]) -> Result<Vec<RankSummary>> {
    if methods.len() != values.len() || methods.is_empty() {
        return Err(invalid("rank table needs one row per method"));
    }
    let tasks = values[0].len();
    if tasks == 0 || values.iter().any(|r| r.len() != tasks) {
        return Err(invalid("every method needs a value for every task"));
    }
    let mut ranks = vec![Vec::with_capacity(tasks); methods.len()];
    for t in 0..tasks {
        let col: Vec<f64> = values.iter().map(|r| r[t]).collect();
        if col.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite(format!("NaN metric in task column {t}")));
        }
        for (m, r) in rank_values(&col).into_iter().enumerate() {
            ranks[m].push(r);
        }
    }
    methods
        .iter()
        .zip(ranks)
        .map(|(name, r)| {
            let as_f: Vec<f64> = r.iter().map(|&v| v as f64).collect();
            Ok(RankSummary {
                method: name.clone(),
                mean_rank: mean(&as_f),
                median_rank: percentile_score(&as_f, 50.0)?,
                ranks: r,
            })
        })
        .collect()
}

/// Ranks methods per task on the seed-mean of `metric`, then aggregates
/// mean and median rank across tasks. Every method must cover the same
/// tasks; methods appear in first-seen order.
pub fn rank_methods(results: &[MethodResult], metric: Metric) -> Result<Vec<RankSummary>> {
    let mut by_method: Vec<(String, BTreeMap<String, f64>)> = Vec::new();
    for r in results {
        let v = r.metric_mean(metric)?;
        let slot = match by_method.iter().position(|(m, _)| *m == r.method) {
            Some(i) => i,
            None => {
                by_method.push((r.method.clone(), BTreeMap::new()));
                by_method.len() - 1
            }
        };
        if by_method[slot].1.insert(r.task.clone(), v).is_some() {
            return Err(invalid(format!("method {} listed twice for task {}", r.method, r.task)));
        }
    }
    let tasks: Vec<&String> = by_method.first().map(|(_, t)| t.keys().collect()).unwrap_or_default();
    for (m, t) in &by_method {
        if !t.keys().eq(tasks.iter().copied()) {
            return Err(invalid(format!("method {m} was evaluated on a different task set")));
        }
    }
    let methods: Vec<String> = by_method.iter().map(|(m, _)| m.clone()).collect();
    let values: Vec<Vec<f64>> = by_method.iter().map(|(_, t)| t.values().copied().collect()).collect();
    rank_table(&methods, &values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    pub stderr: f64,
    pub per_seed: Vec<f64>,
}

impl MetricStat {
    fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            stderr: std_error(xs),
            per_seed: xs.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub task: String,
    pub max: MetricStat,
    pub median: MetricStat,
    pub proportion: MetricStat,
}

/// Welch p-value on per-seed maxima; `None` when the test is undefined
/// (fewer than two seeds or zero variance on both sides).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub task: String,
    pub a: String,
    pub b: String,
    pub t: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub methods: Vec<MethodSummary>,
    pub pairwise: Vec<PairwiseTest>,
    pub ranks_max: Vec<RankSummary>,
    pub ranks_median: Vec<RankSummary>,
}

impl MetricsReport {
    pub fn build(results: &[MethodResult]) -> Result<Self> {
        if results.is_empty() {
            return Err(invalid("no results to report"));
        }
        let methods = results
            .iter()
            .map(|r| {
                Ok(MethodSummary {
                    method: r.method.clone(),
                    task: r.task.clone(),
                    max: MetricStat::of(&r.per_seed(Metric::Max)?),
                    median: MetricStat::of(&r.per_seed(Metric::Median)?),
                    proportion: MetricStat::of(&r.per_seed(Metric::Proportion)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut pairwise = Vec::new();
        for (i, a) in results.iter().enumerate() {
            for b in results[i + 1..].iter().filter(|b| b.task == a.task) {
                let w = welch_t_test(&a.per_seed(Metric::Max)?, &b.per_seed(Metric::Max)?).ok();
                pairwise.push(PairwiseTest {
                    task: a.task.clone(),
                    a: a.method.clone(),
                    b: b.method.clone(),
                    t: w.map(|w| w.t),
                    p: w.map(|w| w.p),
                });
            }
        }
        Ok(Self {
            methods,
            pairwise,
            ranks_max: rank_methods(results, Metric::Max)?,
            ranks_median: rank_methods(results, Metric::Median)?,
        })
    }

    pub fn p_value(&self, a: &str, b: &str) -> Option<f64> {
        self.pairwise
            .iter()
            .find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
            .and_then(|p| p.p)
    }

    /// One row per method × task × metric.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["method", "task", "metric", "mean", "stderr"])?;
        for m in &self.methods {
            for (name, s) in [("max", &m.max), ("median", &m.median), ("proportion", &m.proportion)] {
                w.write_record([&m.method, &m.task, name, &s.mean.to_string(), &s.stderr.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| invalid(format!("report json: {e}")))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Whitespace-separated `x y yerr` rows with a `#` header line.
pub fn write_plot_data(path: &Path, header: &str, rows: &[(f64, f64, f64)]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# {header}")?;
    for (x, y, e) in rows {
        writeln!(f, "{x} {y} {e}")?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(method: &str, task: &str, v: f64) -> MethodResult {
        MethodResult::new(method, task, vec![0], vec![vec![v]]).unwrap()
    }

    #[test]
    fn two_methods_one_task() {
        let r = rank_methods(&[single("a", "t", 0.9), single("b", "t", 0.5)], Metric::Max).unwrap();
        assert_eq!((r[0].ranks.clone(), r[1].ranks.clone()), (vec![1], vec![2]));
    }

    #[test]
    fn ties_share_lower_rank() {
        assert_eq!(rank_values(&[0.5, 0.5]), vec![1, 1]);
        assert_eq!(rank_values(&[0.2, 0.7, 0.7, 0.1]), vec![3, 1, 1, 4]);
    }

    #[test]
    fn mismatched_tasks_rejected() {
        let rs = [single("a", "t1", 0.9), single("b", "t2", 0.5)];
        assert!(rank_methods(&rs, Metric::Max).is_err());
        let dup = [single("a", "t1", 0.9), single("a", "t1", 0.5)];
        assert!(rank_methods(&dup, Metric::Max).is_err());
    }

    #[test]
    fn budget_invariant() {
        assert!(MethodResult::new("a", "t", vec![0, 1], vec![vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(MethodResult::new("a", "t", vec![0], vec![vec![1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn report_contents() {
        let a = MethodResult::new("a", "t", vec![0, 1, 2], vec![vec![1.2, 0.5], vec![1.1, 0.4], vec![1.3, 0.2]]).unwrap();
        let b = MethodResult::new("b", "t", vec![0, 1, 2], vec![vec![0.9, 0.5], vec![0.8, 0.4], vec![0.95, 0.2]]).unwrap();
        let rep = MetricsReport::build(&[a, b]).unwrap();
        assert!((rep.methods[0].max.mean - 1.2).abs() < 1e-12);
        assert!((rep.methods[0].max.stderr - (0.01f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((rep.methods[0].proportion.mean - 0.5).abs() < 1e-12);
        assert_eq!(rep.methods[1].proportion.mean, 0.0);
        assert!(rep.p_value("a", "b").unwrap() < 0.05);
        assert_eq!(rep.ranks_max[0].ranks, vec![1]);

        let dir = tempfile::tempdir().unwrap();
        rep.write_csv(&dir.path().join("r.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 3);
        rep.write_json(&dir.path().join("r.json")).unwrap();
        let back: MetricsReport =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
        assert_eq!(back.methods.len(), 2);
    }

    #[test]
    fn single_seed_has_no_p_value() {
        let rep = MetricsReport::build(&[single("a", "t", 1.0), single("b", "t", 0.5)]).unwrap();
        assert_eq!(rep.p_value("a", "b"), None);
    }

    #[test]
    fn plot_file_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.dat");
        write_plot_data(&p, "m max stderr", &[(0.0, 1.0, 0.0), (100.0, 1.05, 0.01)]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "# m max stderr\n0 1 0\n100 1.05 0.01\n");
    }
}
