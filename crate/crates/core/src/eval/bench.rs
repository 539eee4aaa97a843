//! Ablation and noise-level sweep runners.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{mean, std_error, Metric, MethodResult};
use crate::editing::EditConfig;
use crate::error::{invalid, Error, Result};
use crate::pipeline::{edit, fit_diffusion, run_seed, sample_prior, score_candidates, PipelineConfig, SeedRun};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Diffusion on the synthetic data, then editing.
    Full,
    /// Diffusion on the offline data only, then editing.
    NoPseudoTarget,
    /// Diffusion on the synthetic data, sampled from the prior.
    NoEditing,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoPseudoTarget, Variant::NoEditing];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoPseudoTarget => "no_pseudo_target",
            Variant::NoEditing => "no_editing",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| invalid(format!("unknown variant {s:?} (full, no_pseudo_target, no_editing)")))
    }
}

/// Normalized candidate scores of one variant for an already-run seed.
pub fn variant_scores(cfg: &PipelineConfig, run: &SeedRun, variant: Variant) -> Result<Vec<f64>> {
    let ecfg = cfg.edit_config();
    let rows = match variant {
        Variant::Full => return Ok(run.candidates.iter().map(|r| r.y_norm).collect()),
        Variant::NoPseudoTarget => {
            let (net, _) = fit_diffusion(cfg, &run.offline.model_data, run.seed)?;
            score_candidates(&run.offline, &edit(&net, &run.offline, &ecfg, run.seed)?)?
        }
        Variant::NoEditing => score_candidates(&run.offline, &sample_prior(&run.network, &run.offline, &ecfg, run.seed)?)?,
    };
    Ok(rows.into_iter().map(|r| r.y_norm).collect())
}

/// Every variant over the same seed runs, so all share the offline data,
/// surrogate and synthetic data of each seed.
pub fn ablations_from_runs(cfg: &PipelineConfig, runs: &[SeedRun], variants: &[Variant]) -> Result<Vec<MethodResult>> {
    let seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
    let task = runs.first().map(|r| r.offline.task.name.clone()).unwrap_or_default();
    variants
        .iter()
        .map(|&v| {
            let scores = crate::par::try_map_range(runs.len(), |i| variant_scores(cfg, &runs[i], v))?;
            MethodResult::new(v.name(), &task, seeds.clone(), scores)
        })
        .collect()
}

fn run_seeds(cfg: &PipelineConfig, seeds: &[u64]) -> Result<Vec<SeedRun>> {
    crate::par::try_map_range(seeds.len(), |i| run_seed(cfg, seeds[i]))
}

pub fn run_ablation(cfg: &PipelineConfig, variant: Variant, seeds: &[u64]) -> Result<MethodResult> {
    let runs = run_seeds(cfg, seeds)?;
    Ok(ablations_from_runs(cfg, &runs, &[variant])?.remove(0))
}

pub fn run_ablations(cfg: &PipelineConfig, seeds: &[u64]) -> Result<Vec<MethodResult>> {
    let runs = run_seeds(cfg, seeds)?;
    ablations_from_runs(cfg, &runs, &Variant::ALL)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    /// Mean over seeds of the per-seed maximum normalized score.
    pub mean: f64,
    pub stderr: f64,
    pub per_seed: Vec<f64>,
}

/// Re-edits with each `m` using the trained networks of `runs`; nothing is
/// retrained.
pub fn sweep_m_from_runs(cfg: &PipelineConfig, runs: &[SeedRun], ms: &[usize]) -> Result<Vec<SweepRow>> {
    if runs.is_empty() {
        return Err(invalid("sweep needs at least one seed"));
    }
    crate::par::try_map_range(ms.len(), |j| {
        let ecfg = EditConfig { m: ms[j], ..cfg.edit_config() };
        let per_seed = runs
            .iter()
            .map(|run| {
                let rows = score_candidates(&run.offline, &edit(&run.network, &run.offline, &ecfg, run.seed)?)?;
                Metric::Max.eval(&rows.iter().map(|r| r.y_norm).collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepRow {
            m: ms[j],
            mean: mean(&per_seed),
            stderr: std_error(&per_seed),
            per_seed,
        })
    })
}

pub fn sweep_m(cfg: &PipelineConfig, ms: &[usize], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    let runs = run_seeds(cfg, seeds)?;
    sweep_m_from_runs(cfg, &runs, ms)
}
