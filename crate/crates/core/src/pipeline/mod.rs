//! In-memory stages of the two-phase method, shared by the CLI, the
//! ablation runners and the tests.
//!
//! Models work in a standardized design space (see [`DesignScaler`]);
//! candidates are mapped back to design space before the oracle scores them.

pub mod config;

pub use config::{hash_parts, PipelineConfig};

use crate::diffusion::{train_score_network, ScoreNetwork, TrainLog};
use crate::editing::{generate_candidates, generate_from_prior, EditConfig};
use crate::error::Result;
use crate::numeric::rng::{domain, RngStream};
use crate::surrogate::{build_synthetic_dataset, train_surrogate, TrainedSurrogate};
use crate::tasks::io::CandidateRow;
use crate::tasks::{build_offline_dataset, normalize_score, Dataset, DesignScaler, TaskSpec};

/// Offline dataset in design space, its scaler, and the same dataset in
/// model space.
#[derive(Clone, Debug)]
pub struct Offline {
    pub task: TaskSpec,
    pub data: Dataset,
    pub scaler: DesignScaler,
    pub model_data: Dataset,
}

impl Offline {
    pub fn new(task: TaskSpec, data: Dataset, standardize: bool) -> Self {
        let scaler = if standardize && !task.is_discrete() {
            DesignScaler::fit(&data)
        } else {
            DesignScaler::identity(data.dim())
        };
        let model_data = data.map_designs(|x| scaler.to_model(x));
        Self {
            task,
            data,
            scaler,
            model_data,
        }
    }

    /// Normalized score of the best offline design (1.0 by construction).
    pub fn best_normalized(&self) -> f64 {
        self.data.items.iter().map(|i| i.y_norm).fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn gen_data(cfg: &PipelineConfig, seed: u64) -> Result<Offline> {
    let task = cfg.task()?;
    let mut rng = RngStream::derive(seed, domain::DATASET, 0);
    let data = build_offline_dataset(&task, cfg.dataset.n, cfg.dataset.keep_fraction, &mut rng)?;
    Ok(Offline::new(task, data, cfg.dataset.standardize))
}

pub fn fit_surrogate(cfg: &PipelineConfig, off: &Offline, seed: u64) -> Result<TrainedSurrogate> {
    train_surrogate(&off.model_data, &cfg.surrogate, seed)
}

/// Gradient-ascended designs labelled by the surrogate, in model space.
pub fn synthesize(cfg: &PipelineConfig, off: &Offline, surrogate: &TrainedSurrogate) -> Result<Dataset> {
    let eta = cfg.surrogate.step_for(off.task.is_discrete());
    build_synthetic_dataset(&surrogate.params, &off.model_data, eta, cfg.surrogate.ascent_iters)
}

pub fn fit_diffusion(cfg: &PipelineConfig, training: &Dataset, seed: u64) -> Result<(ScoreNetwork, TrainLog)> {
    let sched = cfg.schedule()?;
    train_score_network(training, &sched, &cfg.guidance, &cfg.diffusion, seed)
}

/// Edited candidates in model space.
pub fn edit(net: &ScoreNetwork, off: &Offline, ecfg: &EditConfig, seed: u64) -> Result<Vec<Vec<f64>>> {
    generate_candidates(net, &net.schedule, &off.model_data, ecfg, seed)
}

/// Candidates sampled from the prior at `t = 1`, in model space.
pub fn sample_prior(net: &ScoreNetwork, off: &Offline, ecfg: &EditConfig, seed: u64) -> Result<Vec<Vec<f64>>> {
    generate_from_prior(net, &net.schedule, off.model_data.dim(), ecfg, seed)
}

/// Maps model-space candidates back to designs and scores them with the
/// oracle, normalized by the offline extremes.
pub fn score_candidates(off: &Offline, candidates: &[Vec<f64>]) -> Result<Vec<CandidateRow>> {
    crate::par::try_map_range(candidates.len(), |k| {
        let x = off.scaler.to_design(&candidates[k]);
        let y_raw = off.task.oracle(&x)?;
        Ok(CandidateRow {
            k,
            y_norm: normalize_score(y_raw, off.data.y_min, off.data.y_max)?,
            x,
            y_raw,
        })
    })
}

/// Everything one seed of the full method produces.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub offline: Offline,
    pub surrogate: TrainedSurrogate,
    pub synthetic: Dataset,
    pub network: ScoreNetwork,
    pub log: TrainLog,
    pub candidates: Vec<CandidateRow>,
}

/// All six stages for one seed.
pub fn run_seed(cfg: &PipelineConfig, seed: u64) -> Result<SeedRun> {
    cfg.validate()?;
    let offline = gen_data(cfg, seed)?;
    let surrogate = fit_surrogate(cfg, &offline, seed)?;
    let synthetic = synthesize(cfg, &offline, &surrogate)?;
    let (network, log) = fit_diffusion(cfg, &synthetic, seed)?;
    let raw = edit(&network, &offline, &cfg.edit_config(), seed)?;
    let candidates = score_candidates(&offline, &raw)?;
    Ok(SeedRun {
        seed,
        offline,
        surrogate,
        synthetic,
        network,
        log,
        candidates,
    })
}
