//! Pipeline configuration, read from TOML with one section per stage.
//! Every key has a default; unknown keys are rejected.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{GuidanceConfig, NoiseSchedule, ScheduleConfig, ScoreNetConfig};
use crate::editing::EditConfig;
use crate::error::{invalid, Result};
use crate::surrogate::SurrogateConfig;
use crate::tasks::TaskSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    /// `levy`, `sphere` or `lookup`.
    pub name: String,
    /// Dimension (continuous) or sequence length (discrete).
    pub dim: usize,
    /// Seed of the lookup task's score table.
    pub table_seed: u64,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            name: "levy".into(),
            dim: 10,
            table_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub n: usize,
    /// Fraction of sampled designs kept, lowest scores first.
    pub keep_fraction: f64,
    /// Standardize continuous designs before modelling.
    pub standardize: bool,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            n: 5000,
            keep_fraction: 0.9,
            standardize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EditSection {
    pub m: usize,
    pub target: f64,
    pub k: usize,
    pub sampler_steps: usize,
}

impl Default for EditSection {
    fn default() -> Self {
        let e = EditConfig::default();
        Self {
            m: e.m,
            target: e.target,
            k: e.k,
            sampler_steps: e.sampler_steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seeds: Vec<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seeds: vec![0, 1, 2] }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub task: TaskSection,
    pub dataset: DatasetSection,
    pub surrogate: SurrogateConfig,
    pub schedule: ScheduleConfig,
    pub guidance: GuidanceConfig,
    pub diffusion: ScoreNetConfig,
    pub edit: EditSection,
    pub run: RunSection,
}

impl PipelineConfig {
    /// The literal published hyperparameters: 60-dimensional Levy with
    /// 15000 designs, width-2048 networks, surrogate lr 1e-1, 1000
    /// score-network epochs and eight trials.
    pub fn paper_parity() -> Self {
        let mut c = Self::default();
        c.task.dim = 60;
        c.dataset.n = 15_000;
        c.surrogate.hidden_dim = 2048;
        c.surrogate.lr = 1e-1;
        c.diffusion.hidden_dim = 2048;
        c.diffusion.epochs = 1000;
        c.run.seeds = (0..8).collect();
        c
    }

    /// Overrides every field touched by [`paper_parity`](Self::paper_parity).
    pub fn apply_paper_parity(&mut self) {
        let p = Self::paper_parity();
        self.task.dim = p.task.dim;
        self.dataset.n = p.dataset.n;
        self.surrogate.hidden_dim = p.surrogate.hidden_dim;
        self.surrogate.lr = p.surrogate.lr;
        self.diffusion.hidden_dim = p.diffusion.hidden_dim;
        self.diffusion.epochs = p.diffusion.epochs;
        self.run.seeds = p.run.seeds;
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.task()?;
        if !(self.dataset.keep_fraction > 0.0 && self.dataset.keep_fraction <= 1.0) || self.dataset.n < 10 {
            return Err(invalid("dataset needs n >= 10 and keep_fraction in (0, 1]"));
        }
        self.surrogate.validate()?;
        self.guidance.validate()?;
        self.diffusion.validate()?;
        let sched = self.schedule()?;
        self.edit_config().validate(&sched)?;
        if self.run.seeds.is_empty() {
            return Err(invalid("run.seeds must not be empty"));
        }
        Ok(())
    }

    pub fn task(&self) -> Result<TaskSpec> {
        TaskSpec::by_name(&self.task.name, self.task.dim, self.task.table_seed)
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.schedule.clone())
    }

    pub fn edit_config(&self) -> EditConfig {
        EditConfig {
            m: self.edit.m,
            target: self.edit.target,
            omega: self.guidance.omega,
            k: self.edit.k,
            sampler_steps: self.edit.sampler_steps,
        }
    }

    /// Hex SHA-256 of the whole config in canonical TOML form.
    pub fn hash(&self) -> String {
        hash_parts(&[&self.to_toml()])
    }
}

/// Hex SHA-256 over length-prefixed parts.
pub fn hash_parts(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn section_toml<T: Serialize>(section: &T) -> String {
    toml::to_string(section).expect("section serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        for c in [PipelineConfig::default(), PipelineConfig::paper_parity()] {
            let back = PipelineConfig::from_toml(&c.to_toml()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = PipelineConfig::from_toml("[surrogate]\nepoch = 3\n").unwrap_err().to_string();
        assert!(err.contains("epoch"), "{err}");
        assert!(PipelineConfig::from_toml("[bogus]\n").is_err());
        assert!(PipelineConfig::from_toml("[edit]\nomega = 1.0\n").is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c = PipelineConfig::from_toml("[edit]\nm = 200\n[run]\nseeds = [4]\n").unwrap();
        assert_eq!(c.edit.m, 200);
        assert_eq!(c.edit.k, 256);
        assert_eq!(c.run.seeds, vec![4]);
        assert_eq!(c.surrogate.batch_size, 128);
    }

    #[test]
    fn documented_defaults() {
        let c = PipelineConfig::default();
        assert_eq!((c.surrogate.epochs, c.surrogate.batch_size, c.surrogate.ascent_iters), (200, 128, 100));
        assert_eq!((c.schedule.steps, c.edit.m, c.edit.k), (1000, 400, 256));
        assert_eq!(c.edit.target, 1.0);
        assert_eq!((c.task.dim, c.dataset.n, c.diffusion.epochs), (10, 5000, 150));
        assert_eq!((c.guidance.omega, c.guidance.p_uncond), (2.0, 0.15));
        let p = PipelineConfig::paper_parity();
        assert_eq!((p.surrogate.lr, p.surrogate.hidden_dim, p.diffusion.epochs), (1e-1, 2048, 1000));
        assert_eq!(p.run.seeds.len(), 8);
    }

    #[test]
    fn validation_catches_bad_values() {
        assert!(PipelineConfig::from_toml("[edit]\nm = 1001\n").is_err());
        assert!(PipelineConfig::from_toml("[task]\nname = \"nope\"\n").is_err());
        assert!(PipelineConfig::from_toml("[guidance]\np_uncond = 1.0\n").is_err());
    }
}
