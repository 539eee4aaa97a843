//! Classifier-free conditional score-based diffusion under the VP SDE.

pub mod network;
pub mod sampler;
pub mod schedule;

pub use network::{train_score_network, GuidanceConfig, ScoreNetConfig, ScoreNetwork, TrainLog};
pub use sampler::{heun_sample, GaussianDataScore, ScoreField};
pub use schedule::{NoiseSchedule, ScheduleConfig};
