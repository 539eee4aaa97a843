//! Editing of top offline designs: partial noising then guided denoising.

use serde::{Deserialize, Serialize};

use crate::diffusion::{heun_sample, NoiseSchedule, ScoreField};
use crate::error::{invalid, Result};
use crate::numeric::rng::{domain, RngStream};
use crate::tasks::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EditConfig {
    /// Noise-injection level `m` out of the schedule's `M`.
    pub m: usize,
    /// Target normalized score `ŷ`.
    pub target: f64,
    /// Guidance weight `ω`.
    pub omega: f64,
    /// Candidate budget `K`.
    pub k: usize,
    /// Sampler steps for a full `t = 1` integration; editing uses `steps·m/M`.
    pub sampler_steps: usize,
}

impl Default for EditConfig {
    fn default() -> Self {
        Self {
            m: 400,
            target: 1.0,
            omega: 2.0,
            k: 256,
            sampler_steps: 128,
        }
    }
}

impl EditConfig {
    pub fn validate(&self, sched: &NoiseSchedule) -> Result<()> {
        if self.m > sched.num_steps() {
            return Err(invalid(format!("m = {} exceeds M = {}", self.m, sched.num_steps())));
        }
        if self.k == 0 || self.sampler_steps == 0 {
            return Err(invalid("k and sampler_steps must be >= 1"));
        }
        if !(self.omega >= 0.0) || !self.target.is_finite() {
            return Err(invalid("omega must be >= 0 and target finite"));
        }
        Ok(())
    }

    /// Integration steps actually used for an edit from level `m`.
    pub fn edit_steps(&self, sched: &NoiseSchedule) -> usize {
        let scaled = (self.sampler_steps * self.m) as f64 / sched.num_steps() as f64;
        (scaled.round() as usize).max(1)
    }
}

/// Indices of the `k` best designs by raw score, best first; ties keep
/// dataset order.
pub fn select_top_k(data: &Dataset, k: usize) -> Result<Vec<usize>> {
    if k > data.len() {
        return Err(invalid(format!(
            "budget K = {k} exceeds the {} designs in the dataset",
            data.len()
        )));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.sort_by(|&a, &b| data.items[b].y_raw.total_cmp(&data.items[a].y_raw).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

/// `x_top + √(1 − ᾱ_m)·ε` with `ε ~ N(0, I)`.
pub fn perturb_design(x_top: &[f64], sched: &NoiseSchedule, m: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    let scale = (1.0 - sched.alpha_bar(m)?).sqrt();
    let eps = rng.gaussian(x_top.len());
    Ok(x_top.iter().zip(&eps).map(|(x, e)| x + scale * e).collect())
}

/// Perturbs `x_top` at level `m` and denoises it from `t = m/M` toward the
/// target score. `m = 0` returns the design unchanged.
pub fn edit_design<F: ScoreField + ?Sized>(
    field: &F,
    sched: &NoiseSchedule,
    x_top: &[f64],
    cfg: &EditConfig,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    cfg.validate(sched)?;
    if cfg.m == 0 {
        return Ok(x_top.to_vec());
    }
    let start = perturb_design(x_top, sched, cfg.m, rng)?;
    let t_start = cfg.m as f64 / sched.num_steps() as f64;
    heun_sample(field, sched, &start, t_start, cfg.target, cfg.omega, cfg.edit_steps(sched))
}

/// Edits the `k`-th best design with its own stream `(seed, k)`, returning
/// `K` candidates in rank order.
pub fn generate_candidates<F: ScoreField + ?Sized>(
    field: &F,
    sched: &NoiseSchedule,
    data: &Dataset,
    cfg: &EditConfig,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate(sched)?;
    let top = select_top_k(data, cfg.k)?;
    crate::par::try_map_range(top.len(), |k| {
        let mut rng = RngStream::derive(seed, domain::EDIT, k as u32);
        edit_design(field, sched, &data.items[top[k]].x, cfg, &mut rng)
    })
}

/// Samples `k` designs from the Gaussian prior at `t = 1` (no editing).
pub fn generate_from_prior<F: ScoreField + ?Sized>(
    field: &F,
    sched: &NoiseSchedule,
    dim: usize,
    cfg: &EditConfig,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate(sched)?;
    crate::par::try_map_range(cfg.k, |k| {
        let start = RngStream::derive(seed, domain::PRIOR, k as u32).gaussian(dim);
        heun_sample(field, sched, &start, 1.0, cfg.target, cfg.omega, cfg.sampler_steps)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::GaussianDataScore;

    fn data(ys: &[f64]) -> Dataset {
        let xs = (0..ys.len()).map(|i| vec![i as f64]).collect();
        Dataset::from_raw("t", xs, ys.to_vec(), -10.0, 10.0).unwrap()
    }

    #[test]
    fn top_k_basic_and_ties() {
        let d = data(&[0.1, 0.9, 0.5, 0.9, -1.0]);
        assert_eq!(select_top_k(&d, 1).unwrap(), vec![1]);
        assert_eq!(select_top_k(&d, 4).unwrap(), vec![1, 3, 2, 0]);
        let flat = data(&[2.0; 6]);
        assert_eq!(select_top_k(&flat, 3).unwrap(), vec![0, 1, 2]);
        assert!(select_top_k(&d, 6).is_err());
    }

    #[test]
    fn perturb_zero_is_identity() {
        let s = NoiseSchedule::default();
        let x = [1.0, -3.0, 0.5];
        assert_eq!(perturb_design(&x, &s, 0, &mut RngStream::new(0, 0)).unwrap(), x.to_vec());
        assert!(perturb_design(&x, &s, 1001, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn perturb_variance_matches_schedule() {
        let s = NoiseSchedule::default();
        for m in [100, 400, 1000] {
            let mut rng = RngStream::new(m as u64, 0);
            let x = [2.0];
            let n = 10_000;
            let d: Vec<f64> = (0..n).map(|_| perturb_design(&x, &s, m, &mut rng).unwrap()[0] - 2.0).collect();
            let mean = d.iter().sum::<f64>() / n as f64;
            let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let want = 1.0 - s.alpha_bar(m).unwrap();
            assert!((var - want).abs() / want < 0.03, "m={m}: {var} vs {want}");
        }
        let top = 1.0 - s.alpha_bar(1000).unwrap();
        assert!((top.sqrt() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn edit_m_zero_returns_design() {
        let s = NoiseSchedule::default();
        let f = GaussianDataScore { schedule: s.clone(), mean: vec![5.0, 5.0], var0: 0.0 };
        let cfg = EditConfig { m: 0, ..Default::default() };
        let x = [0.25, -0.75];
        assert_eq!(edit_design(&f, &s, &x, &cfg, &mut RngStream::new(0, 0)).unwrap(), x.to_vec());
    }

    #[test]
    fn point_mass_pulls_edits_home() {
        let s = NoiseSchedule::default();
        let home = vec![0.8, -0.6];
        let f = GaussianDataScore { schedule: s.clone(), mean: home.clone(), var0: 0.0 };
        let cfg = EditConfig { m: 400, ..Default::default() };
        for seed in 0..5 {
            let out = edit_design(&f, &s, &[0.1, 0.1], &cfg, &mut RngStream::new(seed, 0)).unwrap();
            for (a, b) in out.iter().zip(&home) {
                assert!((a - b).abs() < 0.05, "{out:?}");
            }
        }
    }

    #[test]
    fn candidates_are_per_stream() {
        let s = NoiseSchedule::default();
        let f = GaussianDataScore { schedule: s.clone(), mean: vec![0.0], var0: 0.5 };
        let d = data(&[3.0, 1.0, 2.0, 0.0]);
        let cfg = EditConfig { k: 3, m: 300, sampler_steps: 20, ..Default::default() };
        let all = generate_candidates(&f, &s, &d, &cfg, 9).unwrap();
        assert_eq!(all.len(), 3);
        // Candidate 1 (second best design, index 2) reproduced alone.
        let mut rng = RngStream::derive(9, domain::EDIT, 1);
        let one = edit_design(&f, &s, &d.items[2].x, &cfg, &mut rng).unwrap();
        assert_eq!(all[1], one);
        let big = EditConfig { k: 5, ..cfg };
        assert!(generate_candidates(&f, &s, &d, &big, 9).is_err());
    }

    #[test]
    fn edit_steps_scale_with_m() {
        let s = NoiseSchedule::default();
        let cfg = EditConfig { m: 400, sampler_steps: 128, ..Default::default() };
        assert_eq!(cfg.edit_steps(&s), 51);
        assert_eq!(EditConfig { m: 1, ..cfg.clone() }.edit_steps(&s), 1);
        assert_eq!(EditConfig { m: 1000, ..cfg }.edit_steps(&s), 128);
    }
}
