use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Linear variance-preserving schedule `β(t) = β_min + t(β_max − β_min)`
/// on `t ∈ [0, 1]`, with its `M`-step discretization
/// `β_m = β(m/M)/M`, `ᾱ_m = Π_{s≤m}(1 − β_s)`, `ᾱ_0 = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub beta_min: f64,
    pub beta_max: f64,
    /// Number of discrete noise levels `M`.
    pub steps: usize,
    /// Lower integration limit for sampling and training times.
    pub t_eps: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            beta_min: 0.1,
            beta_max: 20.0,
            steps: 1000,
            t_eps: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub config: ScheduleConfig,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(config: ScheduleConfig) -> Result<Self> {
        let ScheduleConfig {
            beta_min,
            beta_max,
            steps,
            t_eps,
        } = config;
        if !(beta_min > 0.0 && beta_max >= beta_min && beta_max.is_finite()) {
            return Err(invalid(format!("beta range [{beta_min}, {beta_max}]")));
        }
        if steps == 0 || beta_max / steps as f64 >= 1.0 {
            return Err(invalid(format!("{steps} steps give discrete betas >= 1")));
        }
        if !(t_eps > 0.0 && t_eps < 1.0) {
            return Err(invalid(format!("t_eps {t_eps} outside (0, 1)")));
        }
        let mut alpha_bars = Vec::with_capacity(steps + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for m in 1..=steps {
            acc *= 1.0 - (beta_min + (m as f64 / steps as f64) * (beta_max - beta_min)) / steps as f64;
            alpha_bars.push(acc);
        }
        Ok(Self { config, alpha_bars })
    }

    pub fn num_steps(&self) -> usize {
        self.config.steps
    }

    pub fn t_eps(&self) -> f64 {
        self.config.t_eps
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.config.beta_min + t * (self.config.beta_max - self.config.beta_min)
    }

    /// `B(t) = ∫₀ᵗ β(s) ds`
    pub fn integral(&self, t: f64) -> f64 {
        self.config.beta_min * t + 0.5 * (self.config.beta_max - self.config.beta_min) * t * t
    }

    /// Discrete `β_m` for `1 ≤ m ≤ M`.
    pub fn beta_m(&self, m: usize) -> f64 {
        self.beta(m as f64 / self.num_steps() as f64) / self.num_steps() as f64
    }

    pub fn alpha_m(&self, m: usize) -> f64 {
        1.0 - self.beta_m(m)
    }

    /// `ᾱ_m` for `0 ≤ m ≤ M`.
    pub fn alpha_bar(&self, m: usize) -> Result<f64> {
        self.alpha_bars
            .get(m)
            .copied()
            .ok_or_else(|| invalid(format!("noise level {m} outside 0..={}", self.num_steps())))
    }

    /// `(exp(−½B(t)), √(1 − exp(−B(t))))`
    pub fn kernel_coeffs(&self, t: f64) -> (f64, f64) {
        let b = self.integral(t);
        ((-0.5 * b).exp(), (-(-b).exp_m1()).sqrt())
    }

    /// Mean and standard deviation of `x_t | x_0`.
    pub fn perturb_kernel(&self, x0: &[f64], t: f64) -> (Vec<f64>, f64) {
        let (a, s) = self.kernel_coeffs(t);
        (x0.iter().map(|v| a * v).collect(), s)
    }

    /// `∇ log N(x_t; mean, std²I) = −(x_t − mean)/std²`.
    pub fn score_target(&self, x0: &[f64], x_t: &[f64], t: f64) -> Result<Vec<f64>> {
        if !(t > 0.0) {
            return Err(Error::Degenerate(format!("perturbation kernel is a point mass at t = {t}")));
        }
        let (mean, std) = self.perturb_kernel(x0, t);
        let var = std * std;
        Ok(x_t.iter().zip(&mean).map(|(x, m)| -(x - m) / var).collect())
    }

    /// Forward drift `f(x, t) = −½β(t)x`.
    pub fn drift(&self, x: &[f64], t: f64) -> Vec<f64> {
        let c = -0.5 * self.beta(t);
        x.iter().map(|v| c * v).collect()
    }

    /// Forward diffusion coefficient `g(t) = √β(t)`.
    pub fn diffusion(&self, t: f64) -> f64 {
        self.beta(t).sqrt()
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::new(ScheduleConfig::default()).expect("default schedule is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_bar_strictly_decreasing() {
        let s = NoiseSchedule::default();
        assert_eq!(s.alpha_bar(0).unwrap(), 1.0);
        for m in 1..=s.num_steps() {
            let b = s.beta_m(m);
            assert!(b > 0.0 && b < 1.0);
            assert!(s.alpha_bar(m).unwrap() < s.alpha_bar(m - 1).unwrap());
        }
        assert!(s.alpha_bar(s.num_steps() + 1).is_err());
    }

    #[test]
    fn constant_beta_gives_power() {
        let s = NoiseSchedule::new(ScheduleConfig {
            beta_min: 2.0,
            beta_max: 2.0,
            steps: 50,
            t_eps: 1e-3,
        })
        .unwrap();
        let b: f64 = 2.0 / 50.0;
        for m in [0, 1, 7, 50] {
            assert!((s.alpha_bar(m).unwrap() - (1.0 - b).powi(m as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn kernel_endpoints() {
        let s = NoiseSchedule::default();
        let (mean, std) = s.perturb_kernel(&[1.0, -2.0], 0.0);
        assert_eq!(mean, vec![1.0, -2.0]);
        assert_eq!(std, 0.0);
        assert!((s.integral(1.0) - 10.05).abs() < 1e-12);
        let (_, std1) = s.kernel_coeffs(1.0);
        assert!((std1 - (1.0 - (-10.05f64).exp()).sqrt()).abs() < 1e-15);
        assert!((std1 - 0.99998).abs() < 1e-5);
    }

    #[test]
    fn kernel_std_increasing() {
        let s = NoiseSchedule::default();
        let mut prev = 0.0;
        for i in 1..=200 {
            let (_, std) = s.kernel_coeffs(i as f64 / 200.0);
            assert!(std > prev && std < 1.0);
            prev = std;
        }
    }

    #[test]
    fn score_target_cases() {
        let s = NoiseSchedule::default();
        let x0 = [0.5, -1.0];
        let (mean, _) = s.perturb_kernel(&x0, 0.3);
        assert!(s.score_target(&x0, &mean, 0.3).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(s.score_target(&x0, &mean, 0.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn discrete_matches_continuous_to_first_order() {
        let s = NoiseSchedule::default();
        for m in [100, 400, 1000] {
            let cont = (-s.integral(m as f64 / 1000.0)).exp();
            let disc = s.alpha_bar(m).unwrap();
            assert!((cont - disc).abs() < 0.05 * cont.max(1e-2), "m={m}: {cont} vs {disc}");
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = |c: ScheduleConfig| NoiseSchedule::new(c).is_err();
        let d = ScheduleConfig::default();
        assert!(bad(ScheduleConfig { beta_min: 0.0, ..d.clone() }));
        assert!(bad(ScheduleConfig { steps: 10, ..d.clone() }));
        assert!(bad(ScheduleConfig { t_eps: 0.0, ..d }));
    }
}
