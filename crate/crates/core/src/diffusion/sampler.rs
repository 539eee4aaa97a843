//! Probability-flow ODE integration with Heun's method.

use super::network::ScoreNetwork;
use super::schedule::NoiseSchedule;
use crate::error::{invalid, Error, Result};

/// Anything that yields a (guided) score at `(x, t)` for condition `y`.
pub trait ScoreField: Sync {
    fn guided_score(&self, x: &[f64], t: f64, y: f64, omega: f64) -> Result<Vec<f64>>;
}

impl ScoreField for ScoreNetwork {
    fn guided_score(&self, x: &[f64], t: f64, y: f64, omega: f64) -> Result<Vec<f64>> {
        ScoreNetwork::guided_score(self, x, t, y, omega)
    }
}

/// Exact score of Gaussian data `N(mean, var0·I)` pushed through the VP
/// kernel; `var0 = 0` is a point mass. Ignores `y` and `ω`.
#[derive(Clone, Debug)]
pub struct GaussianDataScore {
    pub schedule: NoiseSchedule,
    pub mean: Vec<f64>,
    pub var0: f64,
}

impl ScoreField for GaussianDataScore {
    fn guided_score(&self, x: &[f64], t: f64, _y: f64, _omega: f64) -> Result<Vec<f64>> {
        let (a, s) = self.schedule.kernel_coeffs(t);
        let var = a * a * self.var0 + s * s;
        Ok(x.iter().zip(&self.mean).map(|(v, m)| -(v - a * m) / var).collect())
    }
}

/// `dx/dt = f(x, t) − ½g(t)²·score = −½β(t)(x + score)`
fn velocity<F: ScoreField + ?Sized>(
    field: &F,
    sched: &NoiseSchedule,
    x: &[f64],
    t: f64,
    y: f64,
    omega: f64,
) -> Result<Vec<f64>> {
    let s = field.guided_score(x, t, y, omega)?;
    let c = -0.5 * sched.beta(t);
    Ok(x.iter().zip(&s).map(|(xi, si)| c * (xi + si)).collect())
}

/// Integrates the probability-flow ODE backward from `t_start` to `t_eps`
/// on a uniform grid of `steps` intervals. Every interval uses Heun's
/// trapezoidal predictor-corrector except the last, which is a plain Euler
/// step so the score is never evaluated at `t_eps` itself.
pub fn heun_sample<F: ScoreField + ?Sized>(
    field: &F,
    sched: &NoiseSchedule,
    x_start: &[f64],
    t_start: f64,
    y: f64,
    omega: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    if !(t_start > 0.0 && t_start <= 1.0) {
        return Err(invalid(format!("t_start {t_start} outside (0, 1]")));
    }
    if steps == 0 {
        return Err(invalid("sampler needs at least one step"));
    }
    let t_end = sched.t_eps();
    let mut x = x_start.to_vec();
    if t_start <= t_end {
        return Ok(x);
    }
    let h = (t_end - t_start) / steps as f64;
    for i in 0..steps {
        let t = t_start + i as f64 * h;
        let t_next = if i + 1 == steps { t_end } else { t + h };
        let d1 = velocity(field, sched, &x, t, y, omega)?;
        let euler: Vec<f64> = x.iter().zip(&d1).map(|(xi, di)| xi + h * di).collect();
        if i + 1 == steps {
            x = euler;
        } else {
            let d2 = velocity(field, sched, &euler, t_next, y, omega)?;
            for ((xi, a), b) in x.iter_mut().zip(&d1).zip(&d2) {
                *xi += 0.5 * h * (a + b);
            }
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("sampler state at step {} (t = {t_next})", i + 1)));
        }
    }
    Ok(x)
}
