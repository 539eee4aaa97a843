//! Classifier-free conditional score network and its training loop.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schedule::{NoiseSchedule, ScheduleConfig};
use crate::error::{invalid, Error, Result};
use crate::numeric::rng::{domain, RngStream};
use crate::numeric::{accumulate_chunks, checkpoint, AdamConfig, AdamState, Matrix, MlpParams};
use crate::tasks::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    /// Guidance weight ω.
    pub omega: f64,
    /// Probability of dropping the condition during training.
    pub p_uncond: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            omega: 2.0,
            p_uncond: 0.15,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega >= 0.0) || !(0.0..1.0).contains(&self.p_uncond) {
            return Err(invalid(format!(
                "guidance needs omega >= 0 and 0 <= p_uncond < 1, got {} / {}",
                self.omega, self.p_uncond
            )));
        }
        Ok(())
    }
}

/// Default training length. The loss plateaus well before this on the
/// 10-dimensional Levy task; full-scale runs use 1000.
pub const DESK_EPOCHS: usize = 150;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreNetConfig {
    pub hidden_dim: usize,
    /// Number of sinusoidal time features (even).
    pub time_dim: usize,
    /// Width of the broadcast condition block.
    pub cond_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for ScoreNetConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 256,
            time_dim: 32,
            cond_dim: 16,
            epochs: DESK_EPOCHS,
            batch_size: 128,
            lr: 1e-3,
        }
    }
}

impl ScoreNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid("score network hidden_dim, epochs and batch_size must be >= 1"));
        }
        if self.time_dim == 0 || !self.time_dim.is_multiple_of(2) {
            return Err(invalid("time_dim must be a positive even number"));
        }
        if !(self.lr > 0.0) {
            return Err(invalid("score network lr must be > 0"));
        }
        Ok(())
    }
}

/// Sinusoidal features of `t`: `sin(1000·t·ωₖ)` then `cos(1000·t·ωₖ)` with
/// geometric frequencies `ωₖ = 10000^(−k/half)`.
pub fn time_features(t: f64, n: usize) -> Vec<f64> {
    let half = n / 2;
    let mut out = Vec::with_capacity(n);
    let freq = |k: usize| (-(10000f64.ln()) * k as f64 / half as f64).exp();
    out.extend((0..half).map(|k| (1000.0 * t * freq(k)).sin()));
    out.extend((0..half).map(|k| (1000.0 * t * freq(k)).cos()));
    out
}

/// `s_φ(x_t, t, y)`. The perceptron predicts the standardized noise `ε̂` and
/// the score is `−ε̂ / std(t)`, so the score-matching loss weighted by
/// `λ(t) = std(t)²` becomes the plain regression `‖ε̂ − ε‖²`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreNetwork {
    pub params: MlpParams,
    pub schedule: NoiseSchedule,
    pub design_dim: usize,
    pub time_dim: usize,
    pub cond_dim: usize,
}

impl ScoreNetwork {
    pub fn new(design_dim: usize, schedule: NoiseSchedule, cfg: &ScoreNetConfig, rng: &mut RngStream) -> Self {
        let in_dim = design_dim + cfg.time_dim + cfg.cond_dim + 1;
        Self {
            params: MlpParams::init(in_dim, cfg.hidden_dim, design_dim, rng),
            schedule,
            design_dim,
            time_dim: cfg.time_dim,
            cond_dim: cfg.cond_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.design_dim + self.time_dim + self.cond_dim + 1
    }

    /// `[x, time features, y repeated cond_dim times, flag]`; the
    /// unconditional input zeroes the condition block and the flag.
    pub fn write_input(&self, x: &[f64], t: f64, y: Option<f64>, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(x);
        out.extend(time_features(t, self.time_dim));
        let (c, flag) = y.map_or((0.0, 0.0), |v| (v, 1.0));
        out.extend(std::iter::repeat_n(c, self.cond_dim));
        out.push(flag);
    }

    fn check(&self, x: &[f64], t: f64) -> Result<()> {
        if x.len() != self.design_dim {
            return Err(Error::Shape(format!(
                "score network expects designs of length {}, got {}",
                self.design_dim,
                x.len()
            )));
        }
        if !(t > 0.0 && t <= 1.0) {
            return Err(invalid(format!("score network evaluated at t = {t} outside (0, 1]")));
        }
        Ok(())
    }

    pub fn predict_noise(&self, x: &[f64], t: f64, y: Option<f64>) -> Result<Vec<f64>> {
        self.check(x, t)?;
        let mut input = Vec::with_capacity(self.input_dim());
        self.write_input(x, t, y, &mut input);
        self.params.forward(&input)
    }

    /// Conditional (`Some(y)`) or unconditional (`None`) score.
    pub fn score(&self, x: &[f64], t: f64, y: Option<f64>) -> Result<Vec<f64>> {
        let eps = self.predict_noise(x, t, y)?;
        let (_, std) = self.schedule.kernel_coeffs(t);
        Ok(eps.into_iter().map(|e| -e / std).collect())
    }

    /// `(1 + ω)·s(x, t, y) − ω·s(x, t, ∅)`
    pub fn guided_score(&self, x: &[f64], t: f64, y: f64, omega: f64) -> Result<Vec<f64>> {
        let cond = self.score(x, t, Some(y))?;
        if omega == 0.0 {
            return Ok(cond);
        }
        let uncond = self.score(x, t, None)?;
        Ok(cond
            .iter()
            .zip(&uncond)
            .map(|(c, u)| (1.0 + omega) * c - omega * u)
            .collect())
    }

    fn metadata(&self) -> Vec<(String, String)> {
        let c = &self.schedule.config;
        [
            ("kind", "score_network".to_string()),
            ("beta_min", c.beta_min.to_string()),
            ("beta_max", c.beta_max.to_string()),
            ("steps", c.steps.to_string()),
            ("t_eps", c.t_eps.to_string()),
            ("design_dim", self.design_dim.to_string()),
            ("time_dim", self.time_dim.to_string()),
            ("cond_dim", self.cond_dim.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.params, &self.metadata())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, meta) = checkpoint::load(path)?;
        let get = |k: &str| -> Result<&str> {
            meta.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Format {
                    path: path.to_path_buf(),
                    reason: format!("missing header field {k}"),
                })
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse::<f64>().map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: format!("{k}: {e}"),
            })
        };
        if get("kind")? != "score_network" {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: "not a score network checkpoint".into(),
            });
        }
        let schedule = NoiseSchedule::new(ScheduleConfig {
            beta_min: num("beta_min")?,
            beta_max: num("beta_max")?,
            steps: num("steps")? as usize,
            t_eps: num("t_eps")?,
        })?;
        let net = Self {
            params,
            schedule,
            design_dim: num("design_dim")? as usize,
            time_dim: num("time_dim")? as usize,
            cond_dim: num("cond_dim")? as usize,
        };
        if net.input_dim() != net.params.in_dim() || net.design_dim != net.params.out_dim() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: "header dims disagree with tensors".into(),
            });
        }
        Ok(net)
    }
}

#[derive(Clone, Debug)]
pub struct TrainLog {
    /// Mean loss per epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainLog {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(f64::NAN)
    }
}

/// One noised training example.
struct Example {
    input: Vec<f64>,
    noise: Vec<f64>,
}

fn draw_example(net: &ScoreNetwork, x0: &[f64], y: f64, p_uncond: f64, rng: &mut RngStream) -> Example {
    let t_eps = net.schedule.t_eps();
    let t = rng.uniform(t_eps, 1.0);
    let noise = rng.gaussian(x0.len());
    let drop = rng.uniform(0.0, 1.0) < p_uncond;
    let (a, s) = net.schedule.kernel_coeffs(t);
    let xt: Vec<f64> = x0.iter().zip(&noise).map(|(x, e)| a * x + s * e).collect();
    let mut input = Vec::with_capacity(net.input_dim());
    net.write_input(&xt, t, (!drop).then_some(y), &mut input);
    Example { input, noise }
}

/// Gradient and summed loss of `Σ‖ε̂ − ε‖²/n` over a batch of examples.
fn batch_grad(net: &ScoreNetwork, batch: &[Example]) -> Result<(MlpParams, f64)> {
    let n = batch.len();
    let scale = 2.0 / n as f64;
    accumulate_chunks(&net.params, n, |rows| {
        let ex = &batch[rows];
        let x = Matrix::from_rows(&ex.iter().map(|e| e.input.as_slice()).collect::<Vec<_>>())?;
        let cache = net.params.forward_cached(&x)?;
        let mut g = Matrix::zeros(ex.len(), net.design_dim);
        let mut loss = 0.0;
        for (k, e) in ex.iter().enumerate() {
            for (j, (&p, &t)) in cache.output.row(k).iter().zip(&e.noise).enumerate() {
                let r = p - t;
                loss += r * r;
                g.set(k, j, scale * r);
            }
        }
        let (grads, _) = net.params.backward_batch(&x, &cache, &g, false)?;
        Ok((grads, loss / n as f64))
    })
}

/// Mean loss of a freshly drawn batch of examples, without updating.
pub fn sample_loss(net: &ScoreNetwork, data: &Dataset, p_uncond: f64, n: usize, rng: &mut RngStream) -> Result<f64> {
    let batch: Vec<Example> = (0..n)
        .map(|i| {
            let it = &data.items[i % data.len()];
            draw_example(net, &it.x, it.y_norm, p_uncond, rng)
        })
        .collect();
    Ok(batch_grad(net, &batch)?.1)
}

/// Denoising score matching with random condition dropout.
pub fn train_score_network(
    data: &Dataset,
    schedule: &NoiseSchedule,
    guidance: &GuidanceConfig,
    cfg: &ScoreNetConfig,
    seed: u64,
) -> Result<(ScoreNetwork, TrainLog)> {
    cfg.validate()?;
    guidance.validate()?;
    if data.is_empty() {
        return Err(invalid("cannot train a score network on an empty dataset"));
    }
    let mut net = ScoreNetwork::new(
        data.dim(),
        schedule.clone(),
        cfg,
        &mut RngStream::derive(seed, domain::SCORE_INIT, 0),
    );
    let mut adam = AdamState::new(&net.params, AdamConfig::with_lr(cfg.lr));
    let mut shuffle = RngStream::derive(seed, domain::SCORE_SHUFFLE, 0);
    let mut noise = RngStream::derive(seed, domain::SCORE_NOISE, 0);
    let batch_size = cfg.batch_size.min(data.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        shuffle.shuffle(&mut order);
        let mut total = 0.0;
        let mut batches = 0;
        for (b, idx) in order.chunks(batch_size).enumerate() {
            let batch: Vec<Example> = idx
                .iter()
                .map(|&i| {
                    let it = &data.items[i];
                    draw_example(&net, &it.x, it.y_norm, guidance.p_uncond, &mut noise)
                })
                .collect();
            let (grads, loss) = batch_grad(&net, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("score matching loss at epoch {epoch}, batch {b}")));
            }
            adam.step(&mut net.params, &grads)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch}, batch {b}: {e}")))?;
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        if epoch % 50 == 0 || epoch + 1 == cfg.epochs {
            log::debug!("score network epoch {epoch}: loss {mean:.4}");
        }
        epoch_losses.push(mean);
    }
    Ok((net, TrainLog { epoch_losses }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ScoreNetConfig {
        ScoreNetConfig {
            hidden_dim: 16,
            time_dim: 8,
            cond_dim: 4,
            epochs: 3,
            batch_size: 16,
            lr: 1e-3,
        }
    }

    fn net() -> ScoreNetwork {
        ScoreNetwork::new(3, NoiseSchedule::default(), &tiny_cfg(), &mut RngStream::new(0, 0))
    }

    #[test]
    fn input_layout() {
        let n = net();
        let mut v = Vec::new();
        n.write_input(&[1.0, 2.0, 3.0], 0.5, Some(0.7), &mut v);
        assert_eq!(v.len(), n.input_dim());
        assert_eq!(&v[..3], &[1.0, 2.0, 3.0]);
        assert_eq!(&v[11..15], &[0.7; 4]);
        assert_eq!(v[15], 1.0);
        n.write_input(&[1.0, 2.0, 3.0], 0.5, None, &mut v);
        assert_eq!(&v[11..], &[0.0; 5]);
    }

    #[test]
    fn guidance_identities() {
        let n = net();
        let x = [0.2, -0.4, 1.0];
        let cond = n.score(&x, 0.3, Some(0.9)).unwrap();
        assert_eq!(n.guided_score(&x, 0.3, 0.9, 0.0).unwrap(), cond);
        let uncond = n.score(&x, 0.3, None).unwrap();
        let g = n.guided_score(&x, 0.3, 0.9, 1.0).unwrap();
        for i in 0..3 {
            assert!((g[i] - (2.0 * cond[i] - uncond[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn condition_blind_net_ignores_omega() {
        let mut n = net();
        // Zero the weights reading the condition block and flag.
        for r in 0..n.params.w1.rows() {
            for c in 11..16 {
                n.params.w1.set(r, c, 0.0);
            }
        }
        let x = [0.5, 0.5, -1.0];
        let a = n.guided_score(&x, 0.6, 1.0, 0.5).unwrap();
        let b = n.guided_score(&x, 0.6, 1.0, 4.0).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-9 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn rejects_bad_time_and_shape() {
        let n = net();
        assert!(n.score(&[0.0; 3], 0.0, None).is_err());
        assert!(n.score(&[0.0; 2], 0.5, None).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("score.ckpt");
        let n = net();
        n.save(&p).unwrap();
        assert_eq!(ScoreNetwork::load(&p).unwrap(), n);
    }

    #[test]
    fn training_is_deterministic() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64).sin(), (i as f64).cos(), 0.1 * i as f64]).collect();
        let ys: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let data = Dataset::from_scored("t", xs, ys).unwrap();
        let s = NoiseSchedule::default();
        let g = GuidanceConfig::default();
        let (a, la) = train_score_network(&data, &s, &g, &tiny_cfg(), 3).unwrap();
        let (b, lb) = train_score_network(&data, &s, &g, &tiny_cfg(), 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(la.final_loss().to_bits(), lb.final_loss().to_bits());
    }
}
