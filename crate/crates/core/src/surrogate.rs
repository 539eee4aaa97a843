//! Surrogate regression and the gradient-ascended synthetic dataset.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::numeric::rng::{domain, RngStream};
use crate::numeric::{accumulate_chunks, AdamConfig, AdamState, Matrix, MlpParams};
use crate::tasks::Dataset;

/// Ascent step used for continuous tasks when none is configured.
pub const CONTINUOUS_ASCENT_STEP: f64 = 1e-3;
pub const DISCRETE_ASCENT_STEP: f64 = 1e-1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden_dim: usize,
    /// Gradient-ascent step; `None` picks the task-kind default.
    pub ascent_step: Option<f64>,
    pub ascent_iters: usize,
    /// Start the output layer at zero instead of the uniform init.
    pub zero_init_output: bool,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            lr: 1e-3,
            hidden_dim: 256,
            ascent_step: None,
            ascent_iters: 100,
            zero_init_output: false,
        }
    }
}

impl SurrogateConfig {
    pub fn step_for(&self, discrete: bool) -> f64 {
        self.ascent_step.unwrap_or(if discrete {
            DISCRETE_ASCENT_STEP
        } else {
            CONTINUOUS_ASCENT_STEP
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.hidden_dim == 0 {
            return Err(invalid("surrogate epochs, batch_size and hidden_dim must be >= 1"));
        }
        if !(self.lr > 0.0) {
            return Err(invalid("surrogate lr must be > 0"));
        }
        if let Some(eta) = self.ascent_step {
            if !(eta >= 0.0) {
                return Err(invalid("ascent_step must be >= 0"));
            }
        }
        Ok(())
    }
}

/// A differentiable scalar score over designs.
pub trait ScoreModel: Sync {
    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl ScoreModel for MlpParams {
    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.value_and_input_grad(x)
    }
}

#[derive(Clone, Debug)]
pub struct TrainedSurrogate {
    pub params: MlpParams,
    pub final_mse: f64,
}

impl TrainedSurrogate {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.params.forward(x)?[0])
    }
}

fn batch_matrix(data: &Dataset, idx: &[usize]) -> Result<(Matrix, Vec<f64>)> {
    let rows: Vec<&[f64]> = idx.iter().map(|&i| data.items[i].x.as_slice()).collect();
    let y = idx.iter().map(|&i| data.items[i].y_norm).collect();
    Ok((Matrix::from_rows(&rows)?, y))
}

/// Mean squared error of the surrogate over a whole dataset (normalized labels).
pub fn dataset_mse(params: &MlpParams, data: &Dataset) -> Result<f64> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let (x, y) = batch_matrix(data, &idx)?;
    let pred = params.forward_batch(&x)?;
    let sse: f64 = y.iter().enumerate().map(|(i, t)| (pred.get(i, 0) - t).powi(2)).sum();
    Ok(sse / data.len() as f64)
}

/// Fits `f_θ` to the normalized scores by mini-batch Adam on the mean
/// squared error. Batches larger than the dataset shrink to the dataset.
pub fn train_surrogate(data: &Dataset, cfg: &SurrogateConfig, seed: u64) -> Result<TrainedSurrogate> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(invalid("cannot train a surrogate on an empty dataset"));
    }
    let d = data.dim();
    let mut params = MlpParams::init(d, cfg.hidden_dim, 1, &mut RngStream::derive(seed, domain::SURROGATE_INIT, 0));
    if cfg.zero_init_output {
        params.w3 = Matrix::zeros(1, cfg.hidden_dim);
        params.b3 = vec![0.0];
    }
    let mut adam = AdamState::new(&params, AdamConfig::with_lr(cfg.lr));
    let mut shuffle = RngStream::derive(seed, domain::SURROGATE_SHUFFLE, 0);
    let batch = cfg.batch_size.min(data.len());
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..cfg.epochs {
        shuffle.shuffle(&mut order);
        for (b, idx) in order.chunks(batch).enumerate() {
            let (x, y) = batch_matrix(data, idx)?;
            let scale = 2.0 / idx.len() as f64;
            let (grads, sse) = accumulate_chunks(&params, idx.len(), |rows| {
                let xs = Matrix::from_rows(&rows.clone().map(|r| x.row(r)).collect::<Vec<_>>())?;
                let cache = params.forward_cached(&xs)?;
                let mut g = Matrix::zeros(rows.len(), 1);
                let mut sse = 0.0;
                for (k, r) in rows.enumerate() {
                    let res = cache.output.get(k, 0) - y[r];
                    sse += res * res;
                    g.set(k, 0, scale * res);
                }
                let (grads, _) = params.backward_batch(&xs, &cache, &g, false)?;
                Ok((grads, sse))
            })?;
            if !sse.is_finite() {
                return Err(Error::NonFinite(format!("surrogate loss at epoch {epoch}, batch {b}")));
            }
            adam.step(&mut params, &grads)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch}, batch {b}: {e}")))?;
        }
        log::trace!("surrogate epoch {epoch} done");
    }
    let final_mse = dataset_mse(&params, data)?;
    if !final_mse.is_finite() {
        return Err(Error::NonFinite("surrogate training diverged".into()));
    }
    log::info!("surrogate trained: mse {final_mse:.3e}");
    Ok(TrainedSurrogate { params, final_mse })
}

/// `x_t = x_{t-1} + η ∇f(x_{t-1})` for `t = 1..=iters`. No clamping.
pub fn ascend<M: ScoreModel + ?Sized>(model: &M, x0: &[f64], eta: f64, iters: usize) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    for t in 1..=iters {
        let (_, g) = model.value_and_grad(&x)?;
        if g.len() != x.len() {
            return Err(shape("gradient length differs from design length"));
        }
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi += eta * gi;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("ascent iterate at step {t}")));
        }
    }
    Ok(x)
}

/// Ascends every design of `data` and labels it with the surrogate's
/// prediction. Normalization bounds are carried over unchanged.
pub fn build_synthetic_dataset(surrogate: &MlpParams, data: &Dataset, eta: f64, iters: usize) -> Result<Dataset> {
    let out = crate::par::try_map_range(data.len(), |i| {
        let x = ascend(surrogate, &data.items[i].x, eta, iters)?;
        let y = surrogate.forward(&x)?[0];
        Ok((x, y))
    })?;
    let (xs, ys): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    let mut synth = Dataset::from_normalized(&data.task, xs, ys, data.y_min, data.y_max)?;
    synth.predicted = true;
    Ok(synth)
}
