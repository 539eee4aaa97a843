use super::mlp::{MlpParams, TENSOR_NAMES};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one [`MlpParams`].
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    m: MlpParams,
    v: MlpParams,
    step: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &MlpParams {
        &self.m
    }

    pub fn second_moment(&self) -> &MlpParams {
        &self.v
    }

    /// Applies one update in place. A non-finite gradient leaves both the
    /// parameters and the state untouched.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams) -> Result<()> {
        for (name, g) in TENSOR_NAMES.iter().zip(grads.tensors()) {
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient tensor {name} at index {i} (adam step {})",
                    self.step + 1
                )));
            }
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::RngStream;

    fn filled(p: &MlpParams, f: impl Fn(usize) -> f64) -> MlpParams {
        let mut g = p.zeros_like();
        let mut k = 0;
        for t in g.tensors_mut() {
            for v in t.iter_mut() {
                *v = f(k);
                k += 1;
            }
        }
        g
    }

    #[test]
    fn first_step_is_sign_like() {
        let p0 = MlpParams::init(3, 4, 2, &mut RngStream::new(1, 0));
        let g = filled(&p0, |k| ((k as f64) * 0.37).sin() * 0.01);
        let cfg = AdamConfig::with_lr(1e-2);
        let mut p = p0.clone();
        let mut st = AdamState::new(&p, cfg);
        st.step(&mut p, &g).unwrap();
        for ((a, b), gg) in p.tensors().iter().zip(p0.tensors()).zip(g.tensors()) {
            for i in 0..a.len() {
                let want = b[i] - cfg.lr * gg[i] / (gg[i].abs() + cfg.eps);
                assert!((a[i] - want).abs() < 1e-15, "{} vs {}", a[i], want);
            }
        }
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let p0 = MlpParams::init(3, 4, 2, &mut RngStream::new(2, 0));
        let mut p = p0.clone();
        let mut st = AdamState::new(&p, AdamConfig::default());
        let g = p.zeros_like();
        st.step(&mut p, &g).unwrap();
        st.step(&mut p, &g).unwrap();
        assert_eq!(p, p0);
        assert!(st.first_moment().tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
        assert!(st.second_moment().tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn quadratic_loss_decreases() {
        // loss(p) = ½‖p − c‖², gradient p − c.
        let mut p = MlpParams::init(2, 3, 1, &mut RngStream::new(3, 0));
        let target = filled(&p, |k| (k as f64) * 0.1 - 0.5);
        let loss = |p: &MlpParams| -> f64 {
            p.tensors()
                .iter()
                .zip(target.tensors())
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * (x - y).powi(2)).sum::<f64>())
                .sum()
        };
        let mut st = AdamState::new(&p, AdamConfig::with_lr(1e-3));
        let mut prev = loss(&p);
        for _ in 0..2 {
            let mut g = p.clone();
            g.add_scaled(-1.0, &target);
            st.step(&mut p, &g).unwrap();
            let now = loss(&p);
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected_by_name() {
        let mut p = MlpParams::init(2, 3, 1, &mut RngStream::new(4, 0));
        let before = p.clone();
        let mut g = p.zeros_like();
        g.w2.set(1, 2, f64::INFINITY);
        let mut st = AdamState::new(&p, AdamConfig::default());
        let err = st.step(&mut p, &g).unwrap_err().to_string();
        assert!(err.contains("w2"), "{err}");
        assert_eq!(p, before);
        assert_eq!(st.step_count(), 0);
    }

    #[test]
    fn tiny_lr_barely_moves() {
        let p0 = MlpParams::init(2, 3, 1, &mut RngStream::new(5, 0));
        let g = filled(&p0, |k| (k as f64).cos());
        let mut p = p0.clone();
        let mut st = AdamState::new(&p, AdamConfig::with_lr(1e-12));
        st.step(&mut p, &g).unwrap();
        for (a, b) in p.tensors().iter().zip(p0.tensors()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= 1.1e-12);
            }
        }
    }
}
