use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err, ChimeError, Result};

use super::{Scalar, Tensor};

/// AdamW hyperparameters. Defaults: β1 = 0.9, β2 = 0.999, ε = 1e-6.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-6,
            weight_decay: 0.01,
        }
    }
}

/// First/second moments per parameter and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> OptimState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        Self::for_sizes(params.iter().map(Tensor::len))
    }

    pub fn for_sizes(sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = sizes
            .into_iter()
            .map(|n| (vec![T::zero(); n], vec![T::zero(); n]))
            .unzip();
        OptimState { m, v, t: 0 }
    }
}

/// One AdamW update. Gradients are read from each tensor's `grad` (absent
/// means zero). Decay is decoupled and applied before the moment update,
/// only where `decay[i]` is set.
pub fn adamw_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    decay: &[bool],
    state: &mut OptimState<T>,
    lr: f64,
    hp: &AdamW,
) -> Result<()> {
    if !(lr >= 0.0) {
        return Err(arg_err!("learning rate must be non-negative, got {lr}"));
    }
    if params.len() != state.m.len() || params.len() != decay.len() {
        return Err(shape_err!(
            "{} params, {} moment buffers, {} decay flags",
            params.len(),
            state.m.len(),
            decay.len()
        ));
    }
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - hp.beta1.powf(t);
    let bc2 = 1.0 - hp.beta2.powf(t);
    let (b1, b2) = (T::of(hp.beta1), T::of(hp.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - hp.beta1), T::of(1.0 - hp.beta2));
    let decay_factor = T::of(1.0 - lr * hp.weight_decay);

    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        if m.len() != p.len() {
            return Err(shape_err!("moment buffer {i} has {} entries, param {}", m.len(), p.len()));
        }
        let grad = p.grad().map(<[T]>::to_vec);
        let data = p.data_mut();
        for j in 0..data.len() {
            let g = grad.as_ref().map_or(T::zero(), |g| g[j]);
            if decay[i] && hp.weight_decay != 0.0 {
                data[j] = data[j] * decay_factor;
            }
            m[j] = b1 * m[j] + one_b1 * g;
            v[j] = b2 * v[j] + one_b2 * g * g;
            let m_hat = m[j].as_f64() / bc1;
            let v_hat = v[j].as_f64() / bc2;
            data[j] = data[j] - T::of(lr * m_hat / (v_hat.sqrt() + hp.eps));
        }
    }
    Ok(())
}

/// Linear warmup over the first `warmup_fraction` of steps (boundary at
/// `floor(warmup_fraction * total)`), then linear decay to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak: f64,
    pub total_steps: u64,
    pub warmup_fraction: f64,
}

impl LrSchedule {
    pub fn warmup_steps(&self) -> u64 {
        (self.warmup_fraction * self.total_steps as f64).floor() as u64
    }

    pub fn at(&self, step: u64) -> Result<f64> {
        if self.total_steps == 0 {
            return Err(arg_err!("schedule with zero total steps"));
        }
        if step > self.total_steps {
            return Err(arg_err!("step {step} beyond total {}", self.total_steps));
        }
        let warm = self.warmup_steps();
        if step <= warm {
            if warm == 0 {
                return Ok(0.0);
            }
            if step == warm {
                return Ok(self.peak);
            }
            return Ok(self.peak * step as f64 / warm as f64);
        }
        Ok(self.peak * (self.total_steps - step) as f64 / (self.total_steps - warm) as f64)
    }
}

/// Learning rate at `step` with the default 20% warmup.
pub fn lr_at(step: u64, total_steps: u64, peak: f64) -> Result<f64> {
    LrSchedule {
        peak,
        total_steps,
        warmup_fraction: 0.2,
    }
    .at(step)
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm observed before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut [&mut [T]], max_norm: f64) -> Result<f64> {
    let mut sq = 0.0;
    for g in grads.iter() {
        for &x in g.iter() {
            let x = x.as_f64();
            if !x.is_finite() {
                return Err(ChimeError::Numeric("non-finite gradient".into()));
            }
            sq += x * x;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let s = T::of(max_norm / norm);
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|x| *x = *x * s);
        }
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: f64, g: f64) -> Tensor<f64> {
        let mut t = Tensor::from_f64(vec![1], &[v]).unwrap().with_grad();
        t.set_grad(vec![g]).unwrap();
        t
    }

    #[test]
    fn first_adamw_step_matches_bias_correction() {
        let mut p = param(0.0, 1.0);
        let mut st = OptimState::new(std::slice::from_ref(&p));
        let hp = AdamW {
            weight_decay: 0.0,
            ..AdamW::default()
        };
        adamw_step(&mut [&mut p], &[true], &mut st, 1e-5, &hp).unwrap();
        assert!((st.m[0][0] - 0.1).abs() < 1e-15);
        assert!((st.v[0][0] - 0.001).abs() < 1e-15);
        assert_eq!(st.t, 1);
        let expected = -1e-5 / (1.0 + 1e-6);
        assert!((p.data()[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn zero_gradient_leaves_params_but_counts_step() {
        let mut p = param(0.7, 0.0);
        let mut st = OptimState::new(std::slice::from_ref(&p));
        let hp = AdamW {
            weight_decay: 0.0,
            ..AdamW::default()
        };
        adamw_step(&mut [&mut p], &[true], &mut st, 1e-3, &hp).unwrap();
        assert_eq!(p.data()[0], 0.7);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn decay_skips_exempt_params() {
        let mut a = param(1.0, 0.0);
        let mut b = param(1.0, 0.0);
        let mut st = OptimState::for_sizes([1, 1]);
        let hp = AdamW {
            weight_decay: 0.5,
            ..AdamW::default()
        };
        adamw_step(&mut [&mut a, &mut b], &[true, false], &mut st, 0.1, &hp).unwrap();
        assert!((a.data()[0] - 0.95).abs() < 1e-15);
        assert_eq!(b.data()[0], 1.0);
    }

    #[test]
    fn negative_lr_rejected() {
        let mut p = param(0.0, 1.0);
        let mut st = OptimState::new(std::slice::from_ref(&p));
        assert!(adamw_step(&mut [&mut p], &[true], &mut st, -1.0, &AdamW::default()).is_err());
    }

    #[test]
    fn schedule_points() {
        assert_eq!(lr_at(0, 1000, 1e-5).unwrap(), 0.0);
        assert_eq!(lr_at(200, 1000, 1e-5).unwrap(), 1e-5);
        assert!((lr_at(600, 1000, 1e-5).unwrap() - 5e-6).abs() < 1e-20);
        assert_eq!(lr_at(1000, 1000, 1e-5).unwrap(), 0.0);
        assert!(lr_at(0, 0, 1e-5).is_err());
        assert!(lr_at(1001, 1000, 1e-5).is_err());
    }

    #[test]
    fn clip_345() {
        let mut g = vec![3.0f64, 4.0];
        let norm = clip_global_norm(&mut [g.as_mut_slice()], 1.0).unwrap();
        assert_eq!(norm, 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn clip_leaves_small_and_zero() {
        let mut g = vec![0.3f64, 0.4];
        clip_global_norm(&mut [g.as_mut_slice()], 1.0).unwrap();
        assert_eq!(g, vec![0.3, 0.4]);
        let mut z = vec![0.0f64; 3];
        assert_eq!(clip_global_norm(&mut [z.as_mut_slice()], 1.0).unwrap(), 0.0);
        assert_eq!(z, vec![0.0; 3]);
        let mut bad = vec![f64::NAN];
        assert!(clip_global_norm(&mut [bad.as_mut_slice()], 1.0).is_err());
    }
}
