use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{cast, Parameter, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
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

/// Moment estimates, one pair per registered parameter in registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub names: Vec<String>,
    pub first: Vec<Array2<T>>,
    pub second: Vec<Array2<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[&Parameter<T>]) -> Self {
        Self {
            config,
            step: 0,
            names: params.iter().map(|p| p.name.clone()).collect(),
            first: params.iter().map(|p| Array2::zeros(p.value.raw_dim())).collect(),
            second: params.iter().map(|p| Array2::zeros(p.value.raw_dim())).collect(),
        }
    }
}

/// One bias-corrected Adam update; zeroes the gradients afterwards.
///
/// A non-finite gradient anywhere aborts the whole step before any parameter
/// is touched.
pub fn adam_step<T: Real>(params: &mut [&mut Parameter<T>], state: &mut AdamState<T>) -> Result<()> {
    if params.len() != state.first.len() {
        return Err(Error::Shape(format!(
            "optimizer tracks {} parameters, got {}",
            state.first.len(),
            params.len()
        )));
    }
    for (p, name) in params.iter().zip(&state.names) {
        if &p.name != name {
            return Err(Error::Shape(format!(
                "optimizer expected parameter {name}, got {}",
                p.name
            )));
        }
        if let Some(bad) = p.grad.iter().find(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient {bad} in parameter {}",
                p.name
            )));
        }
    }

    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as f64;
    let bc1 = 1.0 - beta1.powf(t);
    let bc2 = 1.0 - beta2.powf(t);
    let (b1, b2): (T, T) = (cast(beta1), cast(beta2));
    let (one_b1, one_b2): (T, T) = (cast(1.0 - beta1), cast(1.0 - beta2));

    for (i, p) in params.iter_mut().enumerate() {
        let p = &mut **p;
        Zip::from(&mut p.value)
            .and(&mut p.grad)
            .and(&mut state.first[i])
            .and(&mut state.second[i])
            .for_each(|w, g, m, v| {
                *m = b1 * *m + one_b1 * *g;
                *v = b2 * *v + one_b2 * *g * *g;
                let m_hat = m.to_f64().unwrap_or(f64::NAN) / bc1;
                let v_hat = v.to_f64().unwrap_or(f64::NAN) / bc2;
                *w = *w - cast::<T>(lr * m_hat / (v_hat.sqrt() + eps));
                *g = T::zero();
            });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cfg(lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut w = Parameter::new("w", array![[1.0f32, -2.0]]);
        let mut state = AdamState::new(cfg(0.1), &[&w]);
        adam_step(&mut [&mut w], &mut state).unwrap();
        assert_eq!(w.value, array![[1.0f32, -2.0]]);
    }

    #[test]
    fn first_step_on_square() {
        // f(w) = w^2 at w = 1: g = 2, m_hat = 2, v_hat = 4, step = lr * 2 / 2.
        let mut w = Parameter::new("w", array![[1.0f64]]);
        let mut state = AdamState::new(cfg(0.1), &[&w]);
        w.grad[[0, 0]] = 2.0 * w.value[[0, 0]];
        adam_step(&mut [&mut w], &mut state).unwrap();
        assert!((w.value[[0, 0]] - 0.9).abs() < 1e-8);
        assert!(w.grad_is_zero());
    }

    #[test]
    fn parameters_update_independently() {
        let mut a = Parameter::new("a", array![[1.0f64]]);
        let mut b = Parameter::new("b", array![[1.0f64]]);
        let mut state = AdamState::new(cfg(0.1), &[&a, &b]);
        a.grad[[0, 0]] = 3.0;
        adam_step(&mut [&mut a, &mut b], &mut state).unwrap();
        assert!(a.value[[0, 0]] < 1.0);
        assert_eq!(b.value[[0, 0]], 1.0);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut a = Parameter::new("a", array![[1.0f32]]);
        let mut state = AdamState::new(cfg(0.1), &[&a]);
        a.grad[[0, 0]] = f32::NAN;
        let err = adam_step(&mut [&mut a], &mut state).unwrap_err();
        assert!(err.is_numerical());
        assert_eq!(a.value[[0, 0]], 1.0);
        assert_eq!(state.step, 0);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut w = Parameter::new("w", array![[0.3f32, -0.1], [0.2, 0.9]]);
            let mut st = AdamState::new(cfg(0.01), &[&w]);
            for k in 0..5 {
                w.grad = w.value.mapv(|x| x * k as f32 + 0.1);
                adam_step(&mut [&mut w], &mut st).unwrap();
            }
            w.value
        };
        assert_eq!(run(), run());
    }
}
