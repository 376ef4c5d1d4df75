use serde::{Deserialize, Serialize};

use super::params::{Gradient, Parameterized};
use crate::error::{check_len, Error, Result};

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

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.eps > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid Adam configuration {self:?}")))
        }
    }
}

/// Moment accumulators for one model. Shapes are fixed on the first update.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam step. Parameters are untouched if any gradient
/// entry is non-finite or shapes disagree.
pub fn adam_update<P: Parameterized + ?Sized>(
    params: &mut P,
    grads: &Gradient,
    state: &mut AdamState,
) -> Result<()> {
    grads.check_matches(params)?;
    for (name, g) in grads.groups() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { param: name.clone() });
        }
    }
    if state.step == 0 && state.first.is_empty() {
        state.first = grads.groups().iter().map(|(_, g)| vec![0.0; g.len()]).collect();
        state.second = state.first.clone();
    }
    check_len("adam accumulator groups", grads.groups().len(), state.first.len())?;
    for ((_, g), m) in grads.groups().iter().zip(&state.first) {
        check_len("adam accumulator", g.len(), m.len())?;
    }

    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);

    let groups = params.param_groups_mut();
    for (((_, p), (_, g)), (m, v)) in groups
        .into_iter()
        .zip(grads.groups())
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug, PartialEq)]
    struct Scalars(Vec<f64>);

    impl Parameterized for Scalars {
        fn param_groups(&self) -> Vec<(String, &[f64])> {
            vec![("x".into(), &self.0)]
        }
        fn param_groups_mut(&mut self) -> Vec<(String, &mut [f64])> {
            vec![("x".into(), &mut self.0)]
        }
    }

    fn grad(v: Vec<f64>) -> Gradient {
        Gradient::from_groups(vec![("x".into(), v)])
    }

    #[test]
    fn zero_gradient_is_stationary() {
        let mut p = Scalars(vec![0.5, -1.0, 3.0]);
        let mut state = AdamState::new(AdamConfig::default());
        for _ in 0..10 {
            adam_update(&mut p, &grad(vec![0.0; 3]), &mut state).unwrap();
        }
        assert_eq!(p.0, vec![0.5, -1.0, 3.0]);
        assert_eq!(state.step(), 10);
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        let mut p = Scalars(vec![0.0]);
        let mut state = AdamState::new(AdamConfig::default());
        adam_update(&mut p, &grad(vec![1.0]), &mut state).unwrap();
        // m_hat = v_hat = 1, step = lr / (1 + eps)
        assert!((p.0[0] + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn identical_inputs_give_identical_results() {
        let run = || {
            let mut p = Scalars(vec![0.1, 0.2]);
            let mut state = AdamState::new(AdamConfig::default());
            for k in 0..5 {
                adam_update(&mut p, &grad(vec![k as f64, -0.5]), &mut state).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = Scalars(vec![1.0]);
        let mut state = AdamState::new(AdamConfig::default());
        let err = adam_update(&mut p, &grad(vec![f64::NAN]), &mut state).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { ref param } if param == "x"));
        assert_eq!(p.0, vec![1.0]);
        assert_eq!(state.step(), 0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Scalars(vec![1.0, 2.0]);
        let mut state = AdamState::new(AdamConfig::default());
        assert!(adam_update(&mut p, &grad(vec![1.0]), &mut state).is_err());
    }
}
