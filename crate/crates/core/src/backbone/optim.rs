use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            weight_decay: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive-moment state; moments start at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub config: AdamConfig,
}

impl OptimizerState {
    pub fn new(param_count: usize, config: AdamConfig) -> Self {
        Self {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step_count: 0,
            config,
        }
    }

    pub fn set_weight_decay(&mut self, weight_decay: f64) {
        self.config.weight_decay = weight_decay;
    }
}

/// One Adam update with bias correction. The L2 penalty `λ‖θ‖²` enters as
/// `g + 2λθ`. Entries with `active[i] == false` are left untouched, moments
/// included.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[f64],
    state: &mut OptimizerState,
    active: Option<&[bool]>,
) -> Result<()> {
    adam_update(params.as_mut_slice(), grads, state, active)
}

/// [`adam_step`] over a raw parameter slice.
pub fn adam_update(
    theta: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    active: Option<&[bool]>,
) -> Result<()> {
    let n = theta.len();
    if grads.len() != n || state.first_moment.len() != n || state.second_moment.len() != n {
        return Err(Error::shape(
            "adam_step",
            format!(
                "params {n}, grads {}, moments {}/{}",
                grads.len(),
                state.first_moment.len(),
                state.second_moment.len()
            ),
        ));
    }
    if let Some(a) = active {
        if a.len() != n {
            return Err(Error::shape("adam_step", "update mask length differs"));
        }
    }
    let c = state.config;
    state.step_count += 1;
    let t = state.step_count as i32;
    let bias1 = 1.0 - c.beta1.powi(t);
    let bias2 = 1.0 - c.beta2.powi(t);
    for i in 0..n {
        if let Some(a) = active {
            if !a[i] {
                continue;
            }
        }
        let g = grads[i] + 2.0 * c.weight_decay * theta[i];
        let m = c.beta1 * state.first_moment[i] + (1.0 - c.beta1) * g;
        let v = c.beta2 * state.second_moment[i] + (1.0 - c.beta2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / bias1;
        let v_hat = v / bias2;
        theta[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::params::ArchConfig;

    fn small() -> ModelParams {
        ModelParams::init(
            ArchConfig {
                t_in: 2,
                t_out: 1,
                feature_count: 1,
                hidden1: 2,
                hidden2: 2,
            },
            3,
        )
    }

    #[test]
    fn zero_grad_zero_decay_is_noop() {
        let mut p = small();
        let before = p.clone();
        let mut s = OptimizerState::new(
            p.len(),
            AdamConfig {
                weight_decay: 0.0,
                ..AdamConfig::default()
            },
        );
        adam_step(&mut p, &vec![0.0; before.len()], &mut s, None).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = small();
        let before = p.clone();
        let grads: Vec<f64> = (0..p.len()).map(|i| if i % 2 == 0 { 0.3 } else { -2.0 }).collect();
        let mut s = OptimizerState::new(
            p.len(),
            AdamConfig {
                weight_decay: 0.0,
                ..AdamConfig::default()
            },
        );
        adam_step(&mut p, &grads, &mut s, None).unwrap();
        for ((a, b), g) in p.as_slice().iter().zip(before.as_slice()).zip(&grads) {
            let expected = -0.01 * g.signum();
            assert!((a - b - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn decay_only_shrinks_positive_params() {
        let arch = *small().arch();
        let mut p = ModelParams::from_flat(arch, vec![0.5; arch.param_count()]).unwrap();
        let mut s = OptimizerState::new(
            p.len(),
            AdamConfig {
                weight_decay: 0.001,
                ..AdamConfig::default()
            },
        );
        adam_step(&mut p, &vec![0.0; arch.param_count()], &mut s, None).unwrap();
        assert!(p.as_slice().iter().all(|&v| v < 0.5 && v > 0.0));
    }

    #[test]
    fn inactive_entries_untouched() {
        let mut p = small();
        let before = p.clone();
        let active: Vec<bool> = (0..p.len()).map(|i| i % 3 != 0).collect();
        let mut s = OptimizerState::new(p.len(), AdamConfig::default());
        let grads = vec![1.0; p.len()];
        adam_step(&mut p, &grads, &mut s, Some(&active)).unwrap();
        for (i, on) in active.iter().enumerate() {
            if !on {
                assert_eq!(p.as_slice()[i], before.as_slice()[i]);
                assert_eq!(s.first_moment[i], 0.0);
            } else {
                assert_ne!(p.as_slice()[i], before.as_slice()[i]);
            }
        }
    }

    #[test]
    fn length_mismatch_errors() {
        let mut p = small();
        let mut s = OptimizerState::new(p.len(), AdamConfig::default());
        assert!(adam_step(&mut p, &[0.0], &mut s, None).is_err());
    }
}
