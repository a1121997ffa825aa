use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

use super::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd { lr: f64 },
    Adadelta { lr: f64, rho: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adadelta(lr: f64) -> Self {
        OptimizerKind::Adadelta {
            lr,
            rho: 0.9,
            eps: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            OptimizerKind::Sgd { lr } if !(lr > 0.0 && lr.is_finite()) => {
                invalid(format!("learning rate {lr} must be positive"))
            }
            OptimizerKind::Adadelta { lr, rho, eps } => {
                if !(lr > 0.0 && lr.is_finite()) {
                    invalid(format!("learning rate {lr} must be positive"))
                } else if !(0.0..1.0).contains(&rho) {
                    invalid(format!("rho {rho} must be in [0, 1)"))
                } else if !(eps > 0.0 && eps.is_finite()) {
                    invalid(format!("eps {eps} must be positive"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Optimizer kind plus Adadelta's running averages of squared gradients
/// and squared updates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub sq_grad: Option<ModelParams>,
    pub sq_delta: Option<ModelParams>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            sq_grad: None,
            sq_delta: None,
        }
    }

    pub(crate) fn step_in_place(
        &mut self,
        params: &mut ModelParams,
        grads: &ModelParams,
    ) -> Result<()> {
        params.check_compatible(grads)?;
        match self.kind {
            OptimizerKind::Sgd { lr } => params.add_scaled(grads, -lr),
            OptimizerKind::Adadelta { lr, rho, eps } => {
                let sq_grad = self.sq_grad.get_or_insert_with(|| params.zeros_like());
                let sq_delta = self.sq_delta.get_or_insert_with(|| params.zeros_like());
                sq_grad.check_compatible(params)?;
                sq_delta.check_compatible(params)?;
                let values = params
                    .values_mut()
                    .zip(grads.values())
                    .zip(sq_grad.values_mut().zip(sq_delta.values_mut()));
                for ((x, g), (eg, ed)) in values {
                    *eg = rho * *eg + (1.0 - rho) * g * g;
                    let delta = -((*ed + eps).sqrt() / (*eg + eps).sqrt()) * g;
                    *ed = rho * *ed + (1.0 - rho) * delta * delta;
                    *x += lr * delta;
                }
                Ok(())
            }
        }
    }
}

/// One update. Pure: inputs are left untouched.
pub fn optimizer_step(
    state: &OptimizerState,
    params: &ModelParams,
    grads: &ModelParams,
) -> Result<(ModelParams, OptimizerState)> {
    let mut state = state.clone();
    let mut params = params.clone();
    state.step_in_place(&mut params, grads)?;
    Ok((params, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, Tensor};

    // a 1x1 softmax model with one class has exactly two scalars
    fn scalar(w: f64, b: f64) -> ModelParams {
        ModelParams::from_tensors(
            Architecture::Softmax,
            (1, 1),
            1,
            vec![
                Tensor {
                    name: "dense.weight".into(),
                    shape: vec![1, 1],
                    data: vec![w],
                },
                Tensor {
                    name: "dense.bias".into(),
                    shape: vec![1],
                    data: vec![b],
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn sgd_step() {
        let state = OptimizerState::new(OptimizerKind::Sgd { lr: 0.1 });
        let (p, _) = optimizer_step(&state, &scalar(1.0, 0.0), &scalar(2.0, 0.0)).unwrap();
        assert!((p.tensors()[0].data[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adadelta_first_step() {
        let kind = OptimizerKind::Adadelta {
            lr: 1.0,
            rho: 0.9,
            eps: 1e-6,
        };
        let state = OptimizerState::new(kind);
        let (p, s) = optimizer_step(&state, &scalar(1.0, 0.0), &scalar(1.0, 0.0)).unwrap();
        // -sqrt(1e-6) / sqrt(0.1 + 1e-6), evaluated by hand
        let expected_delta = -0.001 / (0.100_001f64).sqrt();
        assert!((expected_delta + 0.003_162_3).abs() < 1e-7);
        assert!((p.tensors()[0].data[0] - (1.0 + expected_delta)).abs() < 1e-15);
        let eg = s.sq_grad.unwrap().tensors()[0].data[0];
        let ed = s.sq_delta.unwrap().tensors()[0].data[0];
        assert!((eg - 0.1).abs() < 1e-15);
        assert!((ed - 0.1 * expected_delta * expected_delta).abs() < 1e-18);
        assert!(state.sq_grad.is_none(), "input state untouched");
    }

    #[test]
    fn zero_gradient_decays_accumulators() {
        let kind = OptimizerKind::adadelta(0.5);
        let mut state = OptimizerState::new(kind);
        let mut p = scalar(1.0, 2.0);
        state.step_in_place(&mut p, &scalar(3.0, -1.0)).unwrap();
        let (p2, s2) = optimizer_step(&state, &p, &scalar(0.0, 0.0)).unwrap();
        assert_eq!(p2, p);
        let before: Vec<f64> = state.sq_grad.as_ref().unwrap().values().collect();
        let after: Vec<f64> = s2.sq_grad.as_ref().unwrap().values().collect();
        for (b, a) in before.iter().zip(&after) {
            assert!((a - 0.9 * b).abs() < 1e-15);
        }
        let before: Vec<f64> = state.sq_delta.as_ref().unwrap().values().collect();
        let after: Vec<f64> = s2.sq_delta.as_ref().unwrap().values().collect();
        for (b, a) in before.iter().zip(&after) {
            assert!((a - 0.9 * b).abs() < 1e-18);
            assert!(*a >= 0.0);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let state = OptimizerState::new(OptimizerKind::Sgd { lr: 0.1 });
        let other = ModelParams::zeros(Architecture::Softmax, (2, 1), 1).unwrap();
        assert!(optimizer_step(&state, &scalar(1.0, 0.0), &other).is_err());
    }

    #[test]
    fn validation() {
        assert!(OptimizerKind::Sgd { lr: 0.0 }.validate().is_err());
        assert!(OptimizerKind::adadelta(0.005).validate().is_ok());
        assert!(OptimizerKind::Adadelta {
            lr: 1.0,
            rho: 1.0,
            eps: 1e-6
        }
        .validate()
        .is_err());
    }
}
