//! Adam and SGD (momentum, optional Nesterov) with coupled L2 weight decay,
//! plus a reduce-on-plateau learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Param;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd { momentum: f64, nesterov: bool },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd_nesterov(momentum: f64) -> Self {
        OptimizerKind::Sgd {
            momentum,
            nesterov: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    /// First moments (Adam) or momentum buffers (SGD).
    pub m: Vec<Tensor>,
    /// Second moments (Adam only; empty tensors for SGD).
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64, params: &[Param]) -> Self {
        let zeros = |p: &Param| Tensor::zeros(p.value.shape());
        let v = match kind {
            OptimizerKind::Adam { .. } => params.iter().map(zeros).collect(),
            OptimizerKind::Sgd { .. } => Vec::new(),
        };
        OptimizerState {
            kind,
            lr,
            weight_decay,
            m: params.iter().map(zeros).collect(),
            v,
            step: 0,
        }
    }

    pub fn apply(&mut self, params: &mut [Param], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::dim("optimizer", "parameters", self.m.len(), grads.len()));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.value.shape() != g.shape() {
                return Err(Error::dim(
                    "optimizer",
                    p.name.clone(),
                    format!("{:?}", p.value.shape()),
                    format!("{:?}", g.shape()),
                ));
            }
        }
        self.step += 1;
        let (lr, wd) = (self.lr, self.weight_decay);
        match self.kind {
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
                    for (j, w) in p.value.data_mut().iter_mut().enumerate() {
                        let gj = g.data()[j] + wd * *w;
                        m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                        *w -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                    }
                }
            }
            OptimizerKind::Sgd { momentum, nesterov } => {
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let buf = self.m[i].data_mut();
                    for (j, w) in p.value.data_mut().iter_mut().enumerate() {
                        let gj = g.data()[j] + wd * *w;
                        buf[j] = momentum * buf[j] + gj;
                        let d = if nesterov { gj + momentum * buf[j] } else { buf[j] };
                        *w -= lr * d;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `factor` after `patience` epochs without
/// improvement of the monitored loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub factor: f64,
    pub patience: usize,
    pub best: f64,
    pub bad_epochs: usize,
}

impl Plateau {
    pub fn new(factor: f64, patience: usize) -> Self {
        Plateau {
            factor,
            patience,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Returns the new learning rate.
    pub fn observe(&mut self, loss: f64, lr: f64) -> f64 {
        if loss < self.best {
            self.best = loss;
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs > self.patience {
            self.bad_epochs = 0;
            lr * self.factor
        } else {
            lr
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Vec<Param> {
        vec![Param {
            name: "w".into(),
            value: Tensor::from_slice(&[v]),
        }]
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = scalar(0.7);
        let mut opt = OptimizerState::new(OptimizerKind::adam(), 0.1, 0.0, &p);
        for _ in 0..3 {
            opt.apply(&mut p, &[Tensor::from_slice(&[0.0])]).unwrap();
        }
        assert_eq!(p[0].value.data(), &[0.7]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = scalar(0.0);
        let mut opt = OptimizerState::new(OptimizerKind::adam(), 0.1, 0.0, &p);
        opt.apply(&mut p, &[Tensor::from_slice(&[1.0])]).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = -0.1 / (1 + 1e-8)
        assert!((p[0].value.item() + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn nesterov_hand_example() {
        let mut p = scalar(1.0);
        let mut opt = OptimizerState::new(OptimizerKind::sgd_nesterov(0.9), 0.1, 0.0, &p);
        opt.apply(&mut p, &[Tensor::from_slice(&[1.0])]).unwrap();
        // buf = 1, d = 1 + 0.9 = 1.9
        assert!((p[0].value.item() - 0.81).abs() < 1e-15);
        opt.apply(&mut p, &[Tensor::from_slice(&[1.0])]).unwrap();
        // buf = 1.9, d = 1 + 1.71 = 2.71
        assert!((p[0].value.item() - (0.81 - 0.271)).abs() < 1e-15);
    }

    #[test]
    fn coupled_weight_decay() {
        let mut p = scalar(2.0);
        let mut opt = OptimizerState::new(OptimizerKind::Sgd { momentum: 0.0, nesterov: false }, 0.5, 0.1, &p);
        opt.apply(&mut p, &[Tensor::from_slice(&[0.0])]).unwrap();
        assert!((p[0].value.item() - 1.9).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = scalar(0.0);
        let mut opt = OptimizerState::new(OptimizerKind::adam(), 0.1, 0.0, &p);
        assert!(opt.apply(&mut p, &[Tensor::zeros(&[2])]).is_err());
        assert!(opt.apply(&mut p, &[]).is_err());
    }

    #[test]
    fn plateau_halves_after_patience() {
        let mut s = Plateau::new(0.5, 2);
        let mut lr = 1.0;
        for loss in [1.0, 0.9, 0.95, 0.95] {
            lr = s.observe(loss, lr);
        }
        assert_eq!(lr, 1.0);
        lr = s.observe(0.95, lr);
        assert_eq!(lr, 0.5);
        lr = s.observe(0.5, lr);
        assert_eq!(lr, 0.5);
    }
}
