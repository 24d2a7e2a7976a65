use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam { .. } => "adam",
        }
    }
}

/// Optimizer state over a fixed, ordered list of parameters.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::adam(), lr)
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Apply one update. Nothing is modified if any gradient is non-finite or
    /// any shape disagrees.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::invalid(format!(
                "optimizer: {} params but {} grads",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            p.expect_same_shape("optimizer", g)?;
            if !g.is_finite() {
                return Err(Error::Diverged {
                    step: self.step as usize,
                    detail: format!("non-finite gradient for parameter {i} of shape {:?}", g.shape()),
                });
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.shape() != p.shape()) {
            return Err(Error::invalid("optimizer: parameter set changed between steps"));
        }
        self.step += 1;

        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    p.data_mut().iter_mut().zip(g.data()).for_each(|(p, g)| *p -= self.lr * g);
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
                    let it = p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
                    for ((p, &g), (m, v)) in it {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *p -= self.lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
