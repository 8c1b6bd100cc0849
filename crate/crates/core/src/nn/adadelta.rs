//! Adadelta optimizer.

use serde::{Deserialize, Serialize};

use super::{NnError, Scalar};

/// Decay rate and conditioning constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Adadelta {
    pub rho: f64,
    pub eps: f64,
}

impl Default for Adadelta {
    fn default() -> Self {
        Self {
            rho: 0.95,
            eps: 1e-6,
        }
    }
}

/// Running averages of squared gradients and squared updates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState<T> {
    pub settings: Adadelta,
    pub eg2: Vec<T>,
    pub edx2: Vec<T>,
}

impl<T: Scalar> AdadeltaState<T> {
    pub fn new(len: usize, settings: Adadelta) -> Self {
        Self {
            settings,
            eg2: vec![T::zero(); len],
            edx2: vec![T::zero(); len],
        }
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<(), NnError> {
        for (what, n) in [("parameters", params.len()), ("gradients", grads.len())] {
            if n != self.eg2.len() {
                return Err(NnError::ShapeMismatch {
                    what,
                    expected: self.eg2.len(),
                    found: n,
                });
            }
        }
        let rho = T::from_f64(self.settings.rho).expect("finite");
        let eps = T::from_f64(self.settings.eps).expect("finite");
        let one_m = T::one() - rho;
        for i in 0..params.len() {
            let g = grads[i];
            self.eg2[i] = rho * self.eg2[i] + one_m * g * g;
            let dx = -((self.edx2[i] + eps).sqrt() / (self.eg2[i] + eps).sqrt()) * g;
            self.edx2[i] = rho * self.edx2[i] + one_m * dx * dx;
            params[i] += dx;
        }
        Ok(())
    }
}
