//! RMSProp: `v ← ρv + (1−ρ)g²`, `p ← p − lr·g / (√v + ε)`.

use alloc::vec;
use alloc::vec::Vec;

use super::{Gradients, Network, NnError};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    mean_square: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub const DEFAULT_LR: f64 = 0.00025;
    pub const DEFAULT_RHO: f64 = 0.95;
    pub const DEFAULT_EPSILON: f64 = 1e-6;

    pub fn new(learning_rate: f64, rho: f64, epsilon: f64) -> Result<Self, NnError> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(NnError::InvalidOptimizer("rho must lie in (0, 1)"));
        }
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(NnError::InvalidOptimizer("learning rate must be positive"));
        }
        if !(epsilon > 0.0) {
            return Err(NnError::InvalidOptimizer("epsilon must be positive"));
        }
        Ok(Self {
            learning_rate,
            rho,
            epsilon,
            mean_square: Vec::new(),
        })
    }

    pub fn rmsprop(learning_rate: f64) -> Result<Self, NnError> {
        Self::new(learning_rate, Self::DEFAULT_RHO, Self::DEFAULT_EPSILON)
    }

    /// Running mean of squared gradients, one slot per parameter slice.
    pub fn mean_square(&self) -> &[Vec<f64>] {
        &self.mean_square
    }

    /// One update over matching parameter/gradient slices. The running
    /// averages are created on first use and must keep the same shapes.
    pub fn step<'a, P, G>(&mut self, params: P, grads: G) -> Result<(), NnError>
    where
        P: IntoIterator<Item = &'a mut [f64]>,
        G: IntoIterator<Item = &'a [f64]>,
    {
        let params: Vec<&mut [f64]> = params.into_iter().collect();
        let grads: Vec<&[f64]> = grads.into_iter().collect();
        let p_shape: Vec<usize> = params.iter().map(|p| p.len()).collect();
        let g_shape: Vec<usize> = grads.iter().map(|g| g.len()).collect();
        if p_shape != g_shape {
            return Err(NnError::ShapeMismatch {
                expected: p_shape,
                found: g_shape,
            });
        }
        if self.mean_square.is_empty() {
            self.mean_square = p_shape.iter().map(|n| vec![0.0; *n]).collect();
        }
        let v_shape: Vec<usize> = self.mean_square.iter().map(|v| v.len()).collect();
        if v_shape != p_shape {
            return Err(NnError::ShapeMismatch {
                expected: v_shape,
                found: p_shape,
            });
        }
        let (lr, rho, eps) = (self.learning_rate, self.rho, self.epsilon);
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.mean_square) {
            for ((pi, gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = rho * *vi + (1.0 - rho) * gi * gi;
                *pi -= lr * gi / (libm::sqrt(*vi) + eps);
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, net: &mut Network, grads: &Gradients) -> Result<(), NnError> {
        self.step(net.parameters_mut(), grads.slices())
    }
}
