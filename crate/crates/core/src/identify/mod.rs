//! Online identification of `Y(k+d) = θᵀX(k) + h(k)`, where
//! `Y(k) = F(z⁻¹)V(k)`: a linear estimator and a nonlinear one whose network
//! estimates `h`.

pub mod linear;
pub mod neural;
pub mod nonlinear;
pub mod regressor;

use nalgebra::DVector;
use thiserror::Error;

pub use linear::{EstimatorBounds, LinearEstimator, UpdateReport};
pub use neural::{Gradients, NeuralConfig, NeuralNet, TrainOutcome};
pub use nonlinear::{CachedEstimate, NonlinearEstimator, NonlinearUpdate};
pub use regressor::RegressorState;

use crate::polyalg::{PolyError, PolyMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdentifyError {
    #[error("warm-up: {available} of {needed} samples of history available")]
    WarmUp { needed: usize, available: usize },
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid estimator bounds: {0}")]
    InvalidBounds(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// `Y(k) = F(z⁻¹)V(k)` from outputs ordered newest first.
pub fn form_transformed_output(
    outputs_newest_first: &[&DVector<f64>],
    f: &PolyMatrix,
) -> Result<DVector<f64>, IdentifyError> {
    Ok(f.apply_recent(outputs_newest_first)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_signal_through_design_filter() {
        let f = PolyMatrix::scalar(4, &[1.0, -0.2]).unwrap();
        let v = DVector::from_element(4, 300.0);
        let y = form_transformed_output(&[&v, &v], &f).unwrap();
        for yi in y.iter() {
            assert!((yi - 240.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_design_passes_output() {
        let v = DVector::from_column_slice(&[1.0, 2.0]);
        let y = form_transformed_output(&[&v], &PolyMatrix::identity(2)).unwrap();
        assert_eq!(y, v);
    }
}
