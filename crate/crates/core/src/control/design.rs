use nalgebra::{DMatrix, DVector};

use super::ControlError;
use crate::polyalg::PolyMatrix;

/// Reference model `F(z⁻¹)V(k+d) = R V_ref(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerDesign {
    f: PolyMatrix,
    r: DMatrix<f64>,
    v_ref: DVector<f64>,
}

impl ControllerDesign {
    /// `F` must be stable and diagonal, `R` diagonal.
    pub fn new(f: PolyMatrix, r: DMatrix<f64>, v_ref: DVector<f64>) -> Result<Self, ControlError> {
        let m = f.dim();
        if r.shape() != (m, m) || v_ref.len() != m {
            return Err(ControlError::Design(
                "F, R and V_ref disagree on channel count".into(),
            ));
        }
        if !f.is_diagonal() {
            return Err(ControlError::Design("F must be diagonal".into()));
        }
        if !f.is_stable()? {
            return Err(ControlError::Design("F must be stable".into()));
        }
        let off_diag = (0..m).any(|i| (0..m).any(|j| i != j && r[(i, j)] != 0.0));
        if off_diag {
            return Err(ControlError::Design("R must be diagonal".into()));
        }
        Ok(Self { f, r, v_ref })
    }

    /// `F = (1 − pole·z⁻¹)I` and `R = F(1)`, so a constant reference is
    /// tracked with unit DC gain.
    pub fn first_order(pole: f64, v_ref: DVector<f64>) -> Result<Self, ControlError> {
        let m = v_ref.len();
        let f = PolyMatrix::scalar(m, &[1.0, -pole])?;
        let r = f.at_one();
        Self::new(f, r, v_ref)
    }

    pub fn f(&self) -> &PolyMatrix {
        &self.f
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn v_ref(&self) -> &DVector<f64> {
        &self.v_ref
    }

    pub fn channels(&self) -> usize {
        self.f.dim()
    }

    /// `R V_ref`.
    pub fn target(&self) -> DVector<f64> {
        &self.r * &self.v_ref
    }

    /// Same design with every signal divided by `base`.
    pub fn scaled(&self, base: f64) -> Self {
        Self {
            f: self.f.clone(),
            r: self.r.clone(),
            v_ref: &self.v_ref / base,
        }
    }
}
