//! Certainty-equivalence control laws: choose `E(k)` so that the estimated
//! model predicts `Y(k+d) = R V_ref(k)`.

use nalgebra::{DMatrix, DVector};

use super::ControlError;
use crate::identify::linear::leading_block;
use crate::identify::RegressorState;

/// Residual tolerance of the leading-block solve, relative to the size of
/// the right-hand side.
pub const SOLVE_TOL: f64 = 1e-9;

/// Solves `(LB)₀ E(k) = target − Σ K_i V(k−i) − Σ_{i≥1} (LB)_i E(k−i)` for
/// `E(k)`, where the sums are `θᵀX(k)` evaluated with the `E(k)` slot empty.
pub fn solve_for_input(
    theta: &DMatrix<f64>,
    regressor: &RegressorState,
    target: &DVector<f64>,
) -> Result<DVector<f64>, ControlError> {
    let m = regressor.channels();
    let n = regressor.order();
    let x0 = regressor.regressor(&DVector::zeros(m))?;
    let rhs = target - theta.tr_mul(&x0);
    let lead = leading_block(theta, m, n);
    let e = lead
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(ControlError::IllConditioned {
            residual: f64::INFINITY,
        })?;
    let residual = (&lead * &e - &rhs).norm();
    if !(residual <= SOLVE_TOL * rhs.norm().max(1.0)) {
        return Err(ControlError::IllConditioned { residual });
    }
    Ok(e)
}

/// Linear adaptive law: `θ̂_L(k)ᵀX(k) = R V_ref(k)`.
pub fn linear_control(
    theta: &DMatrix<f64>,
    regressor: &RegressorState,
    r_vref: &DVector<f64>,
) -> Result<DVector<f64>, ControlError> {
    solve_for_input(theta, regressor, r_vref)
}

/// Nonlinear adaptive law: `θ̂_N(k)ᵀX(k) + ĥ*(k) = R V_ref(k)`.
pub fn nonlinear_control(
    theta: &DMatrix<f64>,
    regressor: &RegressorState,
    r_vref: &DVector<f64>,
    h_hat: &DVector<f64>,
) -> Result<DVector<f64>, ControlError> {
    solve_for_input(theta, regressor, &(r_vref - h_hat))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_substitution() {
        // m = 1, n = 2, d = 1: θ rows [K₀, K₁, (LB)₀, (LB)₁].
        let theta = DMatrix::from_column_slice(4, 1, &[0.3, -0.06, 1.0, 0.0]);
        let mut reg = RegressorState::new(1, 2, 1, 2);
        reg.push_output(DVector::from_element(1, 300.0));
        reg.push_input(DVector::from_element(1, 0.0));
        reg.push_output(DVector::from_element(1, 300.0));
        let e = linear_control(&theta, &reg, &DVector::from_element(1, 240.0)).unwrap();
        assert!((e[0] - 168.0).abs() < 1e-12);
    }

    #[test]
    fn zero_reference_zero_history() {
        let theta = DMatrix::from_column_slice(3, 1, &[0.5, 0.9, 0.2]);
        let mut reg = RegressorState::new(1, 1, 2, 1);
        reg.push_input(DVector::zeros(1));
        reg.push_output(DVector::zeros(1));
        let e = linear_control(&theta, &reg, &DVector::zeros(1)).unwrap();
        assert_eq!(e[0], 0.0);
    }

    #[test]
    fn constant_h_hat_shifts_by_inverse_lead() {
        let theta = DMatrix::from_row_slice(4, 2, &[0.1, 0.0, 0.0, 0.2, 2.0, 0.5, 0.0, 1.0]);
        let mut reg = RegressorState::new(2, 1, 1, 1);
        reg.push_output(DVector::from_column_slice(&[1.0, 2.0]));
        let target = DVector::from_column_slice(&[0.8, 0.8]);
        let c = DVector::from_column_slice(&[0.3, -0.1]);
        let e0 = linear_control(&theta, &reg, &target).unwrap();
        let e1 = nonlinear_control(&theta, &reg, &target, &c).unwrap();
        let lead = leading_block(&theta, 2, 1);
        let shift = lead.try_inverse().unwrap() * &c;
        assert!((e0 - e1 - shift).norm() < 1e-14);
    }

    #[test]
    fn singular_lead_reported() {
        let theta = DMatrix::from_column_slice(2, 1, &[0.5, 0.0]);
        let mut reg = RegressorState::new(1, 1, 1, 1);
        reg.push_output(DVector::from_element(1, 1.0));
        assert!(matches!(
            linear_control(&theta, &reg, &DVector::from_element(1, 1.0)),
            Err(ControlError::IllConditioned { .. })
        ));
    }
}
