use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::regressor::{leading_block_offset, regressor_len};
use super::IdentifyError;

/// Dead-zone radius, projection floor and parameter box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorBounds {
    /// Bound `ρ` on the unmodeled dynamics; adaptation freezes while
    /// `‖e‖ ≤ 2ρ`.
    pub rho: f64,
    /// Floor on the singular values of the leading input block.
    pub h_min: f64,
    /// Every entry of `θ̂` is kept in `[−theta_max, theta_max]`.
    pub theta_max: f64,
}

impl EstimatorBounds {
    pub fn validate(&self) -> Result<(), IdentifyError> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(IdentifyError::InvalidBounds(format!("rho = {}", self.rho)));
        }
        if !(self.h_min > 0.0 && self.h_min.is_finite()) {
            return Err(IdentifyError::InvalidBounds(format!("h_min = {}", self.h_min)));
        }
        if !(self.theta_max >= self.h_min && self.theta_max.is_finite()) {
            return Err(IdentifyError::InvalidBounds(format!(
                "theta_max = {} must be finite and at least h_min",
                self.theta_max
            )));
        }
        Ok(())
    }
}

/// What one update did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateReport {
    /// Dead-zone gate: adaptation happened.
    pub eta: bool,
    pub error_norm: f64,
    /// `‖θ̂(k) − θ̂(k−d)‖_F`.
    pub step_norm: f64,
    /// The singular-value clamp changed the leading block.
    pub projected: bool,
    pub sigma_min: f64,
}

/// `θ̂` with a dead-zone normalized-gradient update and projection. The last
/// `d` estimates are kept because both the update and the identification
/// error start from `θ̂(k−d)`.
#[derive(Debug, Clone)]
pub struct LinearEstimator {
    m: usize,
    n: usize,
    d: usize,
    bounds: EstimatorBounds,
    /// The latest `d` estimates, newest first; entry 0 is the current one.
    lag: VecDeque<DMatrix<f64>>,
}

impl LinearEstimator {
    /// The initial estimate is projected first, so it already satisfies the
    /// box and the floor; it stands in for every `θ̂` before the first update.
    pub fn new(
        m: usize,
        n: usize,
        d: usize,
        bounds: EstimatorBounds,
        theta0: DMatrix<f64>,
    ) -> Result<Self, IdentifyError> {
        bounds.validate()?;
        let p = regressor_len(m, n, d);
        if theta0.shape() != (p, m) {
            return Err(IdentifyError::DimensionMismatch {
                expected: (p, m),
                got: theta0.shape(),
            });
        }
        let mut est = Self {
            m,
            n,
            d,
            bounds,
            lag: VecDeque::new(),
        };
        let theta = est.project(theta0).0;
        est.lag = std::iter::repeat_n(theta, d).collect();
        Ok(est)
    }

    /// Leading block set to `gain·I`, everything else zero.
    pub fn prior(m: usize, n: usize, d: usize, gain: f64) -> DMatrix<f64> {
        let mut theta = DMatrix::zeros(regressor_len(m, n, d), m);
        let off = leading_block_offset(m, n);
        for i in 0..m {
            theta[(off + i, i)] = gain;
        }
        theta
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.lag[0]
    }

    /// `θ̂(k−d)`.
    pub fn lagged(&self) -> &DMatrix<f64> {
        &self.lag[self.d - 1]
    }

    pub fn bounds(&self) -> &EstimatorBounds {
        &self.bounds
    }

    pub fn channels(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn delay(&self) -> usize {
        self.d
    }

    /// Leading input block `(L̂B̂)₀` of the current estimate.
    pub fn leading_block(&self) -> DMatrix<f64> {
        leading_block(self.theta(), self.m, self.n)
    }

    pub fn sigma_min(&self) -> f64 {
        sigma_min(&self.leading_block())
    }

    /// `Ŷ(k+d) = θ̂(k)ᵀX(k)`.
    pub fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>, IdentifyError> {
        self.check_regressor(x)?;
        Ok(self.theta().tr_mul(x))
    }

    /// `e(k) = Y(k) − θ̂(k−d)ᵀX(k−d)`.
    pub fn identification_error(
        &self,
        y: &DVector<f64>,
        x_lagged: &DVector<f64>,
    ) -> Result<DVector<f64>, IdentifyError> {
        self.check_regressor(x_lagged)?;
        if y.len() != self.m {
            return Err(IdentifyError::DimensionMismatch {
                expected: (self.m, 1),
                got: (y.len(), 1),
            });
        }
        Ok(y - self.lagged().tr_mul(x_lagged))
    }

    /// `θ̂(k) = proj{θ̂(k−d) + η X(k−d) e(k)ᵀ / (1 + ‖X(k−d)‖²)}` with
    /// `η = 1` iff `‖e(k)‖ > 2ρ`. Inside the dead zone `θ̂(k)` is an exact copy
    /// of `θ̂(k−d)`.
    pub fn update(
        &mut self,
        e: &DVector<f64>,
        x_lagged: &DVector<f64>,
    ) -> Result<UpdateReport, IdentifyError> {
        self.check_regressor(x_lagged)?;
        let base = self.lagged().clone();
        let error_norm = e.norm();
        let eta = error_norm > 2.0 * self.bounds.rho;
        let (next, projected) = if eta {
            let step = x_lagged * e.transpose() / (1.0 + x_lagged.norm_squared());
            self.project(&base + step)
        } else {
            (base.clone(), false)
        };
        let step_norm = (&next - &base).norm();
        self.lag.push_front(next);
        self.lag.truncate(self.d);
        Ok(UpdateReport {
            eta,
            error_norm,
            step_norm,
            projected,
            sigma_min: self.sigma_min(),
        })
    }

    /// Adaptation skipped for this step: `θ̂(k) = θ̂(k−d)`, as if frozen by
    /// the dead zone.
    pub fn hold(&mut self) -> UpdateReport {
        let base = self.lagged().clone();
        self.lag.push_front(base);
        self.lag.truncate(self.d);
        UpdateReport {
            eta: false,
            error_norm: f64::NAN,
            step_norm: 0.0,
            projected: false,
            sigma_min: self.sigma_min(),
        }
    }

    /// Box clip followed by the singular-value floor on the leading block.
    pub fn project(&self, mut theta: DMatrix<f64>) -> (DMatrix<f64>, bool) {
        let c = self.bounds.theta_max;
        theta.apply(|v| *v = v.clamp(-c, c));
        let off = leading_block_offset(self.m, self.n);
        let block = theta.view((off, 0), (self.m, self.m)).clone_owned();
        match clamp_singular_values(&block, self.bounds.h_min) {
            Some(fixed) => {
                theta.view_mut((off, 0), (self.m, self.m)).copy_from(&fixed);
                (theta, true)
            }
            None => (theta, false),
        }
    }

    fn check_regressor(&self, x: &DVector<f64>) -> Result<(), IdentifyError> {
        let p = regressor_len(self.m, self.n, self.d);
        if x.len() != p {
            return Err(IdentifyError::DimensionMismatch {
                expected: (p, 1),
                got: (x.len(), 1),
            });
        }
        Ok(())
    }
}

pub fn leading_block(theta: &DMatrix<f64>, m: usize, n: usize) -> DMatrix<f64> {
    theta.view((leading_block_offset(m, n), 0), (m, m)).transpose()
}

pub fn sigma_min(a: &DMatrix<f64>) -> f64 {
    a.singular_values().min()
}

/// Raises every singular value below `floor` to `floor` plus a rounding
/// margin; `None` when none is below.
pub fn clamp_singular_values(a: &DMatrix<f64>, floor: f64) -> Option<DMatrix<f64>> {
    let svd = a.clone().svd(true, true);
    if svd.singular_values.min() >= floor {
        return None;
    }
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    // Reconstruction and re-decomposition errors scale with the largest
    // singular value; keep a margin of that size so the result clears the
    // floor in either orientation.
    let margin = 8.0 * f64::EPSILON * a.nrows() as f64 * svd.singular_values.max().max(floor);
    let mut target = floor + margin;
    let mut out = a.clone();
    for _ in 0..16 {
        let s = svd.singular_values.map(|s| s.max(target));
        out = u * DMatrix::from_diagonal(&s) * v_t;
        if sigma_min(&out) >= floor + 0.5 * margin {
            break;
        }
        target += target - floor;
    }
    Some(out)
}
