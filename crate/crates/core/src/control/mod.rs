//! Secondary controllers: the adaptive multiple-model pipeline, the
//! known-model oracle and the feedback-linearization baseline.

pub mod adaptive;
pub mod design;
pub mod feedback_lin;
pub mod laws;
pub mod oracle;
pub mod switch;

use nalgebra::DVector;
use thiserror::Error;

pub use adaptive::{AdaptiveMode, AdaptiveSettings, MmacController, UpdatePolicy};
pub use design::ControllerDesign;
pub use feedback_lin::FeedbackLinearization;
pub use laws::{linear_control, nonlinear_control};
pub use oracle::OracleController;
pub use switch::{Active, SwitchState};

use crate::identify::IdentifyError;
use crate::polyalg::PolyError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("invalid controller design: {0}")]
    Design(String),
    #[error("ill-conditioned controller solve (residual {residual:e})")]
    IllConditioned { residual: f64 },
    #[error(transparent)]
    Identify(#[from] IdentifyError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Where an applied `E*(k)` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// Held at the droop nominal setpoint.
    Nominal,
    /// Output of the given adaptive law.
    Law(Active),
    /// Adaptive law output cut by the actuator limits.
    Clamped(Active),
    Oracle,
    Baseline,
}

/// Tracking/identification identity at a step: the realized tracking error
/// `F V(k) − R V_ref(k−d)` against the error of the estimator whose law
/// produced `E*(k−d)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum IdentityCheck {
    /// `E*(k−d)` did not come from an adaptive law.
    #[default]
    NotApplicable,
    /// The switch moved away from the law that produced `E*(k−d)`.
    Exempt {
        residual_v: f64,
    },
    Checked {
        residual_v: f64,
    },
}

/// Per-step results of the estimator invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantCheck {
    pub checked: bool,
    pub dead_zone_violations: u32,
    pub floor_violations: u32,
    /// Smallest leading-block singular value over the estimators.
    pub sigma_min: f64,
}

impl Default for InvariantCheck {
    fn default() -> Self {
        Self {
            checked: false,
            dead_zone_violations: 0,
            floor_violations: 0,
            sigma_min: f64::INFINITY,
        }
    }
}

/// What the controller sees each secondary sample.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub k: usize,
    /// Measured voltage magnitudes `V_o(k)`.
    pub v: &'a DVector<f64>,
    /// False before the secondary control is switched on.
    pub engaged: bool,
    /// `φ(k)` where the plant can reveal it (oracle plants only).
    pub phi: Option<&'a DVector<f64>>,
}

/// Everything a controller reports about one step. Voltages in volts.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlStep {
    pub e_star: DVector<f64>,
    pub source: Source,
    pub active: Option<Active>,
    pub e_l: Option<DVector<f64>>,
    pub e_n: Option<DVector<f64>>,
    pub xi: Option<[f64; 2]>,
    pub eta: Option<[bool; 2]>,
    pub x_norm_sq: Option<f64>,
    pub h_hat: Option<DVector<f64>>,
    pub identity: IdentityCheck,
    pub invariants: InvariantCheck,
    pub theta_norms: Option<[f64; 2]>,
    pub w_norm: Option<f64>,
}

impl ControlStep {
    pub fn nominal(e_star: DVector<f64>) -> Self {
        Self {
            e_star,
            source: Source::Nominal,
            active: None,
            e_l: None,
            e_n: None,
            xi: None,
            eta: None,
            x_norm_sq: None,
            h_hat: None,
            identity: IdentityCheck::NotApplicable,
            invariants: InvariantCheck::default(),
            theta_norms: None,
            w_norm: None,
        }
    }
}

pub trait SecondaryController: Send {
    fn name(&self) -> &'static str;
    fn step(&mut self, input: &StepInput<'_>) -> Result<ControlStep, ControlError>;
}

/// Droop-only operation: the setpoint never moves.
#[derive(Debug, Clone)]
pub struct NoSecondary {
    nominal: DVector<f64>,
}

impl NoSecondary {
    pub fn new(nominal: DVector<f64>) -> Self {
        Self { nominal }
    }
}

impl SecondaryController for NoSecondary {
    fn name(&self) -> &'static str {
        "none"
    }

    fn step(&mut self, _input: &StepInput<'_>) -> Result<ControlStep, ControlError> {
        Ok(ControlStep::nominal(self.nominal.clone()))
    }
}
