//! Plants driven by the secondary controller. Every plant exposes only the
//! setpoint input `E*` and the voltage-magnitude output `V_o` to the
//! controller; internal states are reachable through the concrete types for
//! diagnostics and tests.

pub mod linear;
pub mod microgrid;
pub mod ode;
pub mod params;
pub mod surrogate;

use nalgebra::DVector;
use thiserror::Error;

pub use linear::{Disturbance, DisturbanceSpec, LinearOraclePlant};
pub use microgrid::{idx, DerState, Microgrid, MicrogridState, PowerBalance, DER_STATES};
pub use ode::{OdeSystem, Rk4};
pub use params::{DerParams, Line, Load, MicrogridParams, NetworkParams};
pub use surrogate::{Surrogate, SurrogateLoad, SurrogateParams};

use crate::polyalg::PolyError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("plant diverged at primary step {step} (t = {time} s)")]
    Diverged { step: u64, time: f64 },
    #[error("invalid plant parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid load step factor {0}: must be positive and finite")]
    InvalidLoadFactor(f64),
    #[error("input has {got} channels, plant has {expected}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("oracle plant rejected: {0}")]
    OracleRejected(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Discrete-time view of a plant as seen by the secondary controller: one
/// call to [`advance`](Plant::advance) spans one secondary sample.
pub trait Plant: Send {
    fn channels(&self) -> usize;

    /// Voltage magnitudes at the current sample.
    fn output(&self) -> DVector<f64>;

    /// Filtered `(P, Q)` per DER, where the plant models them.
    fn powers(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        None
    }

    /// `φ(k)` at the current sample, for plants that model it explicitly.
    fn current_disturbance(&self) -> Option<DVector<f64>> {
        None
    }

    /// Holds `e_star` for one secondary period.
    fn advance(&mut self, e_star: &DVector<f64>) -> Result<(), PlantError>;

    /// Scales the event load's impedance by `factor`; states are untouched.
    fn apply_load_step(&mut self, factor: f64) -> Result<(), PlantError>;

    fn time(&self) -> f64;

    fn clone_box(&self) -> Box<dyn Plant>;
}

/// Continuous-time dynamics with a held setpoint input.
pub trait Dynamics: OdeSystem + Clone + Send + 'static {
    fn channels(&self) -> usize;
    fn set_input(&mut self, e_star: &[f64]);
    fn output(&self, x: &[f64]) -> DVector<f64>;
    fn powers(&self, x: &[f64]) -> (DVector<f64>, DVector<f64>);
    fn scale_event_load(&mut self, factor: f64) -> Result<(), PlantError>;
}

/// Integrates [`Dynamics`] with fixed-step RK4 at the primary step, holding
/// `E*` between secondary samples.
#[derive(Debug, Clone)]
pub struct SampledPlant<S: Dynamics> {
    sys: S,
    x: Vec<f64>,
    rk: Rk4,
    dt_primary: f64,
    substeps: usize,
    steps: u64,
}

impl<S: Dynamics> SampledPlant<S> {
    pub fn new(sys: S, x0: Vec<f64>, dt_primary: f64, substeps: usize) -> Result<Self, PlantError> {
        if x0.len() != sys.dim() {
            return Err(PlantError::InvalidParameter(format!(
                "initial state has {} entries, expected {}",
                x0.len(),
                sys.dim()
            )));
        }
        if !(dt_primary > 0.0) || substeps == 0 {
            return Err(PlantError::InvalidParameter(
                "primary step must be positive with at least one substep".into(),
            ));
        }
        Ok(Self {
            rk: Rk4::new(sys.dim()),
            sys,
            x: x0,
            dt_primary,
            substeps,
            steps: 0,
        })
    }

    pub fn dynamics(&self) -> &S {
        &self.sys
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn set_state(&mut self, x: Vec<f64>) {
        assert_eq!(x.len(), self.x.len());
        self.x = x;
    }

    pub fn primary_steps(&self) -> u64 {
        self.steps
    }

    /// One RK4 step of length `dt` under the held setpoint `e_star`.
    pub fn step_primary(&mut self, e_star: &[f64], dt: f64) -> Result<(), PlantError> {
        if e_star.len() != self.sys.channels() {
            return Err(PlantError::ChannelMismatch {
                expected: self.sys.channels(),
                got: e_star.len(),
            });
        }
        self.sys.set_input(e_star);
        self.rk.step(&self.sys, &mut self.x, dt);
        self.steps += 1;
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(PlantError::Diverged {
                step: self.steps,
                time: self.steps as f64 * self.dt_primary,
            });
        }
        Ok(())
    }
}

impl<S: Dynamics> Plant for SampledPlant<S> {
    fn channels(&self) -> usize {
        self.sys.channels()
    }

    fn output(&self) -> DVector<f64> {
        self.sys.output(&self.x)
    }

    fn powers(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        Some(self.sys.powers(&self.x))
    }

    fn advance(&mut self, e_star: &DVector<f64>) -> Result<(), PlantError> {
        if e_star.len() != self.sys.channels() {
            return Err(PlantError::ChannelMismatch {
                expected: self.sys.channels(),
                got: e_star.len(),
            });
        }
        self.sys.set_input(e_star.as_slice());
        for _ in 0..self.substeps {
            self.rk.step(&self.sys, &mut self.x, self.dt_primary);
            self.steps += 1;
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(PlantError::Diverged {
                step: self.steps,
                time: self.steps as f64 * self.dt_primary,
            });
        }
        Ok(())
    }

    fn apply_load_step(&mut self, factor: f64) -> Result<(), PlantError> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(PlantError::InvalidLoadFactor(factor));
        }
        self.sys.scale_event_load(factor)
    }

    fn time(&self) -> f64 {
        self.steps as f64 * self.dt_primary
    }

    fn clone_box(&self) -> Box<dyn Plant> {
        Box::new(self.clone())
    }
}

pub type FullPlant = SampledPlant<Microgrid>;
pub type SurrogatePlant = SampledPlant<Surrogate>;
