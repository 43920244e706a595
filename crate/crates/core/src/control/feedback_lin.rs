//! Input–output linearizing controller built on the nominal surrogate model.
//!
//! The model says `τ v̇ = −v + E* − D_Q Q`. Choosing
//! `E* = v + D_Q Q̂ − τλ(v − v_ref)` cancels the voltage restoring term and
//! imposes `v̇ = −λ(v − v_ref)`, with `Q̂` from an internal copy of the power
//! filter driven by the nominal load model. Any error in `Q̂` appears in the
//! steady state amplified by `1/(τλ)`, which is what makes the controller
//! fragile once the real load departs from the model.

use nalgebra::DVector;

use super::{ControlError, ControlStep, SecondaryController, Source, StepInput};
use crate::plant::SurrogateParams;

#[derive(Debug, Clone)]
pub struct FeedbackLinearization {
    model: SurrogateParams,
    lambda: f64,
    dt: f64,
    v_ref: DVector<f64>,
    nominal: DVector<f64>,
    limits: (f64, f64),
    q_hat: Vec<f64>,
}

impl FeedbackLinearization {
    /// `lambda` is the imposed closed-loop rate (1/s); `dt` the sample time.
    pub fn new(
        model: SurrogateParams,
        lambda: f64,
        dt: f64,
        v_ref: DVector<f64>,
        nominal: DVector<f64>,
        limits: (f64, f64),
    ) -> Result<Self, ControlError> {
        model
            .validate()
            .map_err(|e| ControlError::Design(e.to_string()))?;
        if !(lambda > 0.0 && dt > 0.0) {
            return Err(ControlError::Design("lambda and dt must be positive".into()));
        }
        let m = model.channels();
        if v_ref.len() != m || nominal.len() != m {
            return Err(ControlError::Design("reference length differs from model".into()));
        }
        Ok(Self {
            model,
            lambda,
            dt,
            v_ref,
            nominal,
            limits,
            q_hat: vec![0.0; m],
        })
    }

    pub fn q_hat(&self) -> &[f64] {
        &self.q_hat
    }
}

impl SecondaryController for FeedbackLinearization {
    fn name(&self) -> &'static str {
        "feedback-linearization"
    }

    fn step(&mut self, input: &StepInput<'_>) -> Result<ControlStep, ControlError> {
        let m = self.model.channels();
        let v = input.v.as_slice();
        // Exact discretization of the first-order filter with the model's
        // demand held over the sample.
        let a = 1.0 - (-self.model.omega_c_rad_s * self.dt).exp();
        for i in 0..m {
            let q = self.model.demand(i, v).1;
            self.q_hat[i] += a * (q - self.q_hat[i]);
        }
        let mut out = ControlStep::nominal(self.nominal.clone());
        if input.engaged {
            out.e_star = DVector::from_fn(m, |i, _| {
                let tau = self.model.tau_v_s[i];
                let e = v[i] + self.model.d_q_v_per_var[i] * self.q_hat[i]
                    - tau * self.lambda * (v[i] - self.v_ref[i]);
                e.clamp(self.limits.0, self.limits.1)
            });
            out.source = Source::Baseline;
        }
        Ok(out)
    }
}
