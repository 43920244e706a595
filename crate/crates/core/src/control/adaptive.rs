//! The multiple-model adaptive pipeline run once per secondary sample:
//! measure, identify with both estimators, update the switch, then compute
//! `E*(k)` with the selected law.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::ControllerDesign;
use super::laws::{linear_control, nonlinear_control};
use super::switch::{Active, SwitchState};
use super::{
    ControlError, ControlStep, IdentityCheck, InvariantCheck, SecondaryController, Source, StepInput,
};
use crate::identify::{
    form_transformed_output, CachedEstimate, EstimatorBounds, LinearEstimator, NeuralConfig,
    NonlinearEstimator, RegressorState, UpdateReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptiveMode {
    Mmac,
    LinearOnly,
    NonlinearOnly,
}

/// Which estimators adapt at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UpdatePolicy {
    /// Both estimators adapt every step, so the idle model stays current.
    #[default]
    Both,
    /// Only the selected estimator adapts; the other holds its parameters.
    Selected,
}

/// Estimator and switch settings. Signals are divided by `signal_base_v`
/// before they reach the estimators, so `rho_v` is converted the same way
/// while `h_min` and `theta_max` already refer to the scaled model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveSettings {
    pub order_n: usize,
    pub delay_d: usize,
    pub rho_v: f64,
    pub h_min: f64,
    pub theta_max: f64,
    pub mu: f64,
    pub window_samples: usize,
    pub signal_base_v: f64,
    /// Leading-block value of the initial estimate; other blocks start at 0.
    pub prior_gain: f64,
    pub update_policy: UpdatePolicy,
    pub neural: NeuralConfig,
}

impl Default for AdaptiveSettings {
    fn default() -> Self {
        Self {
            order_n: 2,
            delay_d: 1,
            rho_v: 0.05,
            h_min: 0.05,
            theta_max: 10.0,
            mu: 1.0,
            window_samples: 10,
            signal_base_v: 300.0,
            prior_gain: 0.8,
            update_policy: UpdatePolicy::Both,
            neural: NeuralConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct PastStep {
    x: DVector<f64>,
    source: Source,
    /// `R V_ref` at that step, scaled.
    r_vref: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct MmacController {
    mode: AdaptiveMode,
    settings: AdaptiveSettings,
    design: ControllerDesign,
    base: f64,
    nominal: DVector<f64>,
    limits: (f64, f64),
    reg: RegressorState,
    linear: LinearEstimator,
    nonlinear: NonlinearEstimator,
    switch: SwitchState,
    /// `X(k−1) … X(k−d)` with their provenance, newest first.
    past: VecDeque<Option<PastStep>>,
    active: Active,
}

impl MmacController {
    /// `design`, `nominal` and `limits` are in volts.
    pub fn new(
        mode: AdaptiveMode,
        settings: AdaptiveSettings,
        design: ControllerDesign,
        nominal: DVector<f64>,
        limits: (f64, f64),
    ) -> Result<Self, ControlError> {
        let m = design.channels();
        let (n, d) = (settings.order_n, settings.delay_d);
        if n == 0 || d == 0 {
            return Err(ControlError::Design(
                "order n and delay d must be positive".into(),
            ));
        }
        if !(settings.signal_base_v > 0.0) {
            return Err(ControlError::Design("signal_base_v must be positive".into()));
        }
        if nominal.len() != m {
            return Err(ControlError::Design("nominal setpoint has wrong length".into()));
        }
        if !(limits.0 < limits.1) {
            return Err(ControlError::Design("actuator limits are empty".into()));
        }
        let base = settings.signal_base_v;
        let bounds = EstimatorBounds {
            rho: settings.rho_v / base,
            h_min: settings.h_min,
            theta_max: settings.theta_max,
        };
        let prior = LinearEstimator::prior(m, n, d, settings.prior_gain);
        let linear = LinearEstimator::new(m, n, d, bounds, prior.clone())?;
        let nonlinear = NonlinearEstimator::new(m, n, d, bounds, prior, settings.neural)?;
        let depth = design.f().degree() + 1;
        Ok(Self {
            mode,
            design: design.scaled(base),
            base,
            nominal,
            limits,
            reg: RegressorState::new(m, n, d, depth),
            linear,
            nonlinear,
            switch: SwitchState::new(bounds.rho, settings.mu, settings.window_samples),
            past: VecDeque::new(),
            active: match mode {
                AdaptiveMode::NonlinearOnly => Active::Nonlinear,
                _ => Active::Linear,
            },
            settings,
        })
    }

    pub fn mode(&self) -> AdaptiveMode {
        self.mode
    }

    pub fn settings(&self) -> &AdaptiveSettings {
        &self.settings
    }

    pub fn linear(&self) -> &LinearEstimator {
        &self.linear
    }

    pub fn nonlinear(&self) -> &NonlinearEstimator {
        &self.nonlinear
    }

    pub fn switch(&self) -> &SwitchState {
        &self.switch
    }

    pub fn active(&self) -> Active {
        self.active
    }

    fn transformed_output(&self) -> Result<Option<DVector<f64>>, ControlError> {
        let depth = self.design.f().degree() + 1;
        if self.reg.outputs().len() < depth {
            return Ok(None);
        }
        let outs: Vec<&DVector<f64>> = self.reg.outputs().iter().take(depth).collect();
        Ok(Some(form_transformed_output(&outs, self.design.f())?))
    }

    fn identify(
        &mut self,
        y: &DVector<f64>,
        past: &PastStep,
        out: &mut ControlStep,
    ) -> Result<(), ControlError> {
        let e_l = self.linear.identification_error(y, &past.x)?;
        let e_n = self.nonlinear.identification_error(y, &past.x)?;
        let x_sq = past.x.norm_squared();
        let chosen = self.switch.update(e_l.norm(), e_n.norm(), x_sq);
        self.active = match self.mode {
            AdaptiveMode::Mmac => chosen,
            AdaptiveMode::LinearOnly => Active::Linear,
            AdaptiveMode::NonlinearOnly => Active::Nonlinear,
        };

        out.identity = match past.source {
            Source::Law(j) | Source::Clamped(j) => {
                let e_j = match j {
                    Active::Linear => &e_l,
                    Active::Nonlinear => &e_n,
                };
                let tracking = y - &past.r_vref;
                let residual = (tracking - e_j).norm() * self.base;
                if j == self.active {
                    IdentityCheck::Checked { residual_v: residual }
                } else {
                    IdentityCheck::Exempt { residual_v: residual }
                }
            }
            _ => IdentityCheck::NotApplicable,
        };

        let update_l = self.settings.update_policy == UpdatePolicy::Both || self.active == Active::Linear;
        let update_n = self.settings.update_policy == UpdatePolicy::Both || self.active == Active::Nonlinear;
        let mut inv = InvariantCheck::default();
        let base_l = self.linear.lagged().clone();
        let rep_l = if update_l {
            self.linear.update(&e_l, &past.x)?
        } else {
            self.linear.hold()
        };
        inv.record(&rep_l, &base_l, self.linear.theta(), self.settings.h_min);
        let base_n = self.nonlinear.params().lagged().clone();
        let rep_n = if update_n {
            self.nonlinear.update(y, &e_n, &past.x)?.params
        } else {
            self.nonlinear.hold()
        };
        inv.record(
            &rep_n,
            &base_n,
            self.nonlinear.params().theta(),
            self.settings.h_min,
        );

        out.e_l = Some(e_l * self.base);
        out.e_n = Some(e_n * self.base);
        out.xi = Some([self.switch.xi(Active::Linear), self.switch.xi(Active::Nonlinear)]);
        out.eta = Some([rep_l.eta, rep_n.eta]);
        out.x_norm_sq = Some(x_sq);
        out.invariants = inv;
        Ok(())
    }
}

impl InvariantCheck {
    /// Dead zone: a frozen update leaves `θ̂(k)` bit-identical to `θ̂(k−d)`.
    /// Floor: the leading block keeps its singular values at or above `h_min`.
    fn record(&mut self, rep: &UpdateReport, base: &DMatrix<f64>, now: &DMatrix<f64>, h_min: f64) {
        self.checked = true;
        if !rep.eta && now != base {
            self.dead_zone_violations += 1;
        }
        self.sigma_min = self.sigma_min.min(rep.sigma_min);
        if rep.sigma_min < h_min {
            self.floor_violations += 1;
        }
    }
}

impl SecondaryController for MmacController {
    fn name(&self) -> &'static str {
        match self.mode {
            AdaptiveMode::Mmac => "mmac",
            AdaptiveMode::LinearOnly => "linear-only",
            AdaptiveMode::NonlinearOnly => "nonlinear-only",
        }
    }

    fn step(&mut self, input: &StepInput<'_>) -> Result<ControlStep, ControlError> {
        let m = self.design.channels();
        if input.v.len() != m {
            return Err(ControlError::Design(format!(
                "measurement has {} channels, controller has {m}",
                input.v.len()
            )));
        }
        let d = self.settings.delay_d;
        self.reg.push_output(input.v / self.base);
        let mut out = ControlStep::nominal(self.nominal.clone());

        let lagged = if self.past.len() == d {
            self.past[d - 1].clone()
        } else {
            None
        };
        if let (Some(past), Some(y)) = (lagged, self.transformed_output()?) {
            self.identify(&y, &past, &mut out)?;
        }

        let r_vref = self.design.target();
        let h_hat = if self.reg.is_full() {
            let xn = self.reg.network_input()?;
            let h = self.nonlinear.h_hat(&xn);
            Some((xn, h))
        } else {
            None
        };

        let (mut e, mut source) = (&self.nominal / self.base, Source::Nominal);
        if input.engaged && self.reg.is_full() {
            let law = match self.active {
                Active::Linear => linear_control(self.linear.theta(), &self.reg, &r_vref)?,
                Active::Nonlinear => {
                    let h = &h_hat.as_ref().expect("regressor is full").1;
                    nonlinear_control(self.nonlinear.params().theta(), &self.reg, &r_vref, h)?
                }
            };
            let (lo, hi) = (self.limits.0 / self.base, self.limits.1 / self.base);
            let clamped = law.map(|v| v.clamp(lo, hi));
            source = if clamped == law {
                Source::Law(self.active)
            } else {
                Source::Clamped(self.active)
            };
            e = clamped;
        }
        if let Some((xn, h)) = h_hat {
            out.h_hat = Some(&h * self.base);
            self.nonlinear.push_cache(CachedEstimate { input: xn, h_hat: h });
        }

        let x_now = if self.reg.is_full() {
            Some(self.reg.regressor(&e)?)
        } else {
            None
        };
        self.reg.push_input(e.clone());
        self.past
            .push_front(x_now.map(|x| PastStep { x, source, r_vref }));
        self.past.truncate(d);

        out.e_star = e * self.base;
        out.source = source;
        out.active = Some(self.active);
        out.theta_norms = Some([self.linear.theta().norm(), self.nonlinear.params().theta().norm()]);
        out.w_norm = Some(self.nonlinear.net().weight_norm());
        Ok(out)
    }
}
