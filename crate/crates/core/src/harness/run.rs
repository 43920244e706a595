//! The two-rate simulation loop.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ControllerKind, OracleConfig, PlantKind, RhoSpec, ScenarioConfig};
use super::record::{Diagnostics, Row, Summary, SummaryContext};
use super::HarnessError;
use crate::control::{
    ControlStep, ControllerDesign, FeedbackLinearization, MmacController, NoSecondary, OracleController,
    SecondaryController, StepInput,
};
use crate::identify::regressor::regressor_len;
use crate::plant::{
    LinearOraclePlant, Microgrid, Plant, PlantError, SampledPlant, Surrogate, SurrogateParams,
};

/// Why a run stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RunFailure {
    Diverged {
        k: usize,
        t: f64,
        detail: String,
    },
    MonitorViolation {
        k: usize,
        t: f64,
        norm: f64,
        delta_v: f64,
    },
    Controller {
        k: usize,
        t: f64,
        detail: String,
    },
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunFailure::Diverged { k, t, detail } => {
                write!(f, "plant diverged at sample {k} (t = {t} s): {detail}")
            }
            RunFailure::MonitorViolation { k, t, norm, delta_v } => write!(
                f,
                "boundedness monitor tripped at sample {k} (t = {t} s): norm {norm} > {delta_v}"
            ),
            RunFailure::Controller { k, t, detail } => {
                write!(f, "controller failed at sample {k} (t = {t} s): {detail}")
            }
        }
    }
}

/// Outcome of the probing experiment behind `rho_v = "auto"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub rho_v: f64,
    pub samples: usize,
    /// Root-mean-square residual of the batch fit, volts.
    pub rms_residual_v: f64,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: ScenarioConfig,
    pub rows: Vec<Row>,
    pub summary: Summary,
    pub calibration: Option<Calibration>,
    pub failure: Option<RunFailure>,
}

fn plant_label(kind: PlantKind) -> &'static str {
    match kind {
        PlantKind::Full => "full",
        PlantKind::Surrogate => "surrogate",
        PlantKind::LinearOracle => "linear-oracle",
    }
}

fn controller_label(kind: ControllerKind) -> &'static str {
    match kind {
        ControllerKind::Mmac => "mmac",
        ControllerKind::LinearOnly => "linear-only",
        ControllerKind::NonlinearOnly => "nonlinear-only",
        ControllerKind::Oracle => "oracle",
        ControllerKind::FeedbackLinearization => "feedback-linearization",
        ControllerKind::None => "none",
    }
}

fn oracle_plant(cfg: &ScenarioConfig) -> Result<LinearOraclePlant, HarnessError> {
    let o = cfg
        .plant
        .oracle
        .as_ref()
        .ok_or_else(|| HarnessError::Config("linear-oracle plant needs [plant.oracle]".into()))?;
    LinearOraclePlant::new(
        OracleConfig::poly(&o.a)?,
        OracleConfig::poly(&o.b)?,
        o.delay_d,
        o.disturbance.clone(),
    )
    .map_err(|e| HarnessError::Config(e.to_string()))
}

fn surrogate_params(cfg: &ScenarioConfig, tau: f64) -> SurrogateParams {
    SurrogateParams::from_microgrid(&cfg.plant.microgrid, tau)
}

/// A fresh plant at rest, as the configuration describes it.
pub fn build_plant(cfg: &ScenarioConfig) -> Result<Box<dyn Plant>, HarnessError> {
    let t = &cfg.timing;
    let cfg_err = |e: PlantError| HarnessError::Config(e.to_string());
    Ok(match cfg.plant.kind {
        PlantKind::Full => {
            let mg = Microgrid::new(cfg.plant.microgrid.clone()).map_err(cfg_err)?;
            let n = mg.state_len();
            Box::new(SampledPlant::new(mg, vec![0.0; n], t.dt_primary_s, t.substeps()).map_err(cfg_err)?)
        }
        PlantKind::Surrogate => {
            let s = Surrogate::new(surrogate_params(cfg, cfg.plant.surrogate_tau_v_s)).map_err(cfg_err)?;
            let n = crate::plant::OdeSystem::dim(&s);
            Box::new(SampledPlant::new(s, vec![0.0; n], t.dt_primary_s, t.substeps()).map_err(cfg_err)?)
        }
        PlantKind::LinearOracle => Box::new(oracle_plant(cfg)?),
    })
}

fn build_controller(cfg: &ScenarioConfig, rho_v: f64) -> Result<Box<dyn SecondaryController>, HarnessError> {
    let m = cfg.channels()?;
    let v_ref = cfg.v_ref()?;
    let nominal = DVector::from_element(m, cfg.reference.v_nominal_v);
    let limits = cfg.reference.limits();
    let c = &cfg.controller;
    let ctl_err = |e: crate::control::ControlError| HarnessError::Config(e.to_string());
    let design = ControllerDesign::first_order(c.f_pole, v_ref.clone()).map_err(ctl_err)?;
    Ok(match c.kind {
        ControllerKind::Mmac | ControllerKind::LinearOnly | ControllerKind::NonlinearOnly => {
            let mode = c.kind.adaptive_mode().expect("adaptive kind");
            let settings = c.adaptive.settings(rho_v, cfg.seed);
            Box::new(MmacController::new(mode, settings, design, nominal, limits).map_err(ctl_err)?)
        }
        ControllerKind::Oracle => {
            Box::new(OracleController::new(&oracle_plant(cfg)?, design, nominal).map_err(ctl_err)?)
        }
        ControllerKind::FeedbackLinearization => {
            let fl = &c.feedback_linearization;
            Box::new(
                FeedbackLinearization::new(
                    surrogate_params(cfg, fl.model_tau_v_s),
                    fl.lambda_per_s,
                    cfg.timing.dt_secondary_s,
                    v_ref,
                    nominal,
                    limits,
                )
                .map_err(ctl_err)?,
            )
        }
        ControllerKind::None => Box::new(NoSecondary::new(nominal)),
    })
}

/// Estimates `ρ` from a probing run: settle at the nominal setpoint, drive a
/// seeded binary sequence around it, fit the regression model by batch least
/// squares and take the largest residual norm.
pub fn calibrate_rho(cfg: &ScenarioConfig) -> Result<Calibration, HarnessError> {
    let m = cfg.channels()?;
    let a = &cfg.controller.adaptive;
    let (n, d) = (a.order_n, a.delay_d);
    let base = a.signal_base_v;
    let cal = &cfg.calibration;
    let mut plant = build_plant(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ca1b);
    let nominal = DVector::from_element(m, cfg.reference.v_nominal_v);
    let (lo, hi) = cfg.reference.limits();
    let settle = (cal.settle_s / cfg.timing.dt_secondary_s).round() as usize;

    let diverged = |e: PlantError| HarnessError::Calibration(e.to_string());
    for _ in 0..settle {
        plant.advance(&nominal).map_err(diverged)?;
    }
    let mut vs: Vec<DVector<f64>> = Vec::with_capacity(cal.probe_samples);
    let mut es: Vec<DVector<f64>> = Vec::with_capacity(cal.probe_samples);
    let mut level = DVector::zeros(m);
    let mut hold = vec![0usize; m];
    for _ in 0..cal.probe_samples {
        for i in 0..m {
            if hold[i] == 0 {
                level[i] = if rng.random::<bool>() { 1.0 } else { -1.0 };
                hold[i] = rng.random_range(1..=cal.hold_max_samples);
            }
            hold[i] -= 1;
        }
        let e = (&nominal + &level * cal.probe_amplitude_v).map(|x| x.clamp(lo, hi));
        vs.push(plant.output() / base);
        es.push(&e / base);
        plant.advance(&e).map_err(diverged)?;
    }

    let f = ControllerDesign::first_order(cfg.controller.f_pole, cfg.v_ref()?)
        .map_err(|e| HarnessError::Config(e.to_string()))?
        .f()
        .clone();
    let p = regressor_len(m, n, d);
    let first = (n - 1 + d).max(n + d - 2 + d).max(f.degree());
    let rows: Vec<usize> = (first..vs.len()).collect();
    if rows.len() < p {
        return Err(HarnessError::Calibration(format!(
            "{} usable probe samples for {p} regression parameters",
            rows.len()
        )));
    }
    let mut x = DMatrix::zeros(rows.len(), p);
    let mut y = DMatrix::zeros(rows.len(), m);
    for (r, &k) in rows.iter().enumerate() {
        let j = k - d;
        let mut col = 0;
        for i in 0..n {
            x.view_mut((r, col), (1, m)).copy_from(&vs[j - i].transpose());
            col += m;
        }
        for i in 0..(n + d - 1) {
            x.view_mut((r, col), (1, m)).copy_from(&es[j - i].transpose());
            col += m;
        }
        let mut yk = DVector::zeros(m);
        for (i, c) in f.coeffs().iter().enumerate() {
            yk += c * &vs[k - i];
        }
        y.row_mut(r).copy_from(&yk.transpose());
    }
    let theta = x
        .clone()
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| HarnessError::Calibration(e.to_string()))?;
    let resid = y - x * theta;
    let norms: Vec<f64> = resid.row_iter().map(|r| r.norm()).collect();
    let max = norms.iter().copied().fold(0.0, f64::max);
    let rms = (norms.iter().map(|v| v * v).sum::<f64>() / norms.len() as f64).sqrt();
    Ok(Calibration {
        rho_v: max * base,
        samples: rows.len(),
        rms_residual_v: rms * base,
    })
}

fn row_from_step(k: usize, t: f64, v: &DVector<f64>, out: &ControlStep, plant: &dyn Plant) -> Row {
    let (p, q) = match plant.powers() {
        Some((p, q)) => (Some(p.as_slice().to_vec()), Some(q.as_slice().to_vec())),
        None => (None, None),
    };
    let inv = &out.invariants;
    Row {
        k,
        t,
        v: v.as_slice().to_vec(),
        e: out.e_star.as_slice().to_vec(),
        el_norm: out.e_l.as_ref().map(|e| e.norm()),
        en_norm: out.e_n.as_ref().map(|e| e.norm()),
        xi_l: out.xi.map(|x| x[0]),
        xi_n: out.xi.map(|x| x[1]),
        active: out.active,
        p,
        q,
        diag: Diagnostics {
            source: Some(out.source),
            identity: out.identity,
            eta_l: out.eta.map(|e| e[0]),
            eta_n: out.eta.map(|e| e[1]),
            invariants_checked: inv.checked,
            dead_zone_violations: inv.dead_zone_violations,
            floor_violations: inv.floor_violations,
            sigma_min: inv.checked.then_some(inv.sigma_min),
            theta_l_norm: out.theta_norms.map(|n| n[0]),
            theta_n_norm: out.theta_norms.map(|n| n[1]),
            w_norm: out.w_norm,
            h_hat_norm: out.h_hat.as_ref().map(|h| h.norm()),
        },
    }
}

/// Metric context for a configuration and an effective `ρ`.
pub fn summary_context(cfg: &ScenarioConfig, rho_v: f64) -> Result<SummaryContext, HarnessError> {
    let t = &cfg.timing;
    Ok(SummaryContext {
        plant: plant_label(cfg.plant.kind).into(),
        controller: controller_label(cfg.controller.kind).into(),
        channels: cfg.channels()?,
        dt_secondary_s: t.dt_secondary_s,
        t_end_s: t.t_end_s,
        t_svc_on_s: t.t_svc_on_s,
        t_event_s: cfg.event.enabled.then_some(t.t_event_s),
        v_ref_v: cfg.v_ref()?.as_slice().to_vec(),
        rho_v,
        delta_v: cfg.delta()?,
    })
}

/// Runs a scenario. Configuration problems are errors; a plant that
/// diverges, a tripped monitor or a failing controller end the run early and
/// are reported in [`RunRecord::failure`] alongside the rows logged so far.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunRecord, HarnessError> {
    cfg.validate()?;
    let started = Instant::now();
    let calibration =
        if cfg.controller.adaptive.rho_v.is_auto()? && cfg.controller.kind.adaptive_mode().is_some() {
            let c = calibrate_rho(cfg)?;
            log::info!("calibrated rho = {:.4e} V over {} samples", c.rho_v, c.samples);
            Some(c)
        } else {
            None
        };
    let rho_v = match (&calibration, &cfg.controller.adaptive.rho_v) {
        (Some(c), _) => c.rho_v,
        (None, RhoSpec::Volts(v)) => *v,
        (None, RhoSpec::Keyword(_)) => 0.0,
    };

    let mut plant = build_plant(cfg)?;
    let mut ctl = build_controller(cfg, rho_v)?;
    let ctx = summary_context(cfg, rho_v)?;
    let t = &cfg.timing;
    let n_rows = t.rows();
    let k_on = t.sample_of(t.t_svc_on_s);
    let k_event = cfg.event.enabled.then(|| t.sample_of(t.t_event_s));
    let delta = ctx.delta_v;

    let mut rows = Vec::with_capacity(n_rows);
    let mut failure = None;
    for k in 0..n_rows {
        let time = k as f64 * t.dt_secondary_s;
        if Some(k) == k_event {
            plant
                .apply_load_step(cfg.event.load_factor)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        let v = plant.output();
        let phi = plant.current_disturbance();
        let input = StepInput {
            k,
            v: &v,
            engaged: k >= k_on,
            phi: phi.as_ref(),
        };
        let out = match ctl.step(&input) {
            Ok(out) => out,
            Err(e) => {
                failure = Some(RunFailure::Controller {
                    k,
                    t: time,
                    detail: e.to_string(),
                });
                break;
            }
        };
        let row = row_from_step(k, time, &v, &out, plant.as_ref());
        let norm = v.norm().max(out.e_star.norm());
        rows.push(row);
        if !(norm <= delta) {
            failure = Some(RunFailure::MonitorViolation {
                k,
                t: time,
                norm,
                delta_v: delta,
            });
            break;
        }
        if k + 1 < n_rows {
            if let Err(e) = plant.advance(&out.e_star) {
                failure = Some(RunFailure::Diverged {
                    k,
                    t: time,
                    detail: e.to_string(),
                });
                break;
            }
        }
    }
    if let Some(f) = &failure {
        log::warn!("{f}");
    }
    log::info!(
        "{} on {} plant: {} rows in {:.2?}",
        ctx.controller,
        ctx.plant,
        rows.len(),
        started.elapsed()
    );
    let summary = Summary::compute(&ctx, &rows, failure.is_some());
    Ok(RunRecord {
        config: cfg.clone(),
        rows,
        summary,
        calibration,
        failure,
    })
}
