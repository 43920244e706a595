//! Logged rows and the summary metrics derived from them. Every metric is a
//! pure function of the rows and a [`SummaryContext`], so a summary can be
//! recomputed from the written tables.

use serde::{Deserialize, Serialize};

use crate::control::{Active, IdentityCheck, Source};

/// Identity residuals at or below this count as passing.
pub const IDENTITY_TOL_V: f64 = 1e-9;
/// Band for the post-engagement settle time.
pub const SETTLE_BAND_V: f64 = 1.0;
/// Band for recovery after the event, as a fraction of the reference.
pub const RECOVERY_BAND: f64 = 0.01;
/// Window before `t_svc_on` and `t_event` used for steady-state errors.
pub const STEADY_WINDOW_S: f64 = 0.1;
/// Terminal errors above this fraction of the reference count as divergence.
pub const DIVERGED_BAND: f64 = 0.05;

/// One secondary sample: the measured `V_o(k)` and the applied `E*(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub k: usize,
    pub t: f64,
    pub v: Vec<f64>,
    pub e: Vec<f64>,
    pub el_norm: Option<f64>,
    pub en_norm: Option<f64>,
    pub xi_l: Option<f64>,
    pub xi_n: Option<f64>,
    pub active: Option<Active>,
    /// Filtered powers, where the plant models them.
    pub p: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    pub diag: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub source: Option<Source>,
    pub identity: IdentityCheck,
    pub eta_l: Option<bool>,
    pub eta_n: Option<bool>,
    pub invariants_checked: bool,
    pub dead_zone_violations: u32,
    pub floor_violations: u32,
    pub sigma_min: Option<f64>,
    pub theta_l_norm: Option<f64>,
    pub theta_n_norm: Option<f64>,
    pub w_norm: Option<f64>,
    pub h_hat_norm: Option<f64>,
}

pub fn source_label(s: Source) -> &'static str {
    match s {
        Source::Nominal => "nominal",
        Source::Law(Active::Linear) => "law-L",
        Source::Law(Active::Nonlinear) => "law-N",
        Source::Clamped(Active::Linear) => "clamped-L",
        Source::Clamped(Active::Nonlinear) => "clamped-N",
        Source::Oracle => "oracle",
        Source::Baseline => "baseline",
    }
}

pub fn parse_source(s: &str) -> Option<Source> {
    Some(match s {
        "nominal" => Source::Nominal,
        "law-L" => Source::Law(Active::Linear),
        "law-N" => Source::Law(Active::Nonlinear),
        "clamped-L" => Source::Clamped(Active::Linear),
        "clamped-N" => Source::Clamped(Active::Nonlinear),
        "oracle" => Source::Oracle,
        "baseline" => Source::Baseline,
        _ => return None,
    })
}

/// Scenario facts the metrics depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryContext {
    pub plant: String,
    pub controller: String,
    pub channels: usize,
    pub dt_secondary_s: f64,
    pub t_end_s: f64,
    pub t_svc_on_s: f64,
    /// `None` when the scenario has no load event.
    pub t_event_s: Option<f64>,
    pub v_ref_v: Vec<f64>,
    pub rho_v: f64,
    pub delta_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Ends within 1% of the reference on every channel.
    Recovered,
    /// Ends between 1% and 5% off.
    Degraded,
    /// Ends more than 5% off, or the run was aborted.
    Diverged,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct IdentityStats {
    pub checked: usize,
    pub passed: usize,
    pub exempt: usize,
    pub max_checked_residual_v: Option<f64>,
}

impl IdentityStats {
    /// Fraction of checked steps that passed; 1 when nothing was checked.
    pub fn pass_fraction(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.passed as f64 / self.checked as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InvariantStats {
    pub steps_checked: usize,
    pub dead_zone_violations: u64,
    pub floor_violations: u64,
    pub min_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub context: SummaryContext,
    pub rows: usize,
    /// Mean `|v_i − v_ref,i|` over the window before engagement.
    pub pre_svc_error_v: Option<Vec<f64>>,
    /// Mean `|v_i − v_ref,i|` over the window before the event (or the end).
    pub post_svc_error_v: Option<Vec<f64>>,
    /// Time after engagement from which every channel stays within 1 V
    /// until the event (or the end).
    pub settle_time_s: Option<f64>,
    /// Time after the event from which every channel stays within 1%.
    pub recovery_time_s: Option<f64>,
    /// Largest `max_i |v_i − v_ref,i|` after the event.
    pub event_peak_error_v: Option<f64>,
    pub terminal_error_v: Option<Vec<f64>>,
    /// Worst terminal error as a fraction of its channel's reference.
    pub terminal_worst_fraction: Option<f64>,
    pub max_v_norm: f64,
    pub max_e_norm: f64,
    pub switch_count: usize,
    pub dwell_linear: Option<f64>,
    pub dwell_nonlinear: Option<f64>,
    pub identity: IdentityStats,
    pub invariants: InvariantStats,
    /// Tail maxima of the identification errors over the last 20% of rows.
    pub tail_el_max: Option<f64>,
    pub tail_en_max: Option<f64>,
    /// Same, for whichever estimator was active at each step.
    pub tail_active_error_max: Option<f64>,
    pub aborted: bool,
    pub verdict: Verdict,
}

fn mean_abs_error(rows: &[Row], v_ref: &[f64]) -> Option<Vec<f64>> {
    if rows.is_empty() {
        return None;
    }
    let mut acc = vec![0.0; v_ref.len()];
    for r in rows {
        for (a, (v, vr)) in acc.iter_mut().zip(r.v.iter().zip(v_ref)) {
            *a += (v - vr).abs();
        }
    }
    Some(acc.into_iter().map(|a| a / rows.len() as f64).collect())
}

fn worst_error(r: &Row, v_ref: &[f64]) -> f64 {
    r.v.iter()
        .zip(v_ref)
        .map(|(v, vr)| (v - vr).abs())
        .fold(0.0, f64::max)
}

/// Index of the first row in `rows` from which `ok` holds through the end.
fn first_settled(rows: &[Row], ok: impl Fn(&Row) -> bool) -> Option<usize> {
    let mut first = None;
    for (i, r) in rows.iter().enumerate() {
        if ok(r) {
            first.get_or_insert(i);
        } else {
            first = None;
        }
    }
    first
}

fn max_opt(acc: Option<f64>, v: f64) -> Option<f64> {
    Some(acc.map_or(v, |a| a.max(v)))
}

impl Summary {
    pub fn compute(ctx: &SummaryContext, rows: &[Row], aborted: bool) -> Self {
        let dt = ctx.dt_secondary_s;
        let v_ref = &ctx.v_ref_v;
        let idx = |t: f64| ((t / dt).round() as usize).min(rows.len());
        let window = (STEADY_WINDOW_S / dt).round() as usize;
        let k_on = idx(ctx.t_svc_on_s);
        let k_post_end = ctx.t_event_s.map(idx).unwrap_or(rows.len());

        let pre = mean_abs_error(&rows[k_on.saturating_sub(window)..k_on], v_ref);
        let post = if k_post_end > k_on {
            mean_abs_error(
                &rows[k_post_end.saturating_sub(window).max(k_on)..k_post_end],
                v_ref,
            )
        } else {
            None
        };
        let settle_time_s = if k_post_end > k_on {
            first_settled(&rows[k_on..k_post_end], |r| worst_error(r, v_ref) < SETTLE_BAND_V)
                .map(|i| rows[k_on + i].t - ctx.t_svc_on_s)
        } else {
            None
        };
        let (recovery_time_s, event_peak_error_v) = match ctx.t_event_s {
            Some(te) if idx(te) < rows.len() => {
                let k_ev = idx(te);
                let after = &rows[k_ev..];
                let rec = first_settled(after, |r| {
                    r.v.iter()
                        .zip(v_ref)
                        .all(|(v, vr)| (v - vr).abs() < RECOVERY_BAND * vr.abs())
                })
                .map(|i| after[i].t - te);
                let peak = after.iter().map(|r| worst_error(r, v_ref)).fold(0.0, f64::max);
                (rec, Some(peak))
            }
            _ => (None, None),
        };
        let terminal = rows.last().map(|r| {
            r.v.iter()
                .zip(v_ref)
                .map(|(v, vr)| (v - vr).abs())
                .collect::<Vec<_>>()
        });
        let terminal_worst_fraction = terminal.as_ref().map(|t| {
            t.iter()
                .zip(v_ref)
                .map(|(e, vr)| e / vr.abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max)
        });

        let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let max_v_norm = rows.iter().map(|r| norm(&r.v)).fold(0.0, f64::max);
        let max_e_norm = rows.iter().map(|r| norm(&r.e)).fold(0.0, f64::max);

        let mut switch_count = 0;
        let mut last = None;
        let (mut n_l, mut n_n) = (0usize, 0usize);
        for r in rows {
            if let Some(a) = r.active {
                if last.is_some_and(|l| l != a) {
                    switch_count += 1;
                }
                last = Some(a);
                match a {
                    Active::Linear => n_l += 1,
                    Active::Nonlinear => n_n += 1,
                }
            }
        }
        let total = n_l + n_n;
        let (dwell_linear, dwell_nonlinear) = if total > 0 {
            (Some(n_l as f64 / total as f64), Some(n_n as f64 / total as f64))
        } else {
            (None, None)
        };

        let mut identity = IdentityStats::default();
        let mut invariants = InvariantStats::default();
        for r in rows {
            match r.diag.identity {
                IdentityCheck::Checked { residual_v } => {
                    identity.checked += 1;
                    if residual_v <= IDENTITY_TOL_V {
                        identity.passed += 1;
                    }
                    identity.max_checked_residual_v = max_opt(identity.max_checked_residual_v, residual_v);
                }
                IdentityCheck::Exempt { .. } => identity.exempt += 1,
                IdentityCheck::NotApplicable => {}
            }
            if r.diag.invariants_checked {
                invariants.steps_checked += 1;
                invariants.dead_zone_violations += u64::from(r.diag.dead_zone_violations);
                invariants.floor_violations += u64::from(r.diag.floor_violations);
                if let Some(s) = r.diag.sigma_min {
                    invariants.min_sigma = Some(invariants.min_sigma.map_or(s, |m: f64| m.min(s)));
                }
            }
        }

        let tail_start = rows.len() - rows.len() / 5;
        let (mut tail_el_max, mut tail_en_max, mut tail_active_error_max) = (None, None, None);
        for r in &rows[tail_start..] {
            if let Some(e) = r.el_norm {
                tail_el_max = max_opt(tail_el_max, e);
            }
            if let Some(e) = r.en_norm {
                tail_en_max = max_opt(tail_en_max, e);
            }
            let active = match r.active {
                Some(Active::Linear) => r.el_norm,
                Some(Active::Nonlinear) => r.en_norm,
                None => None,
            };
            if let Some(e) = active {
                tail_active_error_max = max_opt(tail_active_error_max, e);
            }
        }

        let verdict = match terminal_worst_fraction {
            _ if aborted => Verdict::Diverged,
            None => Verdict::Empty,
            Some(f) if f < RECOVERY_BAND => Verdict::Recovered,
            Some(f) if f <= DIVERGED_BAND => Verdict::Degraded,
            Some(_) => Verdict::Diverged,
        };

        Self {
            context: ctx.clone(),
            rows: rows.len(),
            pre_svc_error_v: pre,
            post_svc_error_v: post,
            settle_time_s,
            recovery_time_s,
            event_peak_error_v,
            terminal_error_v: terminal,
            terminal_worst_fraction,
            max_v_norm,
            max_e_norm,
            switch_count,
            dwell_linear,
            dwell_nonlinear,
            identity,
            invariants,
            tail_el_max,
            tail_en_max,
            tail_active_error_max,
            aborted,
            verdict,
        }
    }

    pub fn bibo_ok(&self) -> bool {
        self.max_v_norm <= self.context.delta_v && self.max_e_norm <= self.context.delta_v
    }
}
