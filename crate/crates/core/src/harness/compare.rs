//! Side-by-side comparison of two runs on the same timing grid.

use serde::Serialize;

use super::config::ScenarioConfig;
use super::record::{Summary, Verdict};
use super::run::{run_scenario, RunRecord};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// `b − a` where both exist.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictRow {
    pub run: String,
    pub controller: String,
    pub verdict: Verdict,
    pub recovery_time_s: Option<f64>,
    pub terminal_worst_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub metrics: Vec<MetricRow>,
    pub verdicts: [VerdictRow; 2],
}

fn worst(v: &Option<Vec<f64>>) -> Option<f64> {
    v.as_ref().map(|v| v.iter().copied().fold(0.0, f64::max))
}

fn metrics(s: &Summary) -> Vec<(&'static str, Option<f64>)> {
    vec![
        ("pre_svc_error_worst_v", worst(&s.pre_svc_error_v)),
        ("post_svc_error_worst_v", worst(&s.post_svc_error_v)),
        ("settle_time_s", s.settle_time_s),
        ("recovery_time_s", s.recovery_time_s),
        ("event_peak_error_v", s.event_peak_error_v),
        ("terminal_error_worst_v", worst(&s.terminal_error_v)),
        ("max_v_norm", Some(s.max_v_norm)),
        ("max_e_norm", Some(s.max_e_norm)),
        ("switch_count", Some(s.switch_count as f64)),
        ("dwell_linear", s.dwell_linear),
        ("dwell_nonlinear", s.dwell_nonlinear),
    ]
}

/// Rejects pairs that do not share a timing grid and plant.
pub fn check_comparable(a: &ScenarioConfig, b: &ScenarioConfig) -> Result<(), HarnessError> {
    if a.timing != b.timing {
        return Err(HarnessError::Mismatch(format!(
            "timing differs: {:?} vs {:?}",
            a.timing, b.timing
        )));
    }
    if a.plant.kind != b.plant.kind {
        return Err(HarnessError::Mismatch(format!(
            "plant differs: {:?} vs {:?}",
            a.plant.kind, b.plant.kind
        )));
    }
    Ok(())
}

pub fn compare_records(a: &RunRecord, b: &RunRecord) -> Result<Comparison, HarnessError> {
    check_comparable(&a.config, &b.config)?;
    let (ma, mb) = (metrics(&a.summary), metrics(&b.summary));
    let metrics = ma
        .into_iter()
        .zip(mb)
        .map(|((name, va), (_, vb))| MetricRow {
            metric: name.to_string(),
            a: va,
            b: vb,
            delta: va.zip(vb).map(|(x, y)| y - x),
        })
        .collect();
    let verdict = |run: &str, s: &Summary| VerdictRow {
        run: run.to_string(),
        controller: s.context.controller.clone(),
        verdict: s.verdict,
        recovery_time_s: s.recovery_time_s,
        terminal_worst_fraction: s.terminal_worst_fraction,
    };
    Ok(Comparison {
        metrics,
        verdicts: [verdict("a", &a.summary), verdict("b", &b.summary)],
    })
}

/// Runs both scenarios and compares them.
pub fn compare_runs(
    a: &ScenarioConfig,
    b: &ScenarioConfig,
) -> Result<(RunRecord, RunRecord, Comparison), HarnessError> {
    check_comparable(a, b)?;
    let (ra, rb) = rayon::join(|| run_scenario(a), || run_scenario(b));
    let (ra, rb) = (ra?, rb?);
    let cmp = compare_records(&ra, &rb)?;
    Ok((ra, rb, cmp))
}

impl Comparison {
    /// Plain-text tables for terminals.
    pub fn render(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
        let mut s = format!("{:<26} {:>14} {:>14} {:>14}\n", "metric", "a", "b", "b - a");
        for m in &self.metrics {
            s += &format!(
                "{:<26} {:>14} {:>14} {:>14}\n",
                m.metric,
                f(m.a),
                f(m.b),
                f(m.delta)
            );
        }
        s += &format!(
            "\n{:<4} {:<24} {:<10} {:>14} {:>14}\n",
            "run", "controller", "verdict", "recovery_s", "terminal_frac"
        );
        for v in &self.verdicts {
            let verdict = serde_json::to_value(v.verdict)
                .ok()
                .and_then(|x| x.as_str().map(String::from))
                .unwrap_or_default();
            s += &format!(
                "{:<4} {:<24} {:<10} {:>14} {:>14}\n",
                v.run,
                v.controller,
                verdict,
                f(v.recovery_time_s),
                f(v.terminal_worst_fraction)
            );
        }
        s
    }
}
