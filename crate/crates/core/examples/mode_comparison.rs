//! Switched multiple-model control against its linear-only and
//! nonlinear-only variants on the full microgrid model.

use std::path::Path;

use microgrid_svc::harness::{run_scenario, ControllerKind, Profile, ScenarioConfig};
use rayon::prelude::*;

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let mut base = ScenarioConfig::load(&path).unwrap();
    Profile::Showcase.apply(&mut base);

    let kinds = [
        ControllerKind::Mmac,
        ControllerKind::LinearOnly,
        ControllerKind::NonlinearOnly,
    ];
    let recs: Vec<_> = kinds
        .par_iter()
        .map(|&k| {
            let mut cfg = base.clone();
            cfg.controller.kind = k;
            (k, run_scenario(&cfg).unwrap())
        })
        .collect();

    println!(
        "{:<16} {:>12} {:>12} {:>9} {:>9}",
        "controller", "tail RMS [V]", "event peak", "switches", "N dwell"
    );
    for (k, rec) in &recs {
        let tail = &rec.rows[rec.rows.len() * 4 / 5..];
        let ms: f64 = tail
            .iter()
            .flat_map(|r| r.v.iter().map(|v| (v - 300.0).powi(2)))
            .sum::<f64>()
            / (tail.len() * 4) as f64;
        println!(
            "{:<16} {:>12.4} {:>12.3} {:>9} {:>9}",
            format!("{k:?}"),
            ms.sqrt(),
            rec.summary.event_peak_error_v.unwrap_or(f64::NAN),
            rec.summary.switch_count,
            rec.summary
                .dwell_nonlinear
                .map_or("-".into(), |d| format!("{d:.2}"))
        );
    }
}
