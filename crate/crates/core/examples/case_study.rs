//! The islanded-microgrid case study: droop only for one second, then the
//! adaptive secondary controller, then a load step. Writes the time series,
//! diagnostics, summary and plot data to the directory given as the first
//! argument (default `target/case_study`).
//!
//! ```text
//! cargo run --release --example case_study -- out/ [ci|showcase]
//! ```

use std::path::{Path, PathBuf};

use microgrid_svc::harness::{emit_outputs, run_scenario, Profile, ScenarioConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map_or_else(|| PathBuf::from("target/case_study"), PathBuf::from);
    let profile = args
        .next()
        .and_then(|p| Profile::parse(&p))
        .unwrap_or(Profile::Ci);

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let mut cfg = ScenarioConfig::load(&path).unwrap();
    profile.apply(&mut cfg);

    let rec = run_scenario(&cfg).unwrap();
    if let Some(cal) = &rec.calibration {
        println!("calibrated ρ = {:.4} V", cal.rho_v);
    }
    let s = &rec.summary;
    println!("verdict: {:?}", s.verdict);
    println!(
        "mean error before engagement: {:.3?} V",
        s.pre_svc_error_v.as_deref().unwrap_or_default()
    );
    println!(
        "mean error before the event:  {:.4?} V",
        s.post_svc_error_v.as_deref().unwrap_or_default()
    );
    println!(
        "settle time {:?} s, recovery time {:?} s",
        s.settle_time_s, s.recovery_time_s
    );
    println!(
        "switches {}, nonlinear dwell {:?}",
        s.switch_count, s.dwell_nonlinear
    );

    std::fs::create_dir_all(&out).unwrap();
    for f in emit_outputs(&rec, &out, true).unwrap() {
        println!("wrote {}", f.display());
    }
}
