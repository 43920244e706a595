//! Primary droop control alone on the full four-DER microgrid: the output
//! voltages sag below the 300 V reference and stay there after the load
//! step, which is the offset secondary control has to remove.

use std::path::Path;

use microgrid_svc::harness::{run_scenario, ControllerKind, Profile, ScenarioConfig};

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let mut cfg = ScenarioConfig::load(&path).unwrap();
    Profile::Showcase.apply(&mut cfg);
    cfg.controller.kind = ControllerKind::None;

    let rec = run_scenario(&cfg).unwrap();
    println!(
        "{:>6}  {:>8} {:>8} {:>8} {:>8}  {:>9}",
        "t [s]", "V1", "V2", "V3", "V4", "ΣP [kW]"
    );
    for r in rec.rows.iter().step_by(50) {
        let p: f64 = r.p.as_ref().map_or(f64::NAN, |p| p.iter().sum());
        println!(
            "{:>6.3}  {:>8.3} {:>8.3} {:>8.3} {:>8.3}  {:>9.2}",
            r.t,
            r.v[0],
            r.v[1],
            r.v[2],
            r.v[3],
            p / 1e3
        );
    }
    if let Some(err) = &rec.summary.terminal_error_v {
        println!("terminal |V − V_ref| per DER: {err:.3?}");
    }
}
