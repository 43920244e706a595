//! Adaptive secondary control against an exact feedback-linearization
//! controller designed from a nominal model. The nominal model does not
//! match the microgrid, and the linearizing controller loses the voltages
//! while the adaptive one holds them at the reference.

use std::path::Path;

use microgrid_svc::harness::{compare_runs, ScenarioConfig};

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mmac = ScenarioConfig::load(&dir.join("ci.toml")).unwrap();
    let fl = ScenarioConfig::load(&dir.join("baseline.toml")).unwrap();
    let (a, b, cmp) = compare_runs(&mmac, &fl).unwrap();
    print!("{}", cmp.render());
    for (name, rec) in [("adaptive", &a), ("feedback linearization", &b)] {
        if let Some(f) = &rec.failure {
            println!("{name}: stopped early: {f}");
        }
    }
}
