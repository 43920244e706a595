//! The adaptive controller on a known linear plant, next to the controller
//! that is handed the true model. Without disturbance the adaptive input
//! converges to the known-model input.

use microgrid_svc::harness::config::{OracleConfig, PerChannel, RhoSpec};
use microgrid_svc::harness::{run_scenario, ControllerKind, PlantKind, ScenarioConfig};
use microgrid_svc::plant::DisturbanceSpec;
use microgrid_svc::polyalg::PolyMatrix;
use nalgebra::DMatrix;

fn config(kind: ControllerKind) -> ScenarioConfig {
    let a = PolyMatrix::new(vec![
        DMatrix::identity(2, 2),
        DMatrix::from_row_slice(2, 2, &[-0.7, 0.2, 0.1, -0.5]),
    ])
    .unwrap();
    let b = PolyMatrix::new(vec![DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 1.1])]).unwrap();

    let mut cfg = ScenarioConfig::default();
    cfg.timing.dt_primary_s = 1.0;
    cfg.timing.dt_secondary_s = 1.0;
    cfg.timing.t_end_s = 400.0;
    cfg.timing.t_svc_on_s = 0.0;
    cfg.event.enabled = false;
    cfg.plant.kind = PlantKind::LinearOracle;
    cfg.plant.oracle = Some(OracleConfig {
        a: OracleConfig::from_poly(&a),
        b: OracleConfig::from_poly(&b),
        delay_d: 1,
        disturbance: DisturbanceSpec::None,
    });
    cfg.reference.v_ref_v = PerChannel::Each(vec![1.0, -0.5]);
    cfg.reference.v_nominal_v = 0.0;
    cfg.reference.e_min_v = Some(-100.0);
    cfg.reference.e_max_v = Some(100.0);
    cfg.controller.kind = kind;
    let ad = &mut cfg.controller.adaptive;
    ad.order_n = 1;
    ad.delay_d = 1;
    ad.rho_v = RhoSpec::Volts(0.0);
    ad.signal_base_v = 1.0;
    ad.prior_gain = 1.0;
    cfg
}

fn main() {
    let adaptive = run_scenario(&config(ControllerKind::LinearOnly)).unwrap();
    let oracle = run_scenario(&config(ControllerKind::Oracle)).unwrap();
    println!(
        "{:>4}  {:>18}  {:>18}  {:>10}",
        "k", "V (adaptive)", "E* (adaptive)", "|ΔE*|"
    );
    for (ra, ro) in adaptive.rows.iter().zip(&oracle.rows).step_by(40) {
        let diff =
            ra.e.iter()
                .zip(&ro.e)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
        println!(
            "{:>4}  {:>8.4} {:>8.4}  {:>8.4} {:>8.4}  {diff:>10.2e}",
            ra.k, ra.v[0], ra.v[1], ra.e[0], ra.e[1]
        );
    }
}
