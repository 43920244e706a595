#![allow(dead_code)]

use microgrid_svc::harness::config::{OracleConfig, RhoSpec};
use microgrid_svc::harness::{ControllerKind, PlantKind, ScenarioConfig};
use microgrid_svc::plant::DisturbanceSpec;
use microgrid_svc::polyalg::PolyMatrix;
use nalgebra::DMatrix;
use rand::Rng;

fn random_matrix(rng: &mut impl Rng, m: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |_, _| rng.random_range(-scale..scale))
}

/// Monic `A` of degree `deg` with spectral radius below `radius`.
pub fn stable_monic(rng: &mut impl Rng, m: usize, deg: usize, radius: f64) -> PolyMatrix {
    loop {
        let mut c = vec![DMatrix::identity(m, m)];
        for _ in 0..deg {
            c.push(random_matrix(rng, m, 0.6));
        }
        let p = PolyMatrix::new(c).unwrap();
        if p.spectral_radius().unwrap() < radius {
            return p;
        }
    }
}

/// `B` with a well-conditioned leading block and stable zeros.
pub fn min_phase_input(rng: &mut impl Rng, m: usize, deg: usize) -> PolyMatrix {
    loop {
        let b0 = DMatrix::identity(m, m) + random_matrix(rng, m, 0.3);
        let inv = match b0.clone().try_inverse() {
            Some(i) => i,
            None => continue,
        };
        if b0.singular_values().min() < 0.5 {
            continue;
        }
        let mut c = vec![b0.clone()];
        for _ in 0..deg {
            c.push(random_matrix(rng, m, 0.3));
        }
        let zeros = PolyMatrix::new(c.iter().map(|ci| &inv * ci).collect()).unwrap();
        if zeros.spectral_radius().unwrap() < 0.7 {
            return PolyMatrix::new(c).unwrap();
        }
    }
}

/// A random well-posed oracle plant `(A, B)` of order `n`.
pub fn random_oracle(rng: &mut impl Rng, m: usize, n: usize) -> (PolyMatrix, PolyMatrix) {
    let a = stable_monic(rng, m, n, 0.9);
    let deg_b = rng.random_range(0..n);
    let b = min_phase_input(rng, m, deg_b);
    (a, b)
}

/// Closed-loop scenario on an oracle plant: one sample per row, engaged from
/// the start, no load event, unit signal base.
pub fn oracle_config(
    a: &PolyMatrix,
    b: &PolyMatrix,
    d: usize,
    disturbance: DisturbanceSpec,
    kind: ControllerKind,
    rho: f64,
    v_ref: Vec<f64>,
    rows: usize,
) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.timing.dt_primary_s = 1.0;
    cfg.timing.dt_secondary_s = 1.0;
    cfg.timing.t_end_s = rows as f64;
    cfg.timing.t_svc_on_s = 0.0;
    cfg.event.enabled = false;
    cfg.plant.kind = PlantKind::LinearOracle;
    cfg.plant.oracle = Some(OracleConfig {
        a: OracleConfig::from_poly(a),
        b: OracleConfig::from_poly(b),
        delay_d: d,
        disturbance,
    });
    cfg.reference.v_ref_v = microgrid_svc::harness::config::PerChannel::Each(v_ref);
    cfg.reference.v_nominal_v = 0.0;
    cfg.reference.e_min_v = Some(-1e6);
    cfg.reference.e_max_v = Some(1e6);
    cfg.controller.kind = kind;
    let ad = &mut cfg.controller.adaptive;
    ad.order_n = a.degree().max(b.degree() + 1).max(1);
    ad.delay_d = d;
    ad.rho_v = RhoSpec::Volts(rho);
    ad.signal_base_v = 1.0;
    ad.prior_gain = 1.0;
    cfg
}
