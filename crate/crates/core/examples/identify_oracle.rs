//! Open-loop identification of a known linear plant with the dead-zone
//! estimator. The estimate is compared with the exact regression parameters
//! while the plant is driven by random inputs and a bounded disturbance.

use std::collections::VecDeque;

use microgrid_svc::identify::{form_transformed_output, EstimatorBounds, LinearEstimator, RegressorState};
use microgrid_svc::plant::{DisturbanceSpec, LinearOraclePlant, Plant};
use microgrid_svc::polyalg::PolyMatrix;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let (m, n, d) = (2, 2, 1);
    let a = PolyMatrix::new(vec![
        DMatrix::identity(m, m),
        DMatrix::from_row_slice(m, m, &[-0.5, 0.1, 0.0, -0.3]),
        DMatrix::from_row_slice(m, m, &[0.06, 0.0, 0.02, 0.02]),
    ])
    .unwrap();
    let b = PolyMatrix::new(vec![
        DMatrix::from_row_slice(m, m, &[1.0, 0.2, -0.1, 0.8]),
        DMatrix::from_row_slice(m, m, &[0.2, 0.0, 0.0, 0.1]),
    ])
    .unwrap();
    let rho = 0.02;
    let mut plant = LinearOraclePlant::new(
        a,
        b,
        d,
        DisturbanceSpec::Uniform {
            amplitude: rho,
            seed: 1,
        },
    )
    .unwrap();
    let f = PolyMatrix::scalar(m, &[1.0, -0.2]).unwrap();
    let truth = plant.regression_parameters(&f).unwrap();

    let bounds = EstimatorBounds {
        rho,
        h_min: 0.05,
        theta_max: 10.0,
    };
    let mut est = LinearEstimator::new(m, n, d, bounds, LinearEstimator::prior(m, n, d, 1.0)).unwrap();
    let mut reg = RegressorState::new(m, n, d, f.degree() + 1);
    let mut past: VecDeque<DVector<f64>> = VecDeque::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;

    println!("{:>6} {:>12} {:>12}", "k", "max |e|", "|θ̂ − θ|");
    for k in 0..20_000 {
        reg.push_output(plant.output());
        if past.len() == d && reg.outputs().len() > f.degree() {
            let recent: Vec<&DVector<f64>> = reg.outputs().iter().collect();
            let y = form_transformed_output(&recent, &f).unwrap();
            let x = past.back().unwrap();
            let e = est.identification_error(&y, x).unwrap();
            worst = worst.max(e.norm());
            est.update(&e, x).unwrap();
        }
        let u = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        if reg.is_full() {
            past.push_front(reg.regressor(&u).unwrap());
            past.truncate(d);
        }
        reg.push_input(u.clone());
        plant.advance(&u).unwrap();
        if (k + 1) % 2000 == 0 {
            println!(
                "{:>6} {worst:>12.5} {:>12.5}",
                k + 1,
                (est.theta() - &truth).norm()
            );
            worst = 0.0;
        }
    }
    println!("dead zone 2ρ = {:.3}", 2.0 * rho);
}
