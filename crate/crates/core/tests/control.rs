mod common;

use microgrid_svc::control::switch::replay;
use microgrid_svc::control::*;
use microgrid_svc::identify::linear::leading_block;
use microgrid_svc::identify::RegressorState;
use microgrid_svc::plant::{DisturbanceSpec, LinearOraclePlant, Plant};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut impl Rng, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-scale..scale))
}

/// Drives `plant` with the known-model law and returns the outputs.
fn oracle_closed_loop(
    plant: &mut LinearOraclePlant,
    design: ControllerDesign,
    samples: usize,
) -> Vec<DVector<f64>> {
    let m = plant.channels();
    let mut ctl = OracleController::new(plant, design, DVector::zeros(m)).unwrap();
    let mut out = vec![plant.output()];
    for k in 0..samples {
        let v = plant.output();
        let phi = plant.current_disturbance();
        let step = ctl
            .step(&StepInput {
                k,
                v: &v,
                engaged: true,
                phi: phi.as_ref(),
            })
            .unwrap();
        assert_eq!(step.source, Source::Oracle);
        plant.advance(&step.e_star).unwrap();
        out.push(plant.output());
    }
    out
}

#[test]
fn oracle_law_makes_the_reference_model_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let specs = [
        DisturbanceSpec::None,
        DisturbanceSpec::Uniform {
            amplitude: 0.1,
            seed: 2,
        },
        DisturbanceSpec::OutputSine {
            amplitude: 0.2,
            gain: 1.5,
        },
        DisturbanceSpec::Periodic {
            amplitude: 0.1,
            period_samples: 17.0,
        },
    ];
    for spec in specs {
        for _ in 0..5 {
            let m = rng.random_range(1..=3);
            let n = rng.random_range(1..=3);
            let d = rng.random_range(1..=n);
            let (a, b) = common::random_oracle(&mut rng, m, n);
            let mut plant = LinearOraclePlant::new(a, b, d, spec.clone()).unwrap();
            let v_ref = random_vec(&mut rng, m, 2.0);
            let design = ControllerDesign::first_order(0.2, v_ref.clone()).unwrap();
            let target = design.target();
            let v = oracle_closed_loop(&mut plant, design, 80);
            // F V(k+d) = V(k+d) − 0.2 V(k+d−1) must equal R V_ref from the
            // first engaged sample on.
            for t in d..v.len() {
                let prev = if t >= 1 {
                    v[t - 1].clone()
                } else {
                    DVector::zeros(m)
                };
                let y = &v[t] - prev * 0.2;
                let res = (&y - &target).amax();
                assert!(res <= 1e-9 * (1.0 + target.amax()), "{spec:?} t={t}: {res}");
            }
        }
    }
}

#[test]
fn oracle_output_converges_to_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let (a, b) = common::random_oracle(&mut rng, 2, 2);
    let mut plant = LinearOraclePlant::new(a, b, 1, DisturbanceSpec::None).unwrap();
    let v_ref = DVector::from_column_slice(&[1.0, -0.5]);
    let v = oracle_closed_loop(
        &mut plant,
        ControllerDesign::first_order(0.2, v_ref.clone()).unwrap(),
        100,
    );
    assert!((v.last().unwrap() - v_ref).amax() < 1e-12);
}

#[test]
fn linear_law_hand_substitution() {
    // θ rows [K₀, K₁, (LB)₀, (LB)₁] for m = 1, n = 2, d = 1.
    let theta = DMatrix::from_column_slice(4, 1, &[0.3, -0.06, 1.0, 0.0]);
    let mut reg = RegressorState::new(1, 2, 1, 2);
    reg.push_output(DVector::from_element(1, 300.0));
    reg.push_input(DVector::zeros(1));
    reg.push_output(DVector::from_element(1, 300.0));
    let r_vref = DVector::from_element(1, 0.8 * 300.0);
    let e = linear_control(&theta, &reg, &r_vref).unwrap();
    assert!((e[0] - (0.8 * 300.0 - 0.3 * 300.0 + 0.06 * 300.0)).abs() < 1e-12);
    assert!((e[0] - 168.0).abs() < 1e-12);
}

#[test]
fn zero_reference_and_history_give_zero_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let theta = DMatrix::from_fn(8, 2, |r, c| {
        if r == 4 + c {
            1.0
        } else {
            rng.random_range(-1.0..1.0)
        }
    });
    let mut reg = RegressorState::new(2, 2, 1, 2);
    for _ in 0..2 {
        reg.push_output(DVector::zeros(2));
        reg.push_input(DVector::zeros(2));
    }
    assert_eq!(
        linear_control(&theta, &reg, &DVector::zeros(2)).unwrap(),
        DVector::zeros(2)
    );
}

fn random_setup(rng: &mut impl Rng, m: usize, n: usize, d: usize) -> (DMatrix<f64>, RegressorState) {
    let p = m * (2 * n + d - 1);
    let mut theta = DMatrix::from_fn(p, m, |_, _| rng.random_range(-1.0..1.0));
    for i in 0..m {
        theta[(m * n + i, i)] += 3.0;
    }
    let mut reg = RegressorState::new(m, n, d, n);
    for _ in 0..(n + d) {
        reg.push_output(random_vec(rng, m, 2.0));
        reg.push_input(random_vec(rng, m, 2.0));
    }
    (theta, reg)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn law_solves_the_prediction_equation(seed in any::<u64>(), m in 1usize..=3, n in 1usize..=3, d_pick in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 1 + d_pick % n;
        let (theta, reg) = random_setup(&mut rng, m, n, d);
        let target = random_vec(&mut rng, m, 1.0);
        let e = linear_control(&theta, &reg, &target).unwrap();
        // θᵀX(k) with the solved E(k) in place hits the target.
        let x = reg.regressor(&e).unwrap();
        prop_assert!((theta.tr_mul(&x) - &target).amax() <= 1e-10);
    }

    #[test]
    fn network_estimate_shifts_input_linearly(seed in any::<u64>(), m in 1usize..=3, n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (theta, reg) = random_setup(&mut rng, m, n, 1);
        let target = random_vec(&mut rng, m, 1.0);
        let base = linear_control(&theta, &reg, &target).unwrap();
        prop_assert_eq!(&nonlinear_control(&theta, &reg, &target, &DVector::zeros(m)).unwrap(), &base);
        let c = random_vec(&mut rng, m, 1.0);
        let shifted = nonlinear_control(&theta, &reg, &target, &c).unwrap();
        let lead = leading_block(&theta, m, n);
        let expected = &base - lead.lu().solve(&c).unwrap();
        prop_assert!((shifted - expected).amax() <= 1e-10);
    }

    #[test]
    fn switch_indices_recomputable_from_log(
        seed in any::<u64>(),
        rho in 0.0f64..0.5,
        mu in 0.0f64..3.0,
        window in 1usize..8,
        len in 1usize..60,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log: Vec<(f64, f64, f64)> = (0..len)
            .map(|_| (rng.random_range(0.0..1.5), rng.random_range(0.0..1.5), rng.random_range(0.0..5.0)))
            .collect();
        let mut sw = SwitchState::new(rho, mu, window);
        let mut prev_cum = [0.0, 0.0];
        for (k, &(el, en, x2)) in log.iter().enumerate() {
            let active = sw.update(el, en, x2);
            // ξ_j(k) = Σ_{s≤k} η(‖e‖² − 4ρ²)/(2(1+‖X‖²)) + μ Σ_{last M}(1 − η)‖e‖²
            let xi = |pick: fn(&(f64, f64, f64)) -> f64| {
                let cum: f64 = log[..=k]
                    .iter()
                    .filter(|r| pick(r) > 2.0 * rho)
                    .map(|r| (pick(r).powi(2) - 4.0 * rho * rho) / (2.0 * (1.0 + r.2)))
                    .sum();
                let start = (k + 1).saturating_sub(window);
                let win: f64 = log[start..=k].iter().filter(|r| pick(r) <= 2.0 * rho).map(|r| pick(r).powi(2)).sum();
                cum + mu * win
            };
            let (xl, xn) = (xi(|r| r.0), xi(|r| r.1));
            prop_assert!((sw.xi(Active::Linear) - xl).abs() <= 1e-12 * (1.0 + xl.abs()));
            prop_assert!((sw.xi(Active::Nonlinear) - xn).abs() <= 1e-12 * (1.0 + xn.abs()));
            prop_assert_eq!(active, if sw.xi(Active::Linear) <= sw.xi(Active::Nonlinear) { Active::Linear } else { Active::Nonlinear });
            for (i, j) in [Active::Linear, Active::Nonlinear].into_iter().enumerate() {
                prop_assert!(sw.cumulative(j) >= prev_cum[i]);
                prev_cum[i] = sw.cumulative(j);
            }
        }
        let replayed = replay(rho, mu, window, &log);
        prop_assert_eq!(replayed.last().copied(), Some(sw.active()));
    }
}

#[test]
fn switch_replay_hand_sequence() {
    // ρ = 0.1, μ = 1, M = 2, ‖X‖² = 1.
    // k=0: ξ_L = (1 − 0.04)/4 = 0.24, ξ_N = 0.01 → N
    // k=1: ξ_L = 0.24 + 0.01, ξ_N = 0.01 + (0.25 − 0.04)/4 = 0.0625 → N
    // k=2: ξ_L = 0.24 + 0.01 + 0, ξ_N = 0.0525 + (2.25 − 0.04)/4 = 0.605 → L
    let rows = [(1.0, 0.1, 1.0), (0.1, 0.5, 1.0), (0.0, 1.5, 1.0)];
    assert_eq!(
        replay(0.1, 1.0, 2, &rows),
        vec![Active::Nonlinear, Active::Nonlinear, Active::Linear]
    );
}

#[test]
fn design_rejects_unstable_or_coupled_filters() {
    use microgrid_svc::polyalg::PolyMatrix;
    let v = DVector::from_element(2, 1.0);
    assert!(ControllerDesign::first_order(1.2, v.clone()).is_err());
    let coupled = PolyMatrix::new(vec![DMatrix::identity(2, 2), DMatrix::from_element(2, 2, 0.1)]).unwrap();
    assert!(ControllerDesign::new(coupled, DMatrix::identity(2, 2), v.clone()).is_err());
    let f = PolyMatrix::scalar(2, &[1.0, -0.2]).unwrap();
    assert!(ControllerDesign::new(f, DMatrix::from_element(2, 2, 0.4), v).is_err());
}
