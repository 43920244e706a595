mod common;

use microgrid_svc::identify::linear::{clamp_singular_values, sigma_min};
use microgrid_svc::identify::*;
use microgrid_svc::plant::{DisturbanceSpec, LinearOraclePlant, Plant};
use microgrid_svc::polyalg::PolyMatrix;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bounds(rho: f64) -> EstimatorBounds {
    EstimatorBounds {
        rho,
        h_min: 0.1,
        theta_max: 100.0,
    }
}

fn random_vec(rng: &mut impl Rng, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-scale..scale))
}

/// `y = W_o·[tanh(W_h·[x; 1]); 1]` with explicit loops.
fn forward_loops(w_h: &DMatrix<f64>, w_o: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let (hidden, p) = (w_h.nrows(), x.len());
    let mut act = vec![0.0; hidden + 1];
    for j in 0..hidden {
        let mut s = w_h[(j, p)];
        for i in 0..p {
            s += w_h[(j, i)] * x[i];
        }
        act[j] = s.tanh();
    }
    act[hidden] = 1.0;
    DVector::from_fn(w_o.nrows(), |r, _| {
        (0..=hidden).map(|j| w_o[(r, j)] * act[j]).sum()
    })
}

fn loss(net: &NeuralNet, x: &DVector<f64>, target: &DVector<f64>) -> f64 {
    0.5 * (net.forward(x) - target).norm_squared()
}

fn random_net(rng: &mut impl Rng, p: usize, hidden: usize, m: usize) -> NeuralNet {
    let mut net = NeuralNet::zeros(p, hidden, m);
    net.w_hidden = DMatrix::from_fn(hidden, p + 1, |_, _| rng.random_range(-1.0..1.0));
    net.w_out = DMatrix::from_fn(m, hidden + 1, |_, _| rng.random_range(-1.0..1.0));
    net
}

/// Worst relative error between backprop and central differences.
fn gradient_check(net: &NeuralNet, x: &DVector<f64>, target: &DVector<f64>) -> f64 {
    let (g, _) = net.gradients(x, target);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut probe = |analytic: f64, perturb: &dyn Fn(&mut NeuralNet, f64)| {
        let mut plus = net.clone();
        perturb(&mut plus, h);
        let mut minus = net.clone();
        perturb(&mut minus, -h);
        let fd = (loss(&plus, x, target) - loss(&minus, x, target)) / (2.0 * h);
        let err = (fd - analytic).abs() / analytic.abs().max(fd.abs()).max(1e-3);
        worst = worst.max(err);
    };
    for idx in 0..g.w_hidden.len() {
        probe(g.w_hidden[idx], &|n, s| n.w_hidden[idx] += s);
    }
    for idx in 0..g.w_out.len() {
        probe(g.w_out[idx], &|n, s| n.w_out[idx] += s);
    }
    worst
}

#[test]
fn backprop_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let m = rng.random_range(1..=4);
        let p = rng.random_range(1..=12);
        let hidden = rng.random_range(1..=8);
        let net = random_net(&mut rng, p, hidden, m);
        let x = random_vec(&mut rng, p, 1.0);
        let target = random_vec(&mut rng, m, 1.0);
        let err = gradient_check(&net, &x, &target);
        assert!(err < 1e-5, "relative gradient error {err}");
    }
}

#[test]
fn single_neuron_gradient() {
    // y = w_o·tanh(w_h·x + b_h) + b_o on scalars.
    let mut net = NeuralNet::zeros(1, 1, 1);
    net.w_hidden = DMatrix::from_row_slice(1, 2, &[0.7, -0.2]);
    net.w_out = DMatrix::from_row_slice(1, 2, &[1.3, 0.1]);
    let x = DVector::from_element(1, 0.4);
    let t = DVector::from_element(1, 0.25);
    assert!(gradient_check(&net, &x, &t) < 1e-5);
}

#[test]
fn forward_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..50 {
        let (m, p, hidden) = (
            rng.random_range(1..=4),
            rng.random_range(1..=10),
            rng.random_range(1..=20),
        );
        let net = random_net(&mut rng, p, hidden, m);
        let x = random_vec(&mut rng, p, 2.0);
        let oracle = forward_loops(&net.w_hidden, &net.w_out, &x);
        assert!((net.forward(&x) - oracle).amax() <= 1e-13);
    }
}

#[test]
fn zero_output_weights_predict_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut net = random_net(&mut rng, 5, 6, 2);
    net.w_out.fill(0.0);
    assert_eq!(net.forward(&random_vec(&mut rng, 5, 3.0)), DVector::zeros(2));
}

#[test]
fn training_on_own_output_leaves_weights_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut net = random_net(&mut rng, 4, 5, 2);
    let before = net.clone();
    let x = random_vec(&mut rng, 4, 1.0);
    let y = net.forward(&x);
    net.train_step(&x, &y, 0.1, 100.0);
    assert_eq!(net, before);
}

#[test]
fn non_finite_gradient_skips_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut net = random_net(&mut rng, 3, 4, 1);
    let before = net.clone();
    let x = random_vec(&mut rng, 3, 1.0);
    let out = net.train_step(&x, &DVector::from_element(1, f64::NAN), 0.1, 100.0);
    assert_eq!(out, TrainOutcome::Skipped);
    assert_eq!(net, before);
}

#[test]
fn scalar_update_hand_value() {
    // m = n = d = 1 gives X = [V(k), E(k)]; V = 1, E = 0 makes ‖X‖ = 1.
    let mut est = LinearEstimator::new(1, 1, 1, bounds(0.1), DMatrix::zeros(2, 1)).unwrap();
    // The zero prior is lifted to the floor on the leading block.
    assert!((est.theta()[(1, 0)] - 0.1).abs() < 1e-15);
    let x = DVector::from_column_slice(&[1.0, 0.0]);
    let rep = est.update(&DVector::from_element(1, 1.0), &x).unwrap();
    assert!(rep.eta);
    assert_eq!(est.theta()[(0, 0)], 0.5);
}

#[test]
fn projection_lifts_smallest_singular_value_to_floor() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..50 {
        let m = rng.random_range(1..=4);
        let mut a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        // Make it nearly singular.
        let col = a.column(0).clone_owned() * 0.999;
        if m > 1 {
            a.set_column(m - 1, &col);
        } else {
            a[(0, 0)] = 1e-4;
        }
        let floor = 0.2;
        let fixed = clamp_singular_values(&a, floor).expect("below floor");
        let s = sigma_min(&fixed);
        assert!(s >= floor && s - floor < 1e-12, "{s}");
    }
}

#[test]
fn prediction_is_matrix_vector_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let (m, n, d) = (2, 2, 1);
    let p = 2 * (2 * n + d - 1);
    let theta = DMatrix::from_fn(p, m, |_, _| rng.random_range(-1.0..1.0));
    let est = LinearEstimator::new(m, n, d, bounds(0.0), theta.clone()).unwrap();
    let x = random_vec(&mut rng, p, 1.0);
    let y = est.predict(&x).unwrap();
    let theta = est.theta();
    for r in 0..m {
        let oracle: f64 = (0..p).map(|i| theta[(i, r)] * x[i]).sum();
        assert!((y[r] - oracle).abs() < 1e-14);
    }
    assert!(matches!(
        est.predict(&DVector::zeros(p + 1)),
        Err(IdentifyError::DimensionMismatch { .. })
    ));
}

#[test]
fn transformed_output_matches_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let f = PolyMatrix::new(
        (0..3)
            .map(|_| DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0)))
            .collect(),
    )
    .unwrap();
    let hist: Vec<DVector<f64>> = (0..3).map(|_| random_vec(&mut rng, 2, 1.0)).collect();
    let refs: Vec<&DVector<f64>> = hist.iter().collect();
    let y = form_transformed_output(&refs, &f).unwrap();
    let oracle = (0..3).fold(DVector::zeros(2), |acc, i| acc + f.coeff(i) * &hist[i]);
    assert!((y - oracle).amax() < 1e-14);
}

/// Open-loop identification of an oracle plant driven by a random input.
struct IdRun {
    e_l: Vec<f64>,
    e_n: Vec<f64>,
    linear: LinearEstimator,
}

fn identify_open_loop(
    plant: &mut LinearOraclePlant,
    f: &PolyMatrix,
    rho: f64,
    theta0: DMatrix<f64>,
    neural: Option<NeuralConfig>,
    samples: usize,
    seed: u64,
) -> IdRun {
    let m = plant.channels();
    let (n, d) = (plant.order(), plant.delay());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reg = RegressorState::new(m, n, d, f.degree() + 1);
    let mut linear = LinearEstimator::new(m, n, d, bounds(rho), theta0.clone()).unwrap();
    let mut nonlinear = neural.map(|cfg| NonlinearEstimator::new(m, n, d, bounds(rho), theta0, cfg).unwrap());
    let mut past_x: std::collections::VecDeque<DVector<f64>> = Default::default();
    let (mut e_l, mut e_n) = (vec![], vec![]);
    for _ in 0..samples {
        reg.push_output(plant.output());
        if past_x.len() == d && reg.outputs().len() > f.degree() {
            let recent: Vec<&DVector<f64>> = reg.outputs().iter().collect();
            let y = form_transformed_output(&recent, f).unwrap();
            let x_lag = past_x.back().unwrap();
            let e = linear.identification_error(&y, x_lag).unwrap();
            e_l.push(e.norm());
            linear.update(&e, x_lag).unwrap();
            if let Some(nl) = nonlinear.as_mut() {
                let e = nl.identification_error(&y, x_lag).unwrap();
                e_n.push(e.norm());
                nl.update(&y, &e, x_lag).unwrap();
            }
        }
        let u = random_vec(&mut rng, m, 1.0);
        if reg.is_full() {
            let x = reg.regressor(&u).unwrap();
            if let Some(nl) = nonlinear.as_mut() {
                let h_hat = nl.h_hat(&x);
                nl.push_cache(CachedEstimate {
                    input: x.clone(),
                    h_hat,
                });
            }
            past_x.push_front(x);
            past_x.truncate(d);
        }
        reg.push_input(u.clone());
        plant.advance(&u).unwrap();
    }
    IdRun { e_l, e_n, linear }
}

fn design() -> PolyMatrix {
    PolyMatrix::scalar(2, &[1.0, -0.2]).unwrap()
}

#[test]
fn true_parameters_predict_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..10 {
        let n = rng.random_range(1..=3);
        let d = rng.random_range(1..=n);
        let (a, b) = common::random_oracle(&mut rng, 2, n);
        let mut plant = LinearOraclePlant::new(a, b, d, DisturbanceSpec::None).unwrap();
        let theta = plant.regression_parameters(&design()).unwrap();
        let run = identify_open_loop(&mut plant, &design(), 0.0, theta.clone(), None, 200, 1);
        assert!(
            run.e_l.iter().all(|&e| e <= 1e-10),
            "{:?}",
            run.e_l.iter().cloned().fold(0.0, f64::max)
        );
        // With ρ = 0 rounding-level errors still pass the gate, but they
        // cannot move the estimate measurably.
        assert!((run.linear.theta() - &theta).amax() <= 1e-12);
    }
}

#[test]
fn adaptive_estimate_converges_on_noise_free_plant() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..5 {
        let n = rng.random_range(1..=2);
        let d = rng.random_range(1..=n);
        let (a, b) = common::random_oracle(&mut rng, 2, n);
        let mut plant = LinearOraclePlant::new(a, b, d, DisturbanceSpec::None).unwrap();
        let theta0 = LinearEstimator::prior(2, n, d, 1.0);
        let run = identify_open_loop(&mut plant, &design(), 0.0, theta0, None, 20000, 2);
        let tail = run.e_l[run.e_l.len() - 500..].iter().cloned().fold(0.0, f64::max);
        assert!(tail <= 1e-10, "tail error {tail}");
    }
}

#[test]
fn excursions_beyond_dead_zone_die_out() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for i in 0..10 {
        let n = rng.random_range(1..=2);
        let (a, b) = common::random_oracle(&mut rng, 2, n);
        let amp = 0.05;
        let spec = DisturbanceSpec::Uniform {
            amplitude: amp,
            seed: i,
        };
        let mut plant = LinearOraclePlant::new(a, b, 1, spec).unwrap();
        // With d = 1 the disturbance enters Y unfiltered, so ρ = amp bounds it.
        let theta0 = LinearEstimator::prior(2, n, 1, 1.0);
        let run = identify_open_loop(&mut plant, &design(), amp, theta0, None, 10000, 3);
        let excess = |s: &[f64]| s.iter().map(|e| (e - 2.0 * amp).max(0.0)).sum::<f64>();
        let fifth = run.e_l.len() / 5;
        let (head, tail) = (excess(&run.e_l[..fifth]), excess(&run.e_l[4 * fifth..]));
        assert!(tail < 0.1 * head, "excess {tail} vs {head} at the start");
        let worst = run.e_l[4 * fifth..].iter().cloned().fold(0.0, f64::max);
        assert!(worst <= 3.0 * amp, "tail {worst}");
    }
}

#[test]
fn network_reduces_error_on_output_nonlinearity() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (a, b) = common::random_oracle(&mut rng, 2, 1);
    let spec = DisturbanceSpec::OutputSine {
        amplitude: 0.5,
        gain: 3.0,
    };
    let cfg = NeuralConfig {
        hidden: 20,
        learn_rate: 0.05,
        w_max: 100.0,
        seed: 4,
    };
    let theta0 = LinearEstimator::prior(2, 1, 1, 1.0);
    let mut plant = LinearOraclePlant::new(a, b, 1, spec).unwrap();
    let run = identify_open_loop(&mut plant, &design(), 0.0, theta0, Some(cfg), 20000, 5);
    let rms = |v: &[f64]| (v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt();
    let tail = run.e_l.len() - 2000;
    let (l, n) = (rms(&run.e_l[tail..]), rms(&run.e_n[tail..]));
    assert!(n < l, "nonlinear {n} vs linear {l}");
}

/// Whenever `‖e‖ > 2ρ` with `‖φ‖ ≤ ρ`, the update moves `θ̂` closer to the
/// true parameters by at least `‖e‖(‖e‖ − 2ρ)/(1 + ‖X‖²)`, so those terms
/// sum to at most the initial squared parameter error.
#[test]
fn parameter_error_never_grows_under_bounded_disturbance() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for i in 0..10 {
        let n = rng.random_range(1..=2);
        let (a, b) = common::random_oracle(&mut rng, 2, n);
        let amp = 0.05;
        let spec = DisturbanceSpec::Uniform {
            amplitude: amp,
            seed: i,
        };
        let mut plant = LinearOraclePlant::new(a, b, 1, spec).unwrap();
        let theta = plant.regression_parameters(&design()).unwrap();
        let mut tight = bounds(amp);
        tight.h_min = 1e-6;
        let mut est = LinearEstimator::new(2, n, 1, tight, LinearEstimator::prior(2, n, 1, 1.0)).unwrap();
        let mut reg = RegressorState::new(2, n, 1, 2);
        let mut x_prev: Option<DVector<f64>> = None;
        let mut dist = (est.theta() - &theta).norm();
        let budget = dist * dist;
        let mut spent = 0.0;
        for _ in 0..2000 {
            reg.push_output(plant.output());
            if let (Some(x), true) = (&x_prev, reg.outputs().len() > 1) {
                let recent: Vec<&DVector<f64>> = reg.outputs().iter().collect();
                let y = form_transformed_output(&recent, &design()).unwrap();
                let e = est.identification_error(&y, x).unwrap();
                let rep = est.update(&e, x).unwrap();
                let next = (est.theta() - &theta).norm();
                assert!(!rep.projected);
                let gain = rep.error_norm * (rep.error_norm - 2.0 * amp) / (1.0 + x.norm_squared());
                if rep.eta {
                    assert!(dist * dist - next * next >= gain - 1e-12);
                    spent += gain;
                }
                assert!(next <= dist + 1e-12, "{next} > {dist}");
                dist = next;
            }
            let u = random_vec(&mut rng, 2, 1.0);
            if reg.is_full() {
                x_prev = Some(reg.regressor(&u).unwrap());
            }
            reg.push_input(u.clone());
            plant.advance(&u).unwrap();
        }
        assert!(spent <= budget + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dead_zone_freezes_parameters(seed in any::<u64>(), scale in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = 0.3;
        let theta0 = DMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0));
        let mut est = LinearEstimator::new(2, 1, 2, bounds(rho), theta0).unwrap();
        let x = random_vec(&mut rng, 6, 5.0);
        let dir = random_vec(&mut rng, 2, 1.0);
        let e = &dir / dir.norm().max(1e-12) * (2.0 * rho * scale);
        let before = est.lagged().clone();
        let rep = est.update(&e, &x).unwrap();
        prop_assert!(!rep.eta);
        prop_assert_eq!(est.theta(), &before);
    }

    #[test]
    fn update_step_is_bounded(seed in any::<u64>(), x_scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta0 = DMatrix::from_fn(8, 2, |_, _| rng.random_range(-1.0..1.0));
        let mut b = bounds(0.0);
        b.h_min = 1e-9;
        let mut est = LinearEstimator::new(2, 2, 1, b, theta0).unwrap();
        let x = random_vec(&mut rng, 8, x_scale);
        let e = random_vec(&mut rng, 2, 3.0);
        let before = est.lagged().clone();
        let rep = est.update(&e, &x).unwrap();
        let step = (est.theta() - before).norm();
        prop_assert!(step <= x.norm() * e.norm() / (1.0 + x.norm_squared()) + 1e-12 || rep.projected);
        prop_assert!(step <= e.norm() / 2.0 + 1e-12 || rep.projected);
        prop_assert!(est.sigma_min() >= b.h_min);
    }

    #[test]
    fn projection_keeps_floor_and_box(seed in any::<u64>(), m in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = m * 3;
        let theta0 = DMatrix::from_fn(p, m, |_, _| rng.random_range(-300.0..300.0));
        let mut est = LinearEstimator::new(m, 1, 2, bounds(0.0), theta0).unwrap();
        for _ in 0..5 {
            let x = random_vec(&mut rng, p, 50.0);
            let e = random_vec(&mut rng, m, 500.0);
            est.update(&e, &x).unwrap();
            prop_assert!(est.sigma_min() >= est.bounds().h_min);
            // The floor is applied after the box and may push the leading
            // block out by at most h_min.
            let off = m;
            let c = est.bounds().theta_max;
            for r in 0..p {
                let limit = if (off..off + m).contains(&r) { c + est.bounds().h_min } else { c };
                prop_assert!(est.theta().row(r).amax() <= limit);
            }
        }
    }

    #[test]
    fn network_norm_capped(seed in any::<u64>(), w_max in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = random_net(&mut rng, 4, 6, 2);
        for _ in 0..10 {
            let x = random_vec(&mut rng, 4, 3.0);
            let t = random_vec(&mut rng, 2, 50.0);
            net.train_step(&x, &t, 0.5, w_max);
            prop_assert!(net.w_hidden.norm() <= w_max * (1.0 + 1e-12));
            prop_assert!(net.w_out.norm() <= w_max * (1.0 + 1e-12));
        }
    }
}
