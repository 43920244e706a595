use microgrid_svc::polyalg::{solve_diophantine, PolyError, PolyMatrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_poly(rng: &mut impl Rng, m: usize, deg: usize) -> PolyMatrix {
    PolyMatrix::new(
        (0..=deg)
            .map(|_| DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0)))
            .collect(),
    )
    .unwrap()
}

/// Random `A` with a leading block that is comfortably invertible.
fn random_plant_poly(rng: &mut impl Rng, m: usize, n: usize) -> PolyMatrix {
    let mut p = random_poly(rng, m, n).coeffs().to_vec();
    p[0] = DMatrix::identity(m, m) * 2.0 + DMatrix::from_fn(m, m, |_, _| rng.random_range(-0.5..0.5));
    PolyMatrix::new(p).unwrap()
}

fn random_signal(rng: &mut impl Rng, m: usize, len: usize) -> Vec<DVector<f64>> {
    (0..len)
        .map(|_| DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)))
        .collect()
}

/// `Σᵢ Σ_r Σ_c C_i[r,c]·v(k−i)[c]`, written out element by element, with
/// samples before the start of the signal taken as zero.
fn apply_direct(p: &PolyMatrix, v: &[DVector<f64>], k: usize) -> DVector<f64> {
    let m = p.dim();
    let mut out = DVector::zeros(m);
    for i in 0..=p.degree() {
        if i > k {
            break;
        }
        let c = p.coeff(i);
        for r in 0..m {
            for col in 0..m {
                out[r] += c[(r, col)] * v[k - i][col];
            }
        }
    }
    out
}

fn filter(p: &PolyMatrix, v: &[DVector<f64>]) -> Vec<DVector<f64>> {
    (0..v.len()).map(|k| apply_direct(p, v, k)).collect()
}

fn max_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn diophantine_identity_holds_on_signals(
        seed in any::<u64>(),
        m in 1usize..=3,
        n in 1usize..=4,
        d_pick in 0usize..4,
        deg_f_pick in 0usize..5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 1 + d_pick % n;
        let a = random_plant_poly(&mut rng, m, n);
        let f = random_poly(&mut rng, m, deg_f_pick % (n + 1));
        let sol = solve_diophantine(&a, &f, d).unwrap();

        prop_assert_eq!(sol.l.degree(), d - 1);
        prop_assert!(sol.k.degree() < n.max(1));
        prop_assert!(sol.residual(&a, &f, d).unwrap() <= 1e-12);

        // F·v = L·(A·v) + K·v(·−d), checked on a random signal without
        // going through polynomial multiplication.
        let v = random_signal(&mut rng, m, 24);
        let fv = filter(&f, &v);
        let lav = filter(&sol.l, &filter(&a, &v));
        let kv = filter(&sol.k, &v);
        for t in 0..v.len() {
            let mut rhs = lav[t].clone();
            if t >= d {
                rhs += &kv[t - d];
            }
            let scale = 1.0 + fv[t].amax();
            prop_assert!((&fv[t] - rhs).amax() <= 1e-11 * scale);
        }
    }

    #[test]
    fn apply_matches_direct_sum(seed in any::<u64>(), m in 1usize..=4, deg in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_poly(&mut rng, m, deg);
        let v = random_signal(&mut rng, m, 12);
        for k in deg..v.len() {
            let got = p.apply(&v, k).unwrap();
            prop_assert!((got - apply_direct(&p, &v, k)).amax() <= 1e-14);
            let recent: Vec<&DVector<f64>> = (0..=deg).map(|i| &v[k - i]).collect();
            prop_assert_eq!(p.apply_recent(&recent).unwrap(), p.apply(&v, k).unwrap());
        }
    }

    #[test]
    fn apply_is_linear(seed in any::<u64>(), m in 1usize..=3, deg in 0usize..4, alpha in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_poly(&mut rng, m, deg);
        let u = random_signal(&mut rng, m, 8);
        let w = random_signal(&mut rng, m, 8);
        let mix: Vec<DVector<f64>> = u.iter().zip(&w).map(|(x, y)| x * alpha + y).collect();
        let k = 7;
        let lhs = p.apply(&mix, k).unwrap();
        let rhs = p.apply(&u, k).unwrap() * alpha + p.apply(&w, k).unwrap();
        prop_assert!((lhs - rhs).amax() <= 1e-12);
    }

    #[test]
    fn product_acts_as_composition(seed in any::<u64>(), m in 1usize..=3, da in 0usize..4, db in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_poly(&mut rng, m, da);
        let b = random_poly(&mut rng, m, db);
        let v = random_signal(&mut rng, m, 16);
        let ab = a.mul(&b).unwrap();
        prop_assert!(max_diff(&filter(&ab, &v), &filter(&a, &filter(&b, &v))) <= 1e-12);
    }

    #[test]
    fn normalized_has_identity_lead(seed in any::<u64>(), m in 1usize..=3, n in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_plant_poly(&mut rng, m, n);
        let monic = a.normalized().unwrap();
        prop_assert!((monic.coeff(0) - DMatrix::<f64>::identity(m, m)).amax() <= 1e-14);
        // A₀·Ã = A coefficient by coefficient.
        for i in 0..=n {
            prop_assert!((a.coeff(0) * monic.coeff(i) - a.coeff(i)).amax() <= 1e-13);
        }
    }

    #[test]
    fn scalar_quadratic_stability_matches_roots(r1 in -1.5f64..1.5, r2 in -1.5f64..1.5) {
        // (1 − r₁z⁻¹)(1 − r₂z⁻¹) has poles r₁ and r₂.
        let p = PolyMatrix::scalar(1, &[1.0, -(r1 + r2), r1 * r2]).unwrap();
        let radius = r1.abs().max(r2.abs());
        prop_assert!((p.spectral_radius().unwrap() - radius).abs() <= 1e-6);
        if (radius - 1.0).abs() > 1e-6 {
            prop_assert_eq!(p.is_stable().unwrap(), radius < 1.0);
        }
    }
}

#[test]
fn second_order_hand_example() {
    // A = 1 − 0.5z⁻¹ + 0.06z⁻², F = 1 − 0.2z⁻¹, d = 1: L = 1 and
    // K = (−0.2 + 0.5) + (−0.06)z⁻¹.
    let a = PolyMatrix::scalar(1, &[1.0, -0.5, 0.06]).unwrap();
    let f = PolyMatrix::scalar(1, &[1.0, -0.2]).unwrap();
    let sol = solve_diophantine(&a, &f, 1).unwrap();
    assert_eq!(sol.l.coeff(0)[(0, 0)], 1.0);
    assert!((sol.k.coeff(0)[(0, 0)] - 0.3).abs() < 1e-15);
    assert!((sol.k.coeff(1)[(0, 0)] + 0.06).abs() < 1e-15);
}

#[test]
fn delay_two_quotient_is_series_expansion() {
    // 1/(1 − 0.5z⁻¹) = 1 + 0.5z⁻¹ + …, so with F = 1 and d = 2 the
    // quotient is L = 1 + 0.5z⁻¹ and the remainder K = 0.25.
    let a = PolyMatrix::scalar(1, &[1.0, -0.5, 0.0]).unwrap();
    let f = PolyMatrix::identity(1);
    let sol = solve_diophantine(&a, &f, 2).unwrap();
    assert!((sol.l.coeff(1)[(0, 0)] - 0.5).abs() < 1e-15);
    assert!((sol.k.coeff(0)[(0, 0)] - 0.25).abs() < 1e-15);
    assert!(sol.k.coeff(1)[(0, 0)].abs() < 1e-15);
}

#[test]
fn mismatched_dimensions_rejected() {
    let a = PolyMatrix::identity(2);
    let f = PolyMatrix::identity(3);
    assert!(matches!(
        solve_diophantine(&a, &f, 1),
        Err(PolyError::DimensionMismatch { .. })
    ));
}
