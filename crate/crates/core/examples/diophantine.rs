//! Splits a design filter `F` into `L·A + z⁻ᵈK` for a two-channel plant
//! denominator and checks the identity on the coefficients.

use microgrid_svc::polyalg::{solve_diophantine, PolyMatrix};
use nalgebra::DMatrix;

fn main() {
    let a = PolyMatrix::new(vec![
        DMatrix::identity(2, 2),
        DMatrix::from_row_slice(2, 2, &[-0.6, 0.1, 0.05, -0.4]),
        DMatrix::from_row_slice(2, 2, &[0.08, 0.0, -0.02, 0.03]),
    ])
    .unwrap();
    let f = PolyMatrix::scalar(2, &[1.0, -0.2]).unwrap();

    for d in 1..=2 {
        let sol = solve_diophantine(&a, &f, d).unwrap();
        println!("d = {d}");
        for (i, c) in sol.l.coeffs().iter().enumerate() {
            println!("  L{i} = {:?}", c.as_slice());
        }
        for (i, c) in sol.k.coeffs().iter().enumerate() {
            println!("  K{i} = {:?}", c.as_slice());
        }
        println!("  residual = {:.2e}", sol.residual(&a, &f, d).unwrap());
    }
}
