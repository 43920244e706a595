//! Discrete linear MIMO plants `A(z⁻¹)V(k+d) = B(z⁻¹)E(k) + φ(k)` with known
//! coefficients. Their exact regression parameters are available, which makes
//! them the reference against which the identifiers and control laws are
//! checked.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Plant, PlantError};
use crate::polyalg::{solve_diophantine, PolyMatrix};

/// Additive disturbance entering alongside `B(z⁻¹)E(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DisturbanceSpec {
    #[default]
    None,
    /// Seeded random vectors with norm at most `amplitude`.
    Uniform { amplitude: f64, seed: u64 },
    /// `amplitude·sin(2πk/period)` on every channel, scaled so the vector norm
    /// stays within `amplitude`.
    Periodic { amplitude: f64, period_samples: f64 },
    /// Static output nonlinearity `amplitude/√m · sin(gain·V_i(k))`.
    OutputSine { amplitude: f64, gain: f64 },
}

impl DisturbanceSpec {
    /// Upper bound on `‖φ(k)‖`.
    pub fn bound(&self) -> f64 {
        match *self {
            DisturbanceSpec::None => 0.0,
            DisturbanceSpec::Uniform { amplitude, .. }
            | DisturbanceSpec::Periodic { amplitude, .. }
            | DisturbanceSpec::OutputSine { amplitude, .. } => amplitude.abs(),
        }
    }
}

/// Evaluates a [`DisturbanceSpec`] at a sample index.
#[derive(Debug, Clone, PartialEq)]
pub struct Disturbance {
    spec: DisturbanceSpec,
    dim: usize,
}

impl Disturbance {
    pub fn new(spec: DisturbanceSpec, dim: usize) -> Self {
        Self { spec, dim }
    }

    pub fn spec(&self) -> &DisturbanceSpec {
        &self.spec
    }

    /// `φ(k)`; `output_k` is `V(k)`.
    pub fn value(&self, k: usize, output_k: &DVector<f64>) -> DVector<f64> {
        let m = self.dim;
        match self.spec {
            DisturbanceSpec::None => DVector::zeros(m),
            DisturbanceSpec::Uniform { amplitude, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                let dir = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
                let radius: f64 = rng.random_range(0.0..1.0);
                let n = dir.norm();
                if n == 0.0 {
                    DVector::zeros(m)
                } else {
                    dir * (amplitude * radius / n)
                }
            }
            DisturbanceSpec::Periodic {
                amplitude,
                period_samples,
            } => {
                let s = (2.0 * std::f64::consts::PI * k as f64 / period_samples).sin();
                DVector::from_element(m, amplitude * s / (m as f64).sqrt())
            }
            DisturbanceSpec::OutputSine { amplitude, gain } => {
                let scale = amplitude / (m as f64).sqrt();
                output_k.map(|v| scale * (gain * v).sin())
            }
        }
    }
}

/// `A(z⁻¹)V(k+d) = B(z⁻¹)E(k) + φ(k)` with `A₀ = I`.
#[derive(Debug, Clone)]
pub struct LinearOraclePlant {
    a: PolyMatrix,
    b: PolyMatrix,
    d: usize,
    disturbance: Disturbance,
    outputs: Vec<DVector<f64>>,
    inputs: Vec<DVector<f64>>,
}

impl LinearOraclePlant {
    /// Rejects unstable `A` and singular `B₀`. A non-monic `A` is normalized
    /// together with `B`, which leaves the input–output behaviour unchanged.
    pub fn new(
        a: PolyMatrix,
        b: PolyMatrix,
        d: usize,
        disturbance: DisturbanceSpec,
    ) -> Result<Self, PlantError> {
        if a.dim() != b.dim() {
            return Err(PlantError::OracleRejected("A and B dimensions differ".into()));
        }
        let n = a.degree();
        if d == 0 || d > n.max(1) {
            return Err(PlantError::OracleRejected(format!(
                "relative degree {d} outside 1..={}",
                n.max(1)
            )));
        }
        if b.degree() + 1 > n.max(1) {
            return Err(PlantError::OracleRejected(format!(
                "deg B = {} must be below deg A = {n}",
                b.degree()
            )));
        }
        let a0_inv = a
            .coeff(0)
            .clone()
            .try_inverse()
            .ok_or_else(|| PlantError::OracleRejected("A₀ is singular".into()))?;
        let a_monic = a.normalized()?;
        let b = PolyMatrix::new(b.coeffs().iter().map(|c| &a0_inv * c).collect())?;
        if !a_monic.is_stable()? {
            return Err(PlantError::OracleRejected("A(z⁻¹) is not stable".into()));
        }
        if b.coeff(0).clone().try_inverse().is_none() {
            return Err(PlantError::OracleRejected("B(0) is singular".into()));
        }
        let m = a.dim();
        Ok(Self {
            a: a_monic,
            b,
            d,
            disturbance: Disturbance::new(disturbance, m),
            outputs: vec![DVector::zeros(m)],
            inputs: Vec::new(),
        })
    }

    pub fn a(&self) -> &PolyMatrix {
        &self.a
    }

    pub fn b(&self) -> &PolyMatrix {
        &self.b
    }

    pub fn delay(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.a.degree().max(1)
    }

    pub fn disturbance(&self) -> &Disturbance {
        &self.disturbance
    }

    pub fn outputs(&self) -> &[DVector<f64>] {
        &self.outputs
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    pub fn sample(&self) -> usize {
        self.outputs.len() - 1
    }

    /// `φ(k)`, zero for negative `k`.
    pub fn phi(&self, k: isize) -> DVector<f64> {
        if k < 0 {
            return DVector::zeros(self.a.dim());
        }
        let k = k as usize;
        self.disturbance.value(k, &self.outputs[k])
    }

    /// Exact regression parameters for design polynomial `F`: the stacked
    /// transposed blocks `[K₀ … K_{n−1}, (LB)₀ … (LB)_{n+d−2}]ᵀ`.
    pub fn regression_parameters(&self, f: &PolyMatrix) -> Result<DMatrix<f64>, PlantError> {
        let n = self.order();
        let m = self.a.dim();
        let sol = solve_diophantine(&self.a, f, self.d)?;
        let lb = sol.l.mul(&self.b)?;
        let blocks = n + n + self.d - 1;
        let mut theta = DMatrix::zeros(blocks * m, m);
        for i in 0..n {
            theta
                .view_mut((i * m, 0), (m, m))
                .copy_from(&sol.k.coeff_or_zero(i).transpose());
        }
        for j in 0..(n + self.d - 1) {
            theta
                .view_mut(((n + j) * m, 0), (m, m))
                .copy_from(&lb.coeff_or_zero(j).transpose());
        }
        Ok(theta)
    }

    fn past_output(&self, k: isize) -> DVector<f64> {
        if k < 0 {
            DVector::zeros(self.a.dim())
        } else {
            self.outputs[k as usize].clone()
        }
    }

    fn past_input(&self, k: isize) -> DVector<f64> {
        if k < 0 {
            DVector::zeros(self.a.dim())
        } else {
            self.inputs[k as usize].clone()
        }
    }
}

impl Plant for LinearOraclePlant {
    fn channels(&self) -> usize {
        self.a.dim()
    }

    fn current_disturbance(&self) -> Option<DVector<f64>> {
        Some(self.phi(self.sample() as isize))
    }

    fn output(&self) -> DVector<f64> {
        self.outputs.last().cloned().expect("history starts non-empty")
    }

    fn advance(&mut self, e_star: &DVector<f64>) -> Result<(), PlantError> {
        if e_star.len() != self.a.dim() {
            return Err(PlantError::ChannelMismatch {
                expected: self.a.dim(),
                got: e_star.len(),
            });
        }
        self.inputs.push(e_star.clone());
        let next = self.outputs.len() as isize;
        let base = next - self.d as isize;
        let mut v = self.phi(base);
        for i in 1..=self.a.degree() {
            v -= self.a.coeff(i) * self.past_output(next - i as isize);
        }
        for (j, bj) in self.b.coeffs().iter().enumerate() {
            v += bj * self.past_input(base - j as isize);
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(PlantError::Diverged {
                step: next as u64,
                time: next as f64,
            });
        }
        self.outputs.push(v);
        Ok(())
    }

    fn apply_load_step(&mut self, factor: f64) -> Result<(), PlantError> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(PlantError::InvalidLoadFactor(factor));
        }
        Ok(())
    }

    fn time(&self) -> f64 {
        self.sample() as f64
    }

    fn clone_box(&self) -> Box<dyn Plant> {
        Box::new(self.clone())
    }
}
