use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::design::ControllerDesign;
use super::{ControlError, ControlStep, SecondaryController, Source, StepInput};
use crate::plant::LinearOraclePlant;
use crate::polyalg::{solve_diophantine, PolyMatrix};

/// Known-model optimal law
/// `L B E(k) = R V_ref − K V(k) − h(k)`, `h(k) = Σ_{i<d} L_i φ(k−i)`,
/// which makes `F V(k+d) = R V_ref(k)` hold exactly.
#[derive(Debug, Clone)]
pub struct OracleController {
    design: ControllerDesign,
    d: usize,
    k_poly: PolyMatrix,
    l_poly: PolyMatrix,
    lb: PolyMatrix,
    lead_inv: DMatrix<f64>,
    nominal: DVector<f64>,
    /// Newest first.
    outputs: VecDeque<DVector<f64>>,
    inputs: VecDeque<DVector<f64>>,
    phis: VecDeque<DVector<f64>>,
}

impl OracleController {
    pub fn new(
        plant: &LinearOraclePlant,
        design: ControllerDesign,
        nominal: DVector<f64>,
    ) -> Result<Self, ControlError> {
        let d = plant.delay();
        let sol = solve_diophantine(plant.a(), design.f(), d)?;
        let lb = sol.l.mul(plant.b())?;
        let lead_inv = lb
            .coeff(0)
            .clone()
            .try_inverse()
            .ok_or_else(|| ControlError::Design("L₀B₀ is singular".into()))?;
        Ok(Self {
            design,
            d,
            k_poly: sol.k,
            l_poly: sol.l,
            lb,
            lead_inv,
            nominal,
            outputs: VecDeque::new(),
            inputs: VecDeque::new(),
            phis: VecDeque::new(),
        })
    }

    /// `h(k)` from the recorded disturbance history.
    pub fn h(&self) -> DVector<f64> {
        let m = self.design.channels();
        let mut h = DVector::zeros(m);
        for i in 0..self.d.min(self.phis.len()) {
            h += self.l_poly.coeff_or_zero(i) * &self.phis[i];
        }
        h
    }

    fn lagged<'a>(hist: &'a VecDeque<DVector<f64>>, i: usize) -> Option<&'a DVector<f64>> {
        hist.get(i)
    }
}

impl SecondaryController for OracleController {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn step(&mut self, input: &StepInput<'_>) -> Result<ControlStep, ControlError> {
        let m = self.design.channels();
        self.outputs.push_front(input.v.clone());
        self.outputs.truncate(self.k_poly.degree() + 1);
        self.phis
            .push_front(input.phi.cloned().unwrap_or_else(|| DVector::zeros(m)));
        self.phis.truncate(self.d);

        let mut out = ControlStep::nominal(self.nominal.clone());
        if input.engaged {
            // Samples before the first one count as zero, matching a plant
            // that starts at rest.
            let mut rhs = self.design.target() - self.h();
            for i in 0..=self.k_poly.degree() {
                if let Some(v) = Self::lagged(&self.outputs, i) {
                    rhs -= self.k_poly.coeff(i) * v;
                }
            }
            for i in 1..=self.lb.degree() {
                if let Some(e) = Self::lagged(&self.inputs, i - 1) {
                    rhs -= self.lb.coeff(i) * e;
                }
            }
            out.e_star = &self.lead_inv * rhs;
            out.source = Source::Oracle;
        }
        self.inputs.push_front(out.e_star.clone());
        self.inputs.truncate(self.lb.degree().max(1));
        Ok(out)
    }
}
