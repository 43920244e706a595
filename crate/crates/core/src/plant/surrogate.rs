//! Reduced nonlinear plant: first-order voltage response per DER with
//! reactive-power droop, filtered power measurements, impedance loads whose
//! power grows with the square of the voltage, and reactive coupling between
//! neighbouring DERs.
//!
//! Per DER `i` the states are `[v_i, P_i, Q_i]`:
//!
//! ```text
//! τ_i v̇_i = −v_i + E*_i − D_Q,i Q_i
//! Q̇_i = ω_c (q_i(v) − Q_i),   q_i = 1.5 Σ_l s_il B_l v_i² + Σ_j κ_ij v_i (v_i − v_j)
//! Ṗ_i = ω_c (p_i(v) − P_i),   p_i = 1.5 Σ_l s_il G_l v_i²
//! ```

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::ode::OdeSystem;
use super::params::MicrogridParams;
use super::{Dynamics, PlantError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateLoad {
    pub conductance_s: f64,
    pub susceptance_s: f64,
    /// Fraction of this load supplied by each DER.
    pub share: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateParams {
    pub tau_v_s: Vec<f64>,
    pub d_q_v_per_var: Vec<f64>,
    pub omega_c_rad_s: f64,
    pub loads: Vec<SurrogateLoad>,
    /// Symmetric reactive coupling gains `κ_ij` (Var/V²).
    pub coupling: Vec<Vec<f64>>,
    pub event_load: usize,
}

impl SurrogateParams {
    /// Reduces the full network: load shares fall off with hop distance and
    /// neighbouring DERs couple through their combined series reactance.
    pub fn from_microgrid(p: &MicrogridParams, tau_v_s: f64) -> Self {
        let m = p.ders.len();
        let net = &p.network;
        let w = p.omega_nominal_rad_s;
        let loads = net
            .loads
            .iter()
            .map(|load| {
                let (g, b) = load.admittance(w);
                let raw: Vec<f64> = net
                    .der_bus
                    .iter()
                    .map(|&bus| {
                        let hops = net.hops(bus, load.bus).unwrap_or(usize::MAX / 2);
                        1.0 / (1.0 + hops as f64)
                    })
                    .collect();
                let total: f64 = raw.iter().sum();
                SurrogateLoad {
                    conductance_s: g,
                    susceptance_s: b,
                    share: raw.iter().map(|r| r / total).collect(),
                }
            })
            .collect();
        let mut coupling = vec![vec![0.0; m]; m];
        for line in &net.lines {
            for (i, &bi) in net.der_bus.iter().enumerate() {
                for (j, &bj) in net.der_bus.iter().enumerate() {
                    if bi == line.from_bus && bj == line.to_bus {
                        let x = w * (p.ders[i].l_c_h + line.l_h + p.ders[j].l_c_h);
                        let k = 1.5 / x;
                        coupling[i][j] += k;
                        coupling[j][i] += k;
                    }
                }
            }
        }
        Self {
            tau_v_s: vec![tau_v_s; m],
            d_q_v_per_var: p.ders.iter().map(|d| d.d_q_v_per_var).collect(),
            omega_c_rad_s: p.ders[0].omega_c_rad_s,
            loads,
            coupling,
            event_load: p.event_load,
        }
    }

    pub fn channels(&self) -> usize {
        self.tau_v_s.len()
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let m = self.channels();
        let bad = |s: String| Err(PlantError::InvalidParameter(s));
        if m == 0 {
            return bad("surrogate needs at least one DER".into());
        }
        if self.d_q_v_per_var.len() != m || self.coupling.len() != m {
            return bad("surrogate parameter vectors disagree on DER count".into());
        }
        if self.tau_v_s.iter().any(|t| !(*t > 0.0)) || !(self.omega_c_rad_s > 0.0) {
            return bad("surrogate time constants must be positive".into());
        }
        if self.d_q_v_per_var.iter().any(|d| !(*d >= 0.0)) {
            return bad("droop gains must be non-negative".into());
        }
        for (i, row) in self.coupling.iter().enumerate() {
            if row.len() != m {
                return bad(format!("coupling row {i} has wrong length"));
            }
            for (j, &k) in row.iter().enumerate() {
                if k < 0.0 || (k - self.coupling[j][i]).abs() > 1e-12 * k.abs().max(1.0) {
                    return bad("coupling must be symmetric and non-negative".into());
                }
            }
        }
        for (l, load) in self.loads.iter().enumerate() {
            if load.share.len() != m || load.share.iter().any(|s| *s < 0.0) {
                return bad(format!("load {l} share vector invalid"));
            }
            if !(load.conductance_s >= 0.0 && load.susceptance_s >= 0.0) {
                return bad(format!("load {l} admittance must be non-negative"));
            }
        }
        if !self.loads.is_empty() && self.event_load >= self.loads.len() {
            return bad(format!("event_load {} is not a load", self.event_load));
        }
        Ok(())
    }

    /// Instantaneous `(p, q)` drawn from DER `i` at voltages `v`.
    pub fn demand(&self, i: usize, v: &[f64]) -> (f64, f64) {
        self.demand_with(i, |j| v[j])
    }

    fn demand_with(&self, i: usize, v: impl Fn(usize) -> f64) -> (f64, f64) {
        let vi = v(i);
        let (mut p, mut q) = (0.0, 0.0);
        for load in &self.loads {
            p += 1.5 * load.share[i] * load.conductance_s * vi * vi;
            q += 1.5 * load.share[i] * load.susceptance_s * vi * vi;
        }
        for (j, &k) in self.coupling[i].iter().enumerate() {
            q += k * vi * (vi - v(j));
        }
        (p, q)
    }
}

#[derive(Debug, Clone)]
pub struct Surrogate {
    params: SurrogateParams,
    e_star: Vec<f64>,
}

impl Surrogate {
    pub fn new(params: SurrogateParams) -> Result<Self, PlantError> {
        params.validate()?;
        Ok(Self {
            e_star: vec![0.0; params.channels()],
            params,
        })
    }

    pub fn params(&self) -> &SurrogateParams {
        &self.params
    }

    /// Steady state under constant `e_star`, found by damped fixed-point
    /// iteration on `v = E* − D_Q q(v)`.
    pub fn equilibrium(&self, e_star: &[f64]) -> Vec<f64> {
        let m = self.params.channels();
        let mut v = e_star.to_vec();
        for _ in 0..5000 {
            let next: Vec<f64> = (0..m)
                .map(|i| {
                    let target = e_star[i] - self.params.d_q_v_per_var[i] * self.params.demand(i, &v).1;
                    v[i] + 0.25 * (target - v[i])
                })
                .collect();
            let delta = next
                .iter()
                .zip(&v)
                .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
            v = next;
            if delta < 1e-13 {
                break;
            }
        }
        let mut x = vec![0.0; 3 * m];
        for i in 0..m {
            let (p, q) = self.params.demand(i, &v);
            x[3 * i] = v[i];
            x[3 * i + 1] = p;
            x[3 * i + 2] = q;
        }
        x
    }
}

impl OdeSystem for Surrogate {
    fn dim(&self) -> usize {
        3 * self.params.channels()
    }

    fn derivative(&self, x: &[f64], dx: &mut [f64]) {
        let m = self.params.channels();
        for i in 0..m {
            let (p, q) = self.params.demand_with(i, |j| x[3 * j]);
            let wc = self.params.omega_c_rad_s;
            dx[3 * i] = (-x[3 * i] + self.e_star[i] - self.params.d_q_v_per_var[i] * x[3 * i + 2])
                / self.params.tau_v_s[i];
            dx[3 * i + 1] = wc * (p - x[3 * i + 1]);
            dx[3 * i + 2] = wc * (q - x[3 * i + 2]);
        }
    }
}

impl Dynamics for Surrogate {
    fn channels(&self) -> usize {
        self.params.channels()
    }

    fn set_input(&mut self, e_star: &[f64]) {
        self.e_star.copy_from_slice(e_star);
    }

    fn output(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.channels(), (0..self.channels()).map(|i| x[3 * i].abs()))
    }

    fn powers(&self, x: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let m = self.channels();
        (
            DVector::from_iterator(m, (0..m).map(|i| x[3 * i + 1])),
            DVector::from_iterator(m, (0..m).map(|i| x[3 * i + 2])),
        )
    }

    fn scale_event_load(&mut self, factor: f64) -> Result<(), PlantError> {
        let load = self
            .params
            .loads
            .get_mut(self.params.event_load)
            .ok_or_else(|| PlantError::InvalidParameter("surrogate has no loads".into()))?;
        // Scaling the impedance by `factor` scales the admittance by its inverse.
        load.conductance_s /= factor;
        load.susceptance_s /= factor;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_surrogate() -> Surrogate {
        Surrogate::new(SurrogateParams::from_microgrid(
            &MicrogridParams::four_der(),
            5e-3,
        ))
        .unwrap()
    }

    #[test]
    fn shares_sum_to_one() {
        let s = default_surrogate();
        for load in &s.params().loads {
            let total: f64 = load.share.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn equilibrium_has_zero_derivative() {
        let mut s = default_surrogate();
        let e = [300.0; 4];
        s.set_input(&e);
        let x = s.equilibrium(&e);
        let mut dx = vec![0.0; x.len()];
        s.derivative(&x, &mut dx);
        assert!(dx.iter().all(|d| d.abs() < 1e-6), "{dx:?}");
        // Droop leaves every DER below its setpoint.
        for i in 0..4 {
            assert!(x[3 * i] < 300.0);
        }
    }

    #[test]
    fn asymmetric_coupling_rejected() {
        let mut p = SurrogateParams::from_microgrid(&MicrogridParams::four_der(), 5e-3);
        p.coupling[0][1] += 1.0;
        assert!(Surrogate::new(p).is_err());
    }
}
