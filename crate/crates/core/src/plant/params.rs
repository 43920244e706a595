//! Parameter sets for the four-DER islanded test microgrid.

use serde::{Deserialize, Serialize};

use super::PlantError;

/// Per-DER filter, droop and inner-loop parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerParams {
    pub l_f_h: f64,
    pub r_f_ohm: f64,
    pub c_f_f: f64,
    pub l_c_h: f64,
    pub r_c_ohm: f64,
    /// Virtual resistance acting on the filter-capacitor current.
    pub r_d_ohm: f64,
    pub d_q_v_per_var: f64,
    /// Frequency droop gain.
    pub m_p_rad_per_s_per_w: f64,
    pub k_pv: f64,
    pub k_iv: f64,
    pub k_pc: f64,
    pub k_ic: f64,
    /// Power-measurement low-pass cutoff.
    pub omega_c_rad_s: f64,
    /// Output-current feed-forward gain in the voltage loop.
    pub current_feedforward: f64,
    pub pll_filter_rad_s: f64,
    pub pll_kp: f64,
    pub pll_ki: f64,
}

impl DerParams {
    /// Shared filter values with per-unit droop and inner-loop gains.
    pub fn tabulated(d_q: f64, m_p: f64, k_pv: f64, k_iv: f64, k_pc: f64, k_ic: f64) -> Self {
        Self {
            l_f_h: 3.9e-3,
            r_f_ohm: 0.50,
            c_f_f: 16e-6,
            l_c_h: 0.5e-3,
            r_c_ohm: 0.09,
            r_d_ohm: 2.05,
            d_q_v_per_var: d_q,
            m_p_rad_per_s_per_w: m_p,
            k_pv,
            k_iv,
            k_pc,
            k_ic,
            omega_c_rad_s: 31.41,
            current_feedforward: 0.75,
            pll_filter_rad_s: 100.0,
            pll_kp: 0.02,
            pll_ki: 0.5,
        }
    }

    pub fn validate(&self, index: usize) -> Result<(), PlantError> {
        let positive = [
            ("l_f_h", self.l_f_h),
            ("r_f_ohm", self.r_f_ohm),
            ("c_f_f", self.c_f_f),
            ("l_c_h", self.l_c_h),
            ("r_c_ohm", self.r_c_ohm),
            ("r_d_ohm", self.r_d_ohm),
            ("omega_c_rad_s", self.omega_c_rad_s),
            ("pll_filter_rad_s", self.pll_filter_rad_s),
        ];
        let non_negative = [
            ("d_q_v_per_var", self.d_q_v_per_var),
            ("m_p_rad_per_s_per_w", self.m_p_rad_per_s_per_w),
            ("k_pv", self.k_pv),
            ("k_iv", self.k_iv),
            ("k_pc", self.k_pc),
            ("k_ic", self.k_ic),
            ("current_feedforward", self.current_feedforward),
            ("pll_kp", self.pll_kp),
            ("pll_ki", self.pll_ki),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PlantError::InvalidParameter(format!(
                    "der[{index}].{name} must be positive, got {v}"
                )));
            }
        }
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PlantError::InvalidParameter(format!(
                    "der[{index}].{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r_ohm: f64,
    pub l_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub bus: usize,
    pub r_ohm: f64,
    pub l_h: f64,
}

impl Load {
    /// `(G, B)` of the admittance `1/(R + jωL)`.
    pub fn admittance(&self, omega: f64) -> (f64, f64) {
        let x = omega * self.l_h;
        let z2 = self.r_ohm * self.r_ohm + x * x;
        (self.r_ohm / z2, x / z2)
    }
}

/// Bus–branch description of the network. Bus indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkParams {
    pub buses: usize,
    /// Bus each DER's coupling branch connects to.
    pub der_bus: Vec<usize>,
    pub lines: Vec<Line>,
    pub loads: Vec<Load>,
}

impl NetworkParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |msg: String| Err(PlantError::InvalidParameter(msg));
        if self.buses == 0 {
            return bad("network needs at least one bus".into());
        }
        for (i, &b) in self.der_bus.iter().enumerate() {
            if b >= self.buses {
                return bad(format!("der_bus[{i}] = {b} is not a bus"));
            }
        }
        for (i, l) in self.lines.iter().enumerate() {
            if l.from_bus >= self.buses || l.to_bus >= self.buses || l.from_bus == l.to_bus {
                return bad(format!("line[{i}] references invalid buses"));
            }
            if !(l.r_ohm > 0.0 && l.l_h > 0.0) {
                return bad(format!("line[{i}] impedance must be positive"));
            }
        }
        for (i, l) in self.loads.iter().enumerate() {
            if l.bus >= self.buses {
                return bad(format!("load[{i}] bus {} is not a bus", l.bus));
            }
            if !(l.r_ohm > 0.0 && l.l_h > 0.0) {
                return bad(format!("load[{i}] impedance must be positive"));
            }
        }
        // Connectivity by union-find over the lines.
        let mut parent: Vec<usize> = (0..self.buses).collect();
        fn root(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for l in &self.lines {
            let (a, b) = (root(&mut parent, l.from_bus), root(&mut parent, l.to_bus));
            parent[a] = b;
        }
        let r0 = root(&mut parent, 0);
        if (1..self.buses).any(|b| root(&mut parent, b) != r0) {
            return bad("network topology is not connected".into());
        }
        let mut fed = vec![false; self.buses];
        for &b in &self.der_bus {
            fed[b] = true;
        }
        if fed.iter().any(|f| !f) {
            // Every bus carries a DER so the algebraic bus-voltage solve stays
            // well posed.
            return bad("every bus must host a DER coupling branch".into());
        }
        Ok(())
    }

    /// Number of hops between two buses along the lines.
    pub fn hops(&self, from: usize, to: usize) -> Option<usize> {
        let mut dist = vec![usize::MAX; self.buses];
        let mut queue = std::collections::VecDeque::new();
        dist[from] = 0;
        queue.push_back(from);
        while let Some(b) = queue.pop_front() {
            for l in &self.lines {
                let next = if l.from_bus == b {
                    l.to_bus
                } else if l.to_bus == b {
                    l.from_bus
                } else {
                    continue;
                };
                if dist[next] == usize::MAX {
                    dist[next] = dist[b] + 1;
                    queue.push_back(next);
                }
            }
        }
        (dist[to] != usize::MAX).then_some(dist[to])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrogridParams {
    pub omega_nominal_rad_s: f64,
    pub ders: Vec<DerParams>,
    pub network: NetworkParams,
    /// Index of the load scaled by load-step events.
    pub event_load: usize,
}

impl MicrogridParams {
    /// The four-DER, two-load ladder test system.
    pub fn four_der() -> Self {
        let ders = vec![
            DerParams::tabulated(1.0e-3, 1.88e-5, 0.5, 52.0, 4.5, 450.0),
            DerParams::tabulated(1.0e-3, 1.88e-5, 0.5, 52.0, 4.5, 450.0),
            DerParams::tabulated(1.5e-3, 2.5e-5, 0.25, 34.0, 3.55, 353.0),
            DerParams::tabulated(1.5e-3, 2.5e-5, 0.25, 34.0, 3.55, 353.0),
        ];
        let network = NetworkParams {
            buses: 4,
            der_bus: vec![0, 1, 2, 3],
            lines: vec![
                Line {
                    from_bus: 0,
                    to_bus: 1,
                    r_ohm: 0.15,
                    l_h: 0.42e-3,
                },
                Line {
                    from_bus: 1,
                    to_bus: 2,
                    r_ohm: 0.35,
                    l_h: 0.33e-3,
                },
                Line {
                    from_bus: 2,
                    to_bus: 3,
                    r_ohm: 0.23,
                    l_h: 0.55e-3,
                },
            ],
            loads: vec![
                Load {
                    bus: 0,
                    r_ohm: 20.0,
                    l_h: 15e-3,
                },
                Load {
                    bus: 2,
                    r_ohm: 10.0,
                    l_h: 25e-3,
                },
            ],
        };
        Self {
            omega_nominal_rad_s: 2.0 * std::f64::consts::PI * 50.0,
            ders,
            network,
            event_load: 1,
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.omega_nominal_rad_s > 0.0) {
            return Err(PlantError::InvalidParameter(
                "omega_nominal_rad_s must be positive".into(),
            ));
        }
        if self.ders.is_empty() || self.ders.len() != self.network.der_bus.len() {
            return Err(PlantError::InvalidParameter(format!(
                "{} DER parameter blocks but {} DER bus assignments",
                self.ders.len(),
                self.network.der_bus.len()
            )));
        }
        for (i, d) in self.ders.iter().enumerate() {
            d.validate(i)?;
        }
        self.network.validate()?;
        if !self.network.loads.is_empty() && self.event_load >= self.network.loads.len() {
            return Err(PlantError::InvalidParameter(format!(
                "event_load {} is not a load",
                self.event_load
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_system_is_valid() {
        MicrogridParams::four_der().validate().unwrap();
    }

    #[test]
    fn disconnected_topology_rejected() {
        let mut p = MicrogridParams::four_der();
        p.network.lines.remove(1);
        assert!(p.validate().is_err());
    }

    #[test]
    fn dangling_branch_rejected() {
        let mut p = MicrogridParams::four_der();
        p.network.loads[0].bus = 7;
        assert!(p.validate().is_err());
    }

    #[test]
    fn negative_inductance_rejected() {
        let mut p = MicrogridParams::four_der();
        p.ders[2].l_f_h = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn hop_distances() {
        let n = MicrogridParams::four_der().network;
        assert_eq!(n.hops(0, 3), Some(3));
        assert_eq!(n.hops(2, 2), Some(0));
    }
}
