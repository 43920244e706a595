//! Electromagnetic model of droop-controlled voltage-source inverters on an
//! inductive network, in per-DER rotating `dq` frames.
//!
//! Each DER carries 15 states: filtered powers `P, Q`, the PLL filter and
//! integrator `v_oq,f, Φ_PLL`, the frame angle `δ`, voltage-loop integrators
//! `Φ_d, Φ_q`, current-loop integrators `γ_d, γ_q`, and the LC(L) filter
//! states `i_l, i_o, v_o` (d and q). Line and load branch currents follow in
//! the common frame of DER 0. Bus voltages are algebraic: every bus is joined
//! only by inductive branches, so Kirchhoff's current law fixes them from the
//! branch states at each evaluation.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};

use super::ode::OdeSystem;
use super::params::MicrogridParams;
use super::{Dynamics, PlantError};

pub const DER_STATES: usize = 15;

/// Offsets of the per-DER states inside the flat state vector.
pub mod idx {
    pub const P: usize = 0;
    pub const Q: usize = 1;
    pub const VOQ_F: usize = 2;
    pub const PHI_PLL: usize = 3;
    pub const DELTA: usize = 4;
    pub const PHI_D: usize = 5;
    pub const PHI_Q: usize = 6;
    pub const GAMMA_D: usize = 7;
    pub const GAMMA_Q: usize = 8;
    pub const IL_D: usize = 9;
    pub const IL_Q: usize = 10;
    pub const IO_D: usize = 11;
    pub const IO_Q: usize = 12;
    pub const VO_D: usize = 13;
    pub const VO_Q: usize = 14;
}

/// Named view of one DER's states.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DerState {
    pub p: f64,
    pub q: f64,
    pub voq_f: f64,
    pub phi_pll: f64,
    pub delta: f64,
    pub phi_d: f64,
    pub phi_q: f64,
    pub gamma_d: f64,
    pub gamma_q: f64,
    pub il_d: f64,
    pub il_q: f64,
    pub io_d: f64,
    pub io_q: f64,
    pub vo_d: f64,
    pub vo_q: f64,
}

impl DerState {
    fn from_slice(s: &[f64]) -> Self {
        Self {
            p: s[idx::P],
            q: s[idx::Q],
            voq_f: s[idx::VOQ_F],
            phi_pll: s[idx::PHI_PLL],
            delta: s[idx::DELTA],
            phi_d: s[idx::PHI_D],
            phi_q: s[idx::PHI_Q],
            gamma_d: s[idx::GAMMA_D],
            gamma_q: s[idx::GAMMA_Q],
            il_d: s[idx::IL_D],
            il_q: s[idx::IL_Q],
            io_d: s[idx::IO_D],
            io_q: s[idx::IO_Q],
            vo_d: s[idx::VO_D],
            vo_q: s[idx::VO_Q],
        }
    }

    fn write(&self, s: &mut [f64]) {
        s[idx::P] = self.p;
        s[idx::Q] = self.q;
        s[idx::VOQ_F] = self.voq_f;
        s[idx::PHI_PLL] = self.phi_pll;
        s[idx::DELTA] = self.delta;
        s[idx::PHI_D] = self.phi_d;
        s[idx::PHI_Q] = self.phi_q;
        s[idx::GAMMA_D] = self.gamma_d;
        s[idx::GAMMA_Q] = self.gamma_q;
        s[idx::IL_D] = self.il_d;
        s[idx::IL_Q] = self.il_q;
        s[idx::IO_D] = self.io_d;
        s[idx::IO_Q] = self.io_q;
        s[idx::VO_D] = self.vo_d;
        s[idx::VO_Q] = self.vo_q;
    }

    /// Output voltage magnitude.
    pub fn v_o(&self) -> f64 {
        self.vo_d.hypot(self.vo_q)
    }
}

/// Structured form of the flat microgrid state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MicrogridState {
    pub ders: Vec<DerState>,
    /// `(D, Q)` currents in the common frame, in line order.
    pub lines: Vec<[f64; 2]>,
    pub loads: Vec<[f64; 2]>,
}

impl MicrogridState {
    pub fn zeros(ders: usize, lines: usize, loads: usize) -> Self {
        Self {
            ders: vec![DerState::default(); ders],
            lines: vec![[0.0; 2]; lines],
            loads: vec![[0.0; 2]; loads],
        }
    }

    pub fn len(ders: usize, lines: usize, loads: usize) -> usize {
        DER_STATES * ders + 2 * (lines + loads)
    }

    pub fn from_flat(x: &[f64], ders: usize, lines: usize, loads: usize) -> Self {
        assert_eq!(x.len(), Self::len(ders, lines, loads));
        let line_off = DER_STATES * ders;
        let load_off = line_off + 2 * lines;
        Self {
            ders: (0..ders)
                .map(|i| DerState::from_slice(&x[i * DER_STATES..(i + 1) * DER_STATES]))
                .collect(),
            lines: (0..lines)
                .map(|l| [x[line_off + 2 * l], x[line_off + 2 * l + 1]])
                .collect(),
            loads: (0..loads)
                .map(|l| [x[load_off + 2 * l], x[load_off + 2 * l + 1]])
                .collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut x = vec![0.0; Self::len(self.ders.len(), self.lines.len(), self.loads.len())];
        for (i, d) in self.ders.iter().enumerate() {
            d.write(&mut x[i * DER_STATES..(i + 1) * DER_STATES]);
        }
        let line_off = DER_STATES * self.ders.len();
        for (l, c) in self.lines.iter().enumerate() {
            x[line_off + 2 * l..line_off + 2 * l + 2].copy_from_slice(c);
        }
        let load_off = line_off + 2 * self.lines.len();
        for (l, c) in self.loads.iter().enumerate() {
            x[load_off + 2 * l..load_off + 2 * l + 2].copy_from_slice(c);
        }
        x
    }

    pub fn output(&self) -> DVector<f64> {
        DVector::from_iterator(self.ders.len(), self.ders.iter().map(DerState::v_o))
    }
}

#[derive(Debug, Default, Clone)]
struct Scratch {
    cos: Vec<f64>,
    sin: Vec<f64>,
    rhs_d: Vec<f64>,
    rhs_q: Vec<f64>,
    vb_d: Vec<f64>,
    vb_q: Vec<f64>,
}

/// Full microgrid dynamics with the SVC setpoints `E*` held as input.
#[derive(Debug, Clone)]
pub struct Microgrid {
    params: MicrogridParams,
    e_star: Vec<f64>,
    /// Inverse of the bus nodal matrix built from branch inductances.
    bus_inverse: DMatrix<f64>,
    scratch: RefCell<Scratch>,
}

impl Microgrid {
    pub fn new(params: MicrogridParams) -> Result<Self, PlantError> {
        params.validate()?;
        let bus_inverse = bus_inverse(&params)?;
        let m = params.ders.len();
        let buses = params.network.buses;
        let scratch = Scratch {
            cos: vec![0.0; m],
            sin: vec![0.0; m],
            rhs_d: vec![0.0; buses],
            rhs_q: vec![0.0; buses],
            vb_d: vec![0.0; buses],
            vb_q: vec![0.0; buses],
        };
        Ok(Self {
            e_star: vec![0.0; m],
            params,
            bus_inverse,
            scratch: RefCell::new(scratch),
        })
    }

    pub fn params(&self) -> &MicrogridParams {
        &self.params
    }

    pub fn state_len(&self) -> usize {
        MicrogridState::len(
            self.params.ders.len(),
            self.params.network.lines.len(),
            self.params.network.loads.len(),
        )
    }

    pub fn structured(&self, x: &[f64]) -> MicrogridState {
        MicrogridState::from_flat(
            x,
            self.params.ders.len(),
            self.params.network.lines.len(),
            self.params.network.loads.len(),
        )
    }

    /// Generation, load consumption and series losses (W) from the
    /// instantaneous branch currents.
    pub fn power_balance(&self, x: &[f64]) -> PowerBalance {
        let s = self.structured(x);
        let mut generated = 0.0;
        let mut losses = 0.0;
        for (d, p) in s.ders.iter().zip(&self.params.ders) {
            generated += 1.5 * (d.vo_d * d.io_d + d.vo_q * d.io_q);
            losses += 1.5 * p.r_c_ohm * (d.io_d * d.io_d + d.io_q * d.io_q);
        }
        for (c, l) in s.lines.iter().zip(&self.params.network.lines) {
            losses += 1.5 * l.r_ohm * (c[0] * c[0] + c[1] * c[1]);
        }
        let load = s
            .loads
            .iter()
            .zip(&self.params.network.loads)
            .map(|(c, l)| 1.5 * l.r_ohm * (c[0] * c[0] + c[1] * c[1]))
            .sum();
        PowerBalance {
            generated,
            load,
            losses,
        }
    }

    /// Instantaneous bus voltages `(D, Q)` in the common frame.
    pub fn bus_voltages(&self, x: &[f64]) -> Vec<[f64; 2]> {
        let mut dx = vec![0.0; x.len()];
        self.derivative(x, &mut dx);
        let s = self.scratch.borrow();
        s.vb_d.iter().zip(&s.vb_q).map(|(&d, &q)| [d, q]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBalance {
    pub generated: f64,
    pub load: f64,
    pub losses: f64,
}

impl PowerBalance {
    /// `(generated − load − losses) / generated`.
    pub fn relative_mismatch(&self) -> f64 {
        (self.generated - self.load - self.losses) / self.generated.abs().max(f64::MIN_POSITIVE)
    }
}

fn bus_inverse(params: &MicrogridParams) -> Result<DMatrix<f64>, PlantError> {
    let net = &params.network;
    let mut m = DMatrix::zeros(net.buses, net.buses);
    for (i, &b) in net.der_bus.iter().enumerate() {
        m[(b, b)] += 1.0 / params.ders[i].l_c_h;
    }
    for l in &net.loads {
        m[(l.bus, l.bus)] += 1.0 / l.l_h;
    }
    for l in &net.lines {
        let y = 1.0 / l.l_h;
        m[(l.from_bus, l.from_bus)] += y;
        m[(l.to_bus, l.to_bus)] += y;
        m[(l.from_bus, l.to_bus)] -= y;
        m[(l.to_bus, l.from_bus)] -= y;
    }
    m.try_inverse()
        .ok_or_else(|| PlantError::InvalidParameter("singular bus nodal matrix".into()))
}

impl OdeSystem for Microgrid {
    fn dim(&self) -> usize {
        self.state_len()
    }

    fn derivative(&self, x: &[f64], dx: &mut [f64]) {
        let p = &self.params;
        let net = &p.network;
        let m = p.ders.len();
        let w_n = p.omega_nominal_rad_s;
        let line_off = DER_STATES * m;
        let load_off = line_off + 2 * net.lines.len();
        let mut guard = self.scratch.borrow_mut();
        let s = &mut *guard;

        let frame_omega = |i: usize| {
            let b = i * DER_STATES;
            let d = &p.ders[i];
            w_n - d.m_p_rad_per_s_per_w * x[b + idx::P]
                + d.pll_kp * x[b + idx::VOQ_F]
                + d.pll_ki * x[b + idx::PHI_PLL]
        };
        let w_com = frame_omega(0);

        s.rhs_d.iter_mut().for_each(|v| *v = 0.0);
        s.rhs_q.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            let b = i * DER_STATES;
            let d = &p.ders[i];
            let (sn, cs) = x[b + idx::DELTA].sin_cos();
            s.sin[i] = sn;
            s.cos[i] = cs;
            let (iod, ioq) = (x[b + idx::IO_D], x[b + idx::IO_Q]);
            let (vod, voq) = (x[b + idx::VO_D], x[b + idx::VO_Q]);
            let io_cd = cs * iod - sn * ioq;
            let io_cq = sn * iod + cs * ioq;
            let vo_cd = cs * vod - sn * voq;
            let vo_cq = sn * vod + cs * voq;
            let bus = net.der_bus[i];
            s.rhs_d[bus] += (vo_cd - d.r_c_ohm * io_cd) / d.l_c_h;
            s.rhs_q[bus] += (vo_cq - d.r_c_ohm * io_cq) / d.l_c_h;
        }
        for (l, load) in net.loads.iter().enumerate() {
            let (id, iq) = (x[load_off + 2 * l], x[load_off + 2 * l + 1]);
            s.rhs_d[load.bus] += load.r_ohm * id / load.l_h;
            s.rhs_q[load.bus] += load.r_ohm * iq / load.l_h;
        }
        for (l, line) in net.lines.iter().enumerate() {
            let (id, iq) = (x[line_off + 2 * l], x[line_off + 2 * l + 1]);
            let kd = line.r_ohm * id / line.l_h;
            let kq = line.r_ohm * iq / line.l_h;
            s.rhs_d[line.from_bus] += kd;
            s.rhs_q[line.from_bus] += kq;
            s.rhs_d[line.to_bus] -= kd;
            s.rhs_q[line.to_bus] -= kq;
        }
        for r in 0..net.buses {
            let (mut vd, mut vq) = (0.0, 0.0);
            for c in 0..net.buses {
                let g = self.bus_inverse[(r, c)];
                vd += g * s.rhs_d[c];
                vq += g * s.rhs_q[c];
            }
            s.vb_d[r] = vd;
            s.vb_q[r] = vq;
        }

        for (l, line) in net.lines.iter().enumerate() {
            let o = line_off + 2 * l;
            let (id, iq) = (x[o], x[o + 1]);
            let (a, b) = (line.from_bus, line.to_bus);
            dx[o] = (s.vb_d[a] - s.vb_d[b] - line.r_ohm * id) / line.l_h + w_com * iq;
            dx[o + 1] = (s.vb_q[a] - s.vb_q[b] - line.r_ohm * iq) / line.l_h - w_com * id;
        }
        for (l, load) in net.loads.iter().enumerate() {
            let o = load_off + 2 * l;
            let (id, iq) = (x[o], x[o + 1]);
            dx[o] = (s.vb_d[load.bus] - load.r_ohm * id) / load.l_h + w_com * iq;
            dx[o + 1] = (s.vb_q[load.bus] - load.r_ohm * iq) / load.l_h - w_com * id;
        }

        for i in 0..m {
            let b = i * DER_STATES;
            let d = &p.ders[i];
            let xs = &x[b..b + DER_STATES];
            let ds = &mut dx[b..b + DER_STATES];
            let w = frame_omega(i);
            let (cs, sn) = (s.cos[i], s.sin[i]);
            let bus = net.der_bus[i];
            let vbd = cs * s.vb_d[bus] + sn * s.vb_q[bus];
            let vbq = -sn * s.vb_d[bus] + cs * s.vb_q[bus];

            let (vod, voq) = (xs[idx::VO_D], xs[idx::VO_Q]);
            let (iod, ioq) = (xs[idx::IO_D], xs[idx::IO_Q]);
            let (ild, ilq) = (xs[idx::IL_D], xs[idx::IL_Q]);

            let p_inst = 1.5 * (vod * iod + voq * ioq);
            let q_inst = 1.5 * (voq * iod - vod * ioq);
            ds[idx::P] = d.omega_c_rad_s * (p_inst - xs[idx::P]);
            ds[idx::Q] = d.omega_c_rad_s * (q_inst - xs[idx::Q]);
            ds[idx::VOQ_F] = d.pll_filter_rad_s * (voq - xs[idx::VOQ_F]);
            ds[idx::PHI_PLL] = xs[idx::VOQ_F];
            ds[idx::DELTA] = w - w_com;

            // Reactive-power droop sets the d-axis voltage reference.
            let vod_ref = self.e_star[i] - d.d_q_v_per_var * xs[idx::Q];
            let voq_ref = 0.0;
            let ev_d = vod_ref - vod;
            let ev_q = voq_ref - voq;
            ds[idx::PHI_D] = ev_d;
            ds[idx::PHI_Q] = ev_q;
            let ild_ref =
                d.current_feedforward * iod - w_n * d.c_f_f * voq + d.k_pv * ev_d + d.k_iv * xs[idx::PHI_D];
            let ilq_ref =
                d.current_feedforward * ioq + w_n * d.c_f_f * vod + d.k_pv * ev_q + d.k_iv * xs[idx::PHI_Q];
            let ei_d = ild_ref - ild;
            let ei_q = ilq_ref - ilq;
            ds[idx::GAMMA_D] = ei_d;
            ds[idx::GAMMA_Q] = ei_q;
            let vid =
                -w_n * d.l_f_h * ilq + d.k_pc * ei_d + d.k_ic * xs[idx::GAMMA_D] - d.r_d_ohm * (ild - iod);
            let viq =
                w_n * d.l_f_h * ild + d.k_pc * ei_q + d.k_ic * xs[idx::GAMMA_Q] - d.r_d_ohm * (ilq - ioq);

            ds[idx::IL_D] = (vid - vod - d.r_f_ohm * ild) / d.l_f_h + w * ilq;
            ds[idx::IL_Q] = (viq - voq - d.r_f_ohm * ilq) / d.l_f_h - w * ild;
            ds[idx::VO_D] = (ild - iod) / d.c_f_f + w * voq;
            ds[idx::VO_Q] = (ilq - ioq) / d.c_f_f - w * vod;
            ds[idx::IO_D] = (vod - vbd - d.r_c_ohm * iod) / d.l_c_h + w * ioq;
            ds[idx::IO_Q] = (voq - vbq - d.r_c_ohm * ioq) / d.l_c_h - w * iod;
        }
    }
}

impl Dynamics for Microgrid {
    fn channels(&self) -> usize {
        self.params.ders.len()
    }

    fn set_input(&mut self, e_star: &[f64]) {
        self.e_star.copy_from_slice(e_star);
    }

    fn output(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.channels(),
            (0..self.channels()).map(|i| {
                let b = i * DER_STATES;
                x[b + idx::VO_D].hypot(x[b + idx::VO_Q])
            }),
        )
    }

    fn powers(&self, x: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let m = self.channels();
        (
            DVector::from_iterator(m, (0..m).map(|i| x[i * DER_STATES + idx::P])),
            DVector::from_iterator(m, (0..m).map(|i| x[i * DER_STATES + idx::Q])),
        )
    }

    fn scale_event_load(&mut self, factor: f64) -> Result<(), PlantError> {
        let k = self.params.event_load;
        let load = self
            .params
            .network
            .loads
            .get_mut(k)
            .ok_or_else(|| PlantError::InvalidParameter("network has no loads".into()))?;
        load.r_ohm *= factor;
        load.l_h *= factor;
        self.bus_inverse = bus_inverse(&self.params)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_round_trip() {
        let x: Vec<f64> = (0..MicrogridState::len(4, 3, 2))
            .map(|i| i as f64 * 0.5)
            .collect();
        let s = MicrogridState::from_flat(&x, 4, 3, 2);
        assert_eq!(s.to_flat(), x);
        assert_eq!(x.len(), 70);
        assert_eq!(s.ders[1].vo_q, x[DER_STATES + idx::VO_Q]);
    }

    #[test]
    fn origin_is_equilibrium() {
        let g = Microgrid::new(MicrogridParams::four_der()).unwrap();
        let x = vec![0.0; g.state_len()];
        let mut dx = vec![1.0; g.state_len()];
        g.derivative(&x, &mut dx);
        assert!(dx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn output_is_magnitude() {
        let mut s = MicrogridState::zeros(1, 0, 0);
        s.ders[0].vo_d = 3.0;
        s.ders[0].vo_q = 4.0;
        assert_eq!(s.output()[0], 5.0);
    }
}
