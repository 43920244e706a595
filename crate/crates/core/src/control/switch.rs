use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Which adaptive controller drives the plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Active {
    Linear,
    Nonlinear,
}

impl Active {
    pub fn label(self) -> &'static str {
        match self {
            Active::Linear => "L",
            Active::Nonlinear => "N",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "L" => Some(Active::Linear),
            "N" => Some(Active::Nonlinear),
            _ => None,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Active {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Performance indices
/// `ξ_j(k) = Σ η_j(‖e_j‖² − 4ρ²)/(2(1 + ‖X(k−d)‖²)) + μ Σ_{last M} (1 − η_j)‖e_j‖²`
/// with `η_j = 1` iff `‖e_j‖ > 2ρ`. The linear controller wins ties.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchState {
    rho: f64,
    mu: f64,
    window_len: usize,
    cum: [f64; 2],
    window: [VecDeque<f64>; 2],
    xi: [f64; 2],
    active: Active,
}

impl SwitchState {
    pub fn new(rho: f64, mu: f64, window_len: usize) -> Self {
        assert!(
            mu >= 0.0 && window_len > 0,
            "μ must be non-negative and M positive"
        );
        Self {
            rho,
            mu,
            window_len,
            cum: [0.0; 2],
            window: [VecDeque::new(), VecDeque::new()],
            xi: [0.0; 2],
            active: Active::Linear,
        }
    }

    pub fn active(&self) -> Active {
        self.active
    }

    pub fn xi(&self, j: Active) -> f64 {
        self.xi[j.index()]
    }

    pub fn cumulative(&self, j: Active) -> f64 {
        self.cum[j.index()]
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Feeds `‖e_L(k)‖`, `‖e_N(k)‖` and `‖X(k−d)‖²`; returns the selection.
    pub fn update(&mut self, e_l_norm: f64, e_n_norm: f64, x_norm_sq: f64) -> Active {
        for (j, e) in [(Active::Linear, e_l_norm), (Active::Nonlinear, e_n_norm)] {
            let i = j.index();
            let e2 = e * e;
            let eta = e > 2.0 * self.rho;
            if eta {
                self.cum[i] += (e2 - 4.0 * self.rho * self.rho) / (2.0 * (1.0 + x_norm_sq));
                self.window[i].push_back(0.0);
            } else {
                self.window[i].push_back(e2);
            }
            if self.window[i].len() > self.window_len {
                self.window[i].pop_front();
            }
            self.xi[i] = self.cum[i] + self.mu * self.window[i].iter().sum::<f64>();
        }
        self.active = if self.xi[0] <= self.xi[1] {
            Active::Linear
        } else {
            Active::Nonlinear
        };
        self.active
    }
}

/// Replays logged `(‖e_L‖, ‖e_N‖, ‖X(k−d)‖²)` rows into a switch sequence.
pub fn replay(rho: f64, mu: f64, window_len: usize, rows: &[(f64, f64, f64)]) -> Vec<Active> {
    let mut sw = SwitchState::new(rho, mu, window_len);
    rows.iter().map(|&(l, n, x)| sw.update(l, n, x)).collect()
}
