//! Square matrix polynomials in the backward-shift operator `z⁻¹`.
//!
//! A [`PolyMatrix`] `C(z⁻¹) = C₀ + C₁z⁻¹ + … + C_deg z⁻ᵈᵉᵍ` acts on a sampled
//! vector signal as `C(z⁻¹)v(k) = Σ Cᵢ v(k−i)`. The module also solves the
//! design identity `F = L·A + z⁻ᵈ·K` used by the known-model controller.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Magnitude margin used when classifying companion eigenvalues against the
/// unit circle.
pub const STABILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("history underrun: need {needed} samples ending at k, have {available}")]
    HistoryUnderrun { needed: usize, available: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("polynomial must have at least one coefficient")]
    Empty,
    #[error("coefficient {index} is {rows}x{cols}, expected a square {dim}x{dim} matrix")]
    BadCoefficient {
        index: usize,
        rows: usize,
        cols: usize,
        dim: usize,
    },
    #[error("normalization required: leading coefficient is singular")]
    NormalizationRequired,
    #[error("relative degree {d} outside 1..={n}")]
    InvalidDelay { d: usize, n: usize },
    #[error("design polynomial degree {deg_f} exceeds plant order {n}")]
    DesignDegreeTooHigh { deg_f: usize, n: usize },
}

/// `C(z⁻¹) = Σ Cᵢ z⁻ⁱ` with every `Cᵢ` an `m×m` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrix {
    coeffs: Vec<DMatrix<f64>>,
}

impl PolyMatrix {
    pub fn new(coeffs: Vec<DMatrix<f64>>) -> Result<Self, PolyError> {
        let first = coeffs.first().ok_or(PolyError::Empty)?;
        let dim = first.nrows();
        if dim == 0 {
            return Err(PolyError::Empty);
        }
        for (index, c) in coeffs.iter().enumerate() {
            if c.nrows() != dim || c.ncols() != dim {
                return Err(PolyError::BadCoefficient {
                    index,
                    rows: c.nrows(),
                    cols: c.ncols(),
                    dim,
                });
            }
        }
        Ok(Self { coeffs })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            coeffs: vec![DMatrix::identity(dim, dim)],
        }
    }

    pub fn zeros(dim: usize, degree: usize) -> Self {
        Self {
            coeffs: vec![DMatrix::zeros(dim, dim); degree + 1],
        }
    }

    /// Diagonal polynomial `(c₀ + c₁z⁻¹ + …)·I`.
    pub fn scalar(dim: usize, coeffs: &[f64]) -> Result<Self, PolyError> {
        if coeffs.is_empty() {
            return Err(PolyError::Empty);
        }
        Ok(Self {
            coeffs: coeffs.iter().map(|&c| DMatrix::identity(dim, dim) * c).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, i: usize) -> &DMatrix<f64> {
        &self.coeffs[i]
    }

    /// Coefficient `i`, or the zero matrix past the declared degree.
    pub fn coeff_or_zero(&self, i: usize) -> DMatrix<f64> {
        self.coeffs
            .get(i)
            .cloned()
            .unwrap_or_else(|| DMatrix::zeros(self.dim(), self.dim()))
    }

    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    /// Evaluates `Σ Cᵢ v(k−i)` where `history[j]` holds `v(j)`.
    pub fn apply(&self, history: &[DVector<f64>], k: usize) -> Result<DVector<f64>, PolyError> {
        let needed = self.degree() + 1;
        if k >= history.len() || k + 1 < needed {
            return Err(PolyError::HistoryUnderrun {
                needed,
                available: if k < history.len() { k + 1 } else { history.len() },
            });
        }
        let mut out = DVector::zeros(self.dim());
        for (i, c) in self.coeffs.iter().enumerate() {
            let v = &history[k - i];
            if v.len() != self.dim() {
                return Err(PolyError::DimensionMismatch {
                    expected: self.dim(),
                    got: v.len(),
                });
            }
            out.gemv(1.0, c, v, 1.0);
        }
        Ok(out)
    }

    /// Same as [`apply`](Self::apply) but with `recent[0] = v(k)`, `recent[1] = v(k−1)`, ….
    pub fn apply_recent(&self, recent: &[&DVector<f64>]) -> Result<DVector<f64>, PolyError> {
        if recent.len() < self.degree() + 1 {
            return Err(PolyError::HistoryUnderrun {
                needed: self.degree() + 1,
                available: recent.len(),
            });
        }
        let mut out = DVector::zeros(self.dim());
        for (c, v) in self.coeffs.iter().zip(recent) {
            out.gemv(1.0, c, v, 1.0);
        }
        Ok(out)
    }

    pub fn mul(&self, rhs: &PolyMatrix) -> Result<PolyMatrix, PolyError> {
        self.check_dim(rhs)?;
        let m = self.dim();
        let mut coeffs = vec![DMatrix::zeros(m, m); self.degree() + rhs.degree() + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        Ok(PolyMatrix { coeffs })
    }

    pub fn add(&self, rhs: &PolyMatrix) -> Result<PolyMatrix, PolyError> {
        self.check_dim(rhs)?;
        let deg = self.degree().max(rhs.degree());
        let coeffs = (0..=deg)
            .map(|i| self.coeff_or_zero(i) + rhs.coeff_or_zero(i))
            .collect();
        Ok(PolyMatrix { coeffs })
    }

    pub fn sub(&self, rhs: &PolyMatrix) -> Result<PolyMatrix, PolyError> {
        self.check_dim(rhs)?;
        let deg = self.degree().max(rhs.degree());
        let coeffs = (0..=deg)
            .map(|i| self.coeff_or_zero(i) - rhs.coeff_or_zero(i))
            .collect();
        Ok(PolyMatrix { coeffs })
    }

    /// Multiplies by `z⁻ᵈ`.
    pub fn shift(&self, d: usize) -> PolyMatrix {
        let m = self.dim();
        let mut coeffs = vec![DMatrix::zeros(m, m); d];
        coeffs.extend(self.coeffs.iter().cloned());
        PolyMatrix { coeffs }
    }

    /// `C(1) = Σ Cᵢ`, the DC gain.
    pub fn at_one(&self) -> DMatrix<f64> {
        self.coeffs
            .iter()
            .fold(DMatrix::zeros(self.dim(), self.dim()), |acc, c| acc + c)
    }

    pub fn is_diagonal(&self) -> bool {
        self.coeffs.iter().all(|c| {
            let n = c.nrows();
            (0..n).all(|r| (0..n).all(|col| r == col || c[(r, col)] == 0.0))
        })
    }

    /// Largest coefficient-wise absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.coeffs
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Rewrites the polynomial so that `C₀ = I`.
    pub fn normalized(&self) -> Result<PolyMatrix, PolyError> {
        let inv = self.coeffs[0]
            .clone()
            .try_inverse()
            .ok_or(PolyError::NormalizationRequired)?;
        Ok(PolyMatrix {
            coeffs: self.coeffs.iter().map(|c| &inv * c).collect(),
        })
    }

    /// Block companion matrix of the monic-normalized polynomial. Its
    /// eigenvalues are the roots in `z` of `det(zⁿ C₀ + zⁿ⁻¹ C₁ + …)`.
    pub fn companion(&self) -> Result<DMatrix<f64>, PolyError> {
        let p = self.normalized()?;
        let m = p.dim();
        let n = p.degree();
        if n == 0 {
            return Ok(DMatrix::zeros(0, 0));
        }
        let mut c = DMatrix::zeros(m * n, m * n);
        for i in 0..n {
            let block = -p.coeff(i + 1);
            c.view_mut((0, i * m), (m, m)).copy_from(&block);
        }
        for i in 1..n {
            c.view_mut((i * m, (i - 1) * m), (m, m))
                .copy_from(&DMatrix::identity(m, m));
        }
        Ok(c)
    }

    pub fn spectral_radius(&self) -> Result<f64, PolyError> {
        let c = self.companion()?;
        if c.nrows() == 0 {
            return Ok(0.0);
        }
        Ok(c.complex_eigenvalues()
            .iter()
            .fold(0.0_f64, |acc, z| acc.max(z.norm())))
    }

    /// All roots of `det C(z⁻¹)` lie strictly outside the unit circle in
    /// `z⁻¹`, i.e. the difference equation `C(z⁻¹)v = 0` decays.
    pub fn is_stable(&self) -> Result<bool, PolyError> {
        Ok(self.spectral_radius()? < 1.0 - STABILITY_TOL)
    }

    fn check_dim(&self, rhs: &PolyMatrix) -> Result<(), PolyError> {
        if self.dim() != rhs.dim() {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim(),
                got: rhs.dim(),
            });
        }
        Ok(())
    }
}

/// `L` and `K` satisfying `F = L·A + z⁻ᵈ·K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diophantine {
    pub l: PolyMatrix,
    pub k: PolyMatrix,
}

impl Diophantine {
    /// Largest coefficient-wise entry of `F − L·A − z⁻ᵈK`.
    pub fn residual(&self, a: &PolyMatrix, f: &PolyMatrix, d: usize) -> Result<f64, PolyError> {
        let la = self.l.mul(a)?;
        let rhs = la.add(&self.k.shift(d))?;
        Ok(f.sub(&rhs)?.max_abs())
    }
}

/// Solves `F(z⁻¹) = L(z⁻¹)A(z⁻¹) + z⁻ᵈK(z⁻¹)` by block long division.
///
/// `A` is normalized to `A₀ = I` first; the returned `L` is mapped back so the
/// identity holds for the caller's `A`. `L` has degree `d−1` and `K` degree
/// `n−1` where `n = deg A`.
pub fn solve_diophantine(a: &PolyMatrix, f: &PolyMatrix, d: usize) -> Result<Diophantine, PolyError> {
    if a.dim() != f.dim() {
        return Err(PolyError::DimensionMismatch {
            expected: a.dim(),
            got: f.dim(),
        });
    }
    let n = a.degree();
    if d == 0 || d > n.max(1) {
        return Err(PolyError::InvalidDelay { d, n });
    }
    if f.degree() > n.max(d) {
        return Err(PolyError::DesignDegreeTooHigh { deg_f: f.degree(), n });
    }
    let a0_inv = a
        .coeff(0)
        .clone()
        .try_inverse()
        .ok_or(PolyError::NormalizationRequired)?;
    let monic = a.normalized()?;

    // Quotient: the first d coefficients of F·A⁻¹ (right division, A monic).
    let mut l: Vec<DMatrix<f64>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut lj = f.coeff_or_zero(j);
        for (i, li) in l.iter().enumerate() {
            lj -= li * monic.coeff_or_zero(j - i);
        }
        l.push(lj);
    }

    let k_len = n.max(1);
    let k: Vec<DMatrix<f64>> = (0..k_len)
        .map(|j| {
            let mut kj = f.coeff_or_zero(j + d);
            for (i, li) in l.iter().enumerate() {
                kj -= li * monic.coeff_or_zero(j + d - i);
            }
            kj
        })
        .collect();

    // L·Ã = (L·A₀⁻¹)·A, so map the quotient back onto the caller's A.
    let l = l.into_iter().map(|li| li * &a0_inv).collect();
    Ok(Diophantine {
        l: PolyMatrix { coeffs: l },
        k: PolyMatrix { coeffs: k },
    })
}
