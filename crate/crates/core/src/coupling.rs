//! Gain and loss coupling matrices from spatial reservoir profiles.
//!
//! A reservoir of two-level atoms spread over part of the universe couples
//! every pair of universe modes through their overlap inside the reservoir:
//!
//! ```text
//! m_ij = g · ε_i ε_j · (1/V') ∫ w(x) u_i(x) u_j(x) dx,    V' = ∫ w(x) dx
//! ```
//!
//! The atomic constants (injection rate, interaction time, dipole moment)
//! only enter as a product and are folded into the strength `g`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{ModeBasis, SpatialGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReservoirKind {
    Gain,
    Loss,
}

/// Spatial density of reservoir atoms together with the coupling strength.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirProfile {
    indicator: Vec<f64>,
    strength: f64,
    kind: ReservoirKind,
}

impl ReservoirProfile {
    pub fn new(indicator: Vec<f64>, strength: f64, kind: ReservoirKind) -> Result<Self> {
        if let Some(v) = indicator.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "profile indicator must be finite and non-negative, found {v}"
            )));
        }
        if !(strength.is_finite() && strength >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "profile strength must be finite and non-negative, got {strength}"
            )));
        }
        Ok(Self {
            indicator,
            strength,
            kind,
        })
    }

    /// Reservoir filling the whole universe.
    pub fn uniform(grid: &SpatialGrid, strength: f64, kind: ReservoirKind) -> Result<Self> {
        Self::new(vec![1.0; grid.len()], strength, kind)
    }

    /// Reservoir filling `[a, b]`.
    ///
    /// Grid points that fall on an edge get weight 1/2, so the profile's
    /// measure converges at the quadrature's own order when the edges are
    /// grid-aligned.
    pub fn interval(
        grid: &SpatialGrid,
        a: f64,
        b: f64,
        strength: f64,
        kind: ReservoirKind,
    ) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && 0.0 <= a && a < b && b <= grid.extent()) {
            return Err(Error::InvalidInput(format!(
                "interval [{a}, {b}] must satisfy 0 <= a < b <= {}",
                grid.extent()
            )));
        }
        let tol = 1e-12 * grid.extent();
        let indicator = grid
            .positions()
            .iter()
            .map(|&x| {
                if (x - a).abs() <= tol || (x - b).abs() <= tol {
                    0.5
                } else if x > a && x < b {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Self::new(indicator, strength, kind)
    }

    pub fn indicator(&self) -> &[f64] {
        &self.indicator
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn kind(&self) -> ReservoirKind {
        self.kind
    }
}

/// Real symmetric positive semi-definite gain (`L`) or loss (`Γ`) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    m: DMatrix<f64>,
    kind: ReservoirKind,
    strength: f64,
    support: f64,
}

impl CouplingMatrix {
    /// Wrap an explicit matrix after checking symmetry and positivity.
    pub fn from_matrix(m: DMatrix<f64>, kind: ReservoirKind) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension {
                context: "coupling matrix columns",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "coupling matrix has non-finite entries".into(),
            ));
        }
        let scale = m.amax();
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::InvalidInput(format!(
                "coupling matrix is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        if m.nrows() > 0 && scale > 0.0 {
            let min_eig = m.clone().symmetric_eigenvalues().min();
            if min_eig < -1e-10 * scale {
                return Err(Error::InvalidInput(format!(
                    "coupling matrix is not positive semi-definite (min eigenvalue {min_eig:.3e})"
                )));
            }
        }
        Ok(Self {
            m,
            kind,
            strength: scale,
            support: 0.0,
        })
    }

    pub fn zeros(n: usize, kind: ReservoirKind) -> Self {
        Self {
            m: DMatrix::zeros(n, n),
            kind,
            strength: 0.0,
            support: 0.0,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn kind(&self) -> ReservoirKind {
        self.kind
    }

    /// Strength `g` of the profile this matrix was built from.
    pub fn strength(&self) -> f64 {
        self.strength
    }

    /// Measure `V'` of the generating profile (0 for explicit matrices).
    pub fn support(&self) -> f64 {
        self.support
    }

    /// Same matrix multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            m: &self.m * factor,
            kind: self.kind,
            strength: self.strength * factor,
            support: self.support,
        }
    }

    /// Rate functional `Σ m_nm ε_n ε_m c_n* c_m / Σ ε_n² |c_n|²`.
    ///
    /// For the gain matrix this is the amplification rate `λ` of the quasi
    /// mode with coefficients `c`; for the loss matrix the damping rate `γ`.
    pub fn rate(&self, eps: &[f64], c: &[Complex64]) -> f64 {
        let n = self.dim();
        debug_assert_eq!(eps.len(), n);
        debug_assert_eq!(c.len(), n);
        let v: Vec<Complex64> = c.iter().zip(eps).map(|(ci, e)| ci * *e).collect();
        let mut num = Complex64::new(0.0, 0.0);
        for (i, vi) in v.iter().enumerate() {
            let row: Complex64 = v
                .iter()
                .enumerate()
                .map(|(j, vj)| vj * self.m[(i, j)])
                .sum();
            num += vi.conj() * row;
        }
        let den: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        num.re / den
    }
}

/// Build the coupling matrix of `profile` on `basis`.
pub fn build_coupling(basis: &ModeBasis, profile: &ReservoirProfile) -> Result<CouplingMatrix> {
    let grid = basis.grid();
    if profile.indicator().len() != grid.len() {
        return Err(Error::Dimension {
            context: "profile samples",
            expected: grid.len(),
            found: profile.indicator().len(),
        });
    }
    let support = grid.integrate(profile.indicator());
    if support <= 0.0 {
        return Err(Error::DegenerateProfile);
    }
    let n = basis.n_modes();
    let eps = basis.eps();
    let w: Vec<f64> = grid
        .weights()
        .iter()
        .zip(profile.indicator())
        .map(|(q, p)| q * p / support)
        .collect();
    let g = profile.strength();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let ui = basis.mode(i);
        for j in 0..n {
            let uj = basis.mode(j);
            let overlap: f64 = w
                .iter()
                .zip(ui.iter().zip(uj))
                .map(|(w, (a, b))| w * a * b)
                .sum();
            m[(i, j)] = g * eps[i] * eps[j] * overlap;
        }
    }
    let m = (&m + m.transpose()) * 0.5;
    Ok(CouplingMatrix {
        m,
        kind: profile.kind(),
        strength: g,
        support,
    })
}

/// Rescale `matrix` so that its rate functional on `c` equals `target_rate`.
pub fn scale_to_rate(
    matrix: &CouplingMatrix,
    c: &[Complex64],
    eps: &[f64],
    target_rate: f64,
) -> Result<CouplingMatrix> {
    if c.len() != matrix.dim() || eps.len() != matrix.dim() {
        return Err(Error::Dimension {
            context: "scale_to_rate vector",
            expected: matrix.dim(),
            found: c.len().min(eps.len()),
        });
    }
    let current = matrix.rate(eps, c);
    if current == 0.0 || !current.is_finite() {
        return Err(Error::CannotScale);
    }
    Ok(matrix.scaled(target_rate / current))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::make_box_basis;
    use std::f64::consts::PI;

    #[test]
    fn uniform_profile_gives_diagonal_matrix() {
        let b = make_box_basis(6, 2.0, 513).unwrap();
        let p = ReservoirProfile::uniform(b.grid(), 0.7, ReservoirKind::Gain).unwrap();
        let m = build_coupling(&b, &p).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expected = if i == j { 0.7 * b.omega()[i] } else { 0.0 };
                assert!(
                    (m.matrix()[(i, j)] - expected).abs() < 1e-6 * 0.7,
                    "({i},{j})"
                );
            }
        }
    }

    #[test]
    fn left_half_overlap_converges_to_closed_form() {
        // ∫_0^{π/2} sin x sin 2x dx = 2/3, V' = π/2. The indicator jumps at a
        // grid node, so the error is first order in the spacing.
        let expected = 1.3 * 2.0f64.sqrt() * 2.0 * (2.0 / 3.0) / (PI / 2.0);
        let error = |points: usize| {
            let b = make_box_basis(2, PI, points).unwrap();
            let p = ReservoirProfile::interval(b.grid(), 0.0, PI / 2.0, 1.3, ReservoirKind::Loss)
                .unwrap();
            let m = build_coupling(&b, &p).unwrap();
            assert!((m.support() - PI / 2.0).abs() < 1e-3);
            // diagonal: ∫_0^{π/2} 2 sin² x dx = π/2
            assert!(
                (m.matrix()[(0, 0)] - 1.3).abs() < 1e-3,
                "{}",
                m.matrix()[(0, 0)]
            );
            (m.matrix()[(0, 1)] - expected).abs()
        };
        let coarse = error(4097);
        let fine = error(8193);
        assert!(coarse < 2e-4 * expected, "{coarse}");
        let order = (coarse / fine).log2();
        assert!((order - 1.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn zero_strength_gives_zero_matrix() {
        let b = make_box_basis(3, 1.0, 257).unwrap();
        let p = ReservoirProfile::interval(b.grid(), 0.2, 0.6, 0.0, ReservoirKind::Gain).unwrap();
        let m = build_coupling(&b, &p).unwrap();
        assert_eq!(m.matrix().amax(), 0.0);
    }

    #[test]
    fn zero_measure_profile_is_rejected() {
        let b = make_box_basis(3, 1.0, 257).unwrap();
        let p = ReservoirProfile::new(vec![0.0; 257], 1.0, ReservoirKind::Gain).unwrap();
        assert_eq!(
            build_coupling(&b, &p).unwrap_err(),
            Error::DegenerateProfile
        );
    }

    #[test]
    fn negative_indicator_is_rejected() {
        let mut s = vec![1.0; 65];
        s[3] = -0.1;
        assert!(ReservoirProfile::new(s, 1.0, ReservoirKind::Gain).is_err());
    }

    #[test]
    fn symmetric_and_positive() {
        let b = make_box_basis(8, 3.0, 1025).unwrap();
        let p = ReservoirProfile::interval(b.grid(), 0.3, 1.7, 2.0, ReservoirKind::Gain).unwrap();
        let m = build_coupling(&b, &p).unwrap();
        let scale = m.matrix().amax();
        assert!((m.matrix() - m.matrix().transpose()).amax() <= 1e-12 * scale);
        let min = m.matrix().clone().symmetric_eigenvalues().min();
        assert!(min >= -1e-10 * scale);
        assert!(CouplingMatrix::from_matrix(m.matrix().clone(), ReservoirKind::Gain).is_ok());
    }

    #[test]
    fn explicit_matrix_must_be_psd() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(CouplingMatrix::from_matrix(m, ReservoirKind::Loss).is_err());
    }

    fn vector(vals: &[(f64, f64)]) -> Vec<Complex64> {
        vals.iter().map(|&(r, i)| Complex64::new(r, i)).collect()
    }

    #[test]
    fn halving_the_rate() {
        let m = CouplingMatrix::from_matrix(
            DMatrix::from_diagonal_element(2, 2, 2.0),
            ReservoirKind::Gain,
        )
        .unwrap();
        let c = vector(&[(1.0, 0.0), (0.0, 0.0)]);
        let eps = [1.0, 1.0];
        assert!((m.rate(&eps, &c) - 2.0).abs() < 1e-15);
        let s = scale_to_rate(&m, &c, &eps, 1.0).unwrap();
        assert_eq!(s.matrix(), &(m.matrix() * 0.5));
        let same = scale_to_rate(&m, &c, &eps, 2.0).unwrap();
        assert_eq!(same.matrix(), m.matrix());
    }

    #[test]
    fn scaled_rate_hits_target_on_random_case() {
        let b = make_box_basis(4, 2.0, 513).unwrap();
        let p = ReservoirProfile::interval(b.grid(), 0.25, 1.1, 0.8, ReservoirKind::Gain).unwrap();
        let m = build_coupling(&b, &p).unwrap();
        let c = vector(&[(0.3, -0.2), (0.9, 0.1), (-0.4, 0.5), (0.05, 0.7)]);
        let s = scale_to_rate(&m, &c, b.eps(), 0.123).unwrap();
        // recompute the rate functional from scratch
        let eps = b.eps();
        let mut num = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                num += (s.matrix()[(i, j)] * eps[i] * eps[j] * c[i].conj() * c[j]).re;
            }
        }
        let den: f64 = (0..4).map(|i| eps[i] * eps[i] * c[i].norm_sqr()).sum();
        assert!(((num / den) - 0.123).abs() < 1e-12 * 0.123);
    }

    #[test]
    fn zero_rate_cannot_be_scaled() {
        let m = CouplingMatrix::zeros(2, ReservoirKind::Loss);
        let c = vector(&[(1.0, 0.0), (0.0, 1.0)]);
        assert_eq!(
            scale_to_rate(&m, &c, &[1.0, 1.0], 1.0).unwrap_err(),
            Error::CannotScale
        );
    }
}
