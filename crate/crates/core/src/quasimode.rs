//! Derived quantities of a single quasi mode: frequency, rates, norms,
//! frequency distribution and the excess-noise factors.
//!
//! With `W = Σ ε_n² |c_n|²` and `S = Σ ε_n² c_n²` the quantum excess-noise
//! factor is `K = |W / S|²` and the semi-classical factor is
//! `K̃ = N² N̄² = Σ|c_n|² Σ ε_n⁴|c_n|² / |S|²`. Both are invariant under
//! `c -> z c`. The triangle inequality gives `K >= 1` and Cauchy-Schwarz
//! gives `K <= K̃`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::basis::{ModeBasis, SpatialGrid};
use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::spectral::{QuasiModeSet, SELF_ORTHOGONAL_TOL};

/// Everything known about one quasi mode.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiModeReport {
    pub index: usize,
    /// `μ = (λ - γ)/2 - iΩ` when the report came from an eigendecomposition.
    pub eigenvalue: Option<Complex64>,
    pub c: Vec<Complex64>,
    pub eps: Vec<f64>,
    pub omega: Vec<f64>,
    /// Mean frequency under `p_n`.
    pub omega_mean: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// `sqrt(Ω)`
    pub e_nu: f64,
    pub n2: f64,
    pub n2_bar: f64,
    pub p: Vec<f64>,
    pub k: f64,
    pub k_tilde: f64,
    pub ratio: f64,
    /// `S = Σ ε_n² c_n²`
    pub self_overlap: Complex64,
    /// `W = Σ ε_n² |c_n|²`
    pub weight: f64,
    /// Sampled quasi-mode function `U(x)`.
    pub u: Vec<Complex64>,
    /// Sampled adjoint function `Ū(x)`.
    pub u_bar: Vec<Complex64>,
}

impl QuasiModeReport {
    /// `K` through the norm route `N² W / E²`, for cross-checking the closed
    /// form.
    pub fn k_via_norm(&self) -> f64 {
        self.n2 * self.weight / (self.e_nu * self.e_nu)
    }

    /// `K̃/K - 1` without cancellation:
    /// `½ Σ_mn |c_m|²|c_n|² (ω_m - ω_n)² / W²`.
    pub fn ratio_excess(&self) -> f64 {
        let a: Vec<f64> = self.c.iter().map(|x| x.norm_sqr()).collect();
        let mut s = 0.0;
        for (m, am) in a.iter().enumerate() {
            for (n, an) in a.iter().enumerate().skip(m + 1) {
                let d = self.omega[m] - self.omega[n];
                s += am * an * d * d;
            }
        }
        s / (self.weight * self.weight)
    }

    /// `Δω / Ω` with `Δω² = Σ p_n (ω_n - Ω)²`.
    pub fn relative_bandwidth(&self) -> f64 {
        let mut s = 0.0;
        for (m, pm) in self.p.iter().enumerate() {
            for (n, pn) in self.p.iter().enumerate().skip(m + 1) {
                let d = self.omega[m] - self.omega[n];
                s += pm * pn * d * d;
            }
        }
        s.sqrt() / self.omega_mean
    }

    /// Mean frequency under the weights `|c_n|²` instead of `p_n`. Using it in
    /// place of Ω would make `K̃/K` exactly one; kept as a diagnostic only.
    pub fn omega_bare_mean(&self) -> f64 {
        let (num, den) = self
            .c
            .iter()
            .zip(&self.omega)
            .fold((0.0, 0.0), |(n, d), (c, w)| {
                (n + c.norm_sqr() * w, d + c.norm_sqr())
            });
        num / den
    }

    /// `(1/V) ∫ U² dx`, evaluated algebraically.
    pub fn mean_u_squared(&self) -> Complex64 {
        self.c
            .iter()
            .zip(&self.eps)
            .map(|(c, e)| {
                let coef = c * (e * e) / self.self_overlap;
                coef * coef
            })
            .sum()
    }
}

/// Analyse quasi mode `index` of an eigendecomposition.
pub fn analyze(
    set: &QuasiModeSet,
    index: usize,
    basis: &ModeBasis,
    gain: &CouplingMatrix,
    loss: Option<&CouplingMatrix>,
) -> Result<QuasiModeReport> {
    if index >= set.len() {
        return Err(Error::InvalidInput(format!(
            "mode index {index} out of range for {} modes",
            set.len()
        )));
    }
    let mut report = analyze_vector(&set.right_vector(index), index, basis, gain, loss)?;
    report.eigenvalue = Some(set.eigenvalues()[index]);
    Ok(report)
}

/// Analyse an arbitrary coefficient vector `c`.
pub fn analyze_vector(
    c: &[Complex64],
    index: usize,
    basis: &ModeBasis,
    gain: &CouplingMatrix,
    loss: Option<&CouplingMatrix>,
) -> Result<QuasiModeReport> {
    let n = basis.n_modes();
    if c.len() != n {
        return Err(Error::Dimension {
            context: "coefficient vector",
            expected: n,
            found: c.len(),
        });
    }
    for m in std::iter::once(gain).chain(loss) {
        if m.dim() != n {
            return Err(Error::Dimension {
                context: "coupling matrix",
                expected: n,
                found: m.dim(),
            });
        }
    }
    let eps = basis.eps();
    let omega = basis.omega();
    let eps2: Vec<f64> = eps.iter().map(|e| e * e).collect();

    let abs2: Vec<f64> = c.iter().map(|x| x.norm_sqr()).collect();
    let weight: f64 = abs2.iter().zip(&eps2).map(|(a, e)| a * e).sum();
    let s: Complex64 = c.iter().zip(&eps2).map(|(x, e)| x * x * *e).sum();
    if s.norm() <= SELF_ORTHOGONAL_TOL * weight {
        return Err(Error::SelfOrthogonal {
            index,
            overlap: s.norm(),
        });
    }
    let bare: f64 = abs2.iter().sum();
    let fourth: f64 = abs2.iter().zip(&eps2).map(|(a, e)| a * e * e).sum();

    let p: Vec<f64> = abs2
        .iter()
        .zip(&eps2)
        .map(|(a, e)| a * e / weight)
        .collect();
    let omega_mean = abs2
        .iter()
        .zip(eps2.iter().zip(omega))
        .map(|(a, (e, w))| a * e * w)
        .sum::<f64>()
        / weight;
    let lambda = gain.rate(eps, c);
    let gamma = loss.map_or(0.0, |l| l.rate(eps, c));

    let s2 = s.norm_sqr();
    let n2 = fourth / s2;
    let n2_bar = bare;
    let k = (weight / s.norm()).powi(2);
    let k_tilde = n2 * n2_bar;
    let ratio = omega_mean * p.iter().zip(omega).map(|(p, w)| p / w).sum::<f64>();

    let grid_len = basis.grid().len();
    let mut u = vec![Complex64::new(0.0, 0.0); grid_len];
    let mut u_bar = vec![Complex64::new(0.0, 0.0); grid_len];
    for (j, mode) in basis.modes().iter().enumerate() {
        let right = c[j] * eps2[j] / s;
        for (i, v) in mode.iter().enumerate() {
            u[i] += right * *v;
            u_bar[i] += c[j] * *v;
        }
    }

    Ok(QuasiModeReport {
        index,
        eigenvalue: None,
        c: c.to_vec(),
        eps: eps.to_vec(),
        omega: omega.to_vec(),
        omega_mean,
        lambda,
        gamma,
        e_nu: omega_mean.sqrt(),
        n2,
        n2_bar,
        p,
        k,
        k_tilde,
        ratio,
        self_overlap: s,
        weight,
        u,
        u_bar,
    })
}

/// Result of the spatial biorthogonality check on sampled quasi-mode
/// functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrthogonalityResidual {
    /// `max_{ν≠μ} |(1/V) ∫ U_ν Ū_μ dx|`
    pub off_diagonal: f64,
    /// `max_ν |(1/V) ∫ U_ν Ū_ν dx - 1|`
    pub diagonal: f64,
}

/// Quadrature check of `(1/V) ∫ U_ν Ū_μ dx = δ_νμ`.
pub fn quasimode_orthogonality_residual(
    reports: &[QuasiModeReport],
    grid: &SpatialGrid,
) -> Result<OrthogonalityResidual> {
    if let Some(r) = reports
        .iter()
        .find(|r| r.u.len() != grid.len() || r.u_bar.len() != grid.len())
    {
        return Err(Error::Dimension {
            context: "quasi-mode samples",
            expected: grid.len(),
            found: r.u.len(),
        });
    }
    let v = grid.extent();
    let overlap = |a: &QuasiModeReport, b: &QuasiModeReport| -> Complex64 {
        let prod: Vec<Complex64> = a.u.iter().zip(&b.u_bar).map(|(x, y)| x * y).collect();
        grid.integrate_complex(&prod) / v
    };
    let mut out = OrthogonalityResidual {
        off_diagonal: 0.0,
        diagonal: 0.0,
    };
    for (i, a) in reports.iter().enumerate() {
        for (j, b) in reports.iter().enumerate() {
            let o = overlap(a, b);
            if i == j {
                out.diagonal = out.diagonal.max((o - 1.0).norm());
            } else {
                out.off_diagonal = out.off_diagonal.max(o.norm());
            }
        }
    }
    Ok(out)
}

/// Relative differences between quadrature and algebraic values of `N²` and
/// `N̄²`.
pub fn norm_consistency(report: &QuasiModeReport, grid: &SpatialGrid) -> Result<(f64, f64)> {
    if report.u.len() != grid.len() {
        return Err(Error::Dimension {
            context: "quasi-mode samples",
            expected: grid.len(),
            found: report.u.len(),
        });
    }
    let v = grid.extent();
    let abs_u: Vec<f64> = report.u.iter().map(|z| z.norm_sqr()).collect();
    let abs_ub: Vec<f64> = report.u_bar.iter().map(|z| z.norm_sqr()).collect();
    let n2 = grid.integrate(&abs_u) / v;
    let n2_bar = grid.integrate(&abs_ub) / v;
    Ok((
        (n2 - report.n2).abs() / report.n2,
        (n2_bar - report.n2_bar).abs() / report.n2_bar,
    ))
}

/// Coefficient matrix `ε_n² c_n / S` of the quasi-mode functions in the
/// universe basis (columns are modes). Handy for algebraic overlap checks.
pub fn mode_function_coefficients(reports: &[QuasiModeReport]) -> DMatrix<Complex64> {
    let n = reports.first().map_or(0, |r| r.c.len());
    DMatrix::from_fn(n, reports.len(), |i, j| {
        let r = &reports[j];
        r.c[i] * (r.eps[i] * r.eps[i]) / r.self_overlap
    })
}
