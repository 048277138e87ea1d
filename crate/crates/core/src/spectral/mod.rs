//! Quasi-mode eigenproblem.
//!
//! A quasi mode `A = Σ ε_n c_n a_n / E` evolves as `d<A>/dt = (λ/2 - iΩ)<A>`
//! exactly when `c` is a right eigenvector of
//!
//! ```text
//! a_mn = (½ L_mn - ½ Γ_mn - i δ_mn ω_n) · ε_n / ε_m
//! ```
//!
//! with eigenvalue `μ = λ/2 - iΩ` (for the damped problem `Re μ = (λ - γ)/2`).
//! The matrix is a diagonal similarity transform of a complex *symmetric*
//! matrix, so `ε² ∘ c` is a left eigenvector with the same eigenvalue. That
//! gives the unconjugated biorthogonality `Σ ε_n² c_n^(ν) c_n^(μ) = δ S_ν`
//! and the completeness relation `Σ_ν ε_n² c_n^(ν) c_m^(ν) / S_ν = δ_nm`.

mod qr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::basis::ModeBasis;
use crate::coupling::{CouplingMatrix, ReservoirKind};
use crate::error::{Error, Result};

/// Right-eigenpair residual bound relative to `‖A‖_F`.
pub const RIGHT_RESIDUAL_TOL: f64 = 1e-10;
/// Left-eigenpair residual bound relative to `‖A‖_F`.
pub const LEFT_RESIDUAL_TOL: f64 = 1e-9;
/// Modes with `|S| <= SELF_ORTHOGONAL_TOL · Σ |w_n c_n|` are flagged.
pub const SELF_ORTHOGONAL_TOL: f64 = 1e-12;
/// Eigenvalue pairs closer than `DEGENERACY_TOL · ‖A‖_F` are reported.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// Real parts within `TIE_TOL · max|μ|` count as equal in mode selection.
pub const TIE_TOL: f64 = 1e-10;

const REFINEMENT_STEPS: usize = 3;

/// The non-Hermitian matrix of the quasi-mode eigenproblem.
#[derive(Debug, Clone)]
pub struct SystemMatrix {
    a: DMatrix<Complex64>,
    eps: Vec<f64>,
    omega: Vec<f64>,
    gain: CouplingMatrix,
    loss: Option<CouplingMatrix>,
}

impl SystemMatrix {
    /// Wrap an arbitrary square matrix, e.g. for solver tests.
    ///
    /// `eps` is used for the left-eigenvector guess and the biorthogonality
    /// weights; the guess is verified and replaced when it does not hold.
    pub fn from_raw(a: DMatrix<Complex64>, eps: Vec<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() != eps.len() {
            return Err(Error::Dimension {
                context: "raw system matrix",
                expected: eps.len(),
                found: a.nrows(),
            });
        }
        let n = eps.len();
        let omega = eps.iter().map(|e| e * e).collect();
        Ok(Self {
            a,
            eps,
            omega,
            gain: CouplingMatrix::zeros(n, ReservoirKind::Gain),
            loss: None,
        })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn gain(&self) -> &CouplingMatrix {
        &self.gain
    }

    pub fn loss(&self) -> Option<&CouplingMatrix> {
        self.loss.as_ref()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        frobenius(&self.a)
    }
}

fn frobenius(a: &DMatrix<Complex64>) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Assemble the system matrix from a basis, a gain matrix and an optional
/// loss matrix.
pub fn assemble(
    basis: &ModeBasis,
    gain: &CouplingMatrix,
    loss: Option<&CouplingMatrix>,
) -> Result<SystemMatrix> {
    let n = basis.n_modes();
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
    let l = gain.matrix();
    let a = DMatrix::from_fn(n, n, |m, k| {
        let mut re = 0.5 * l[(m, k)];
        if let Some(g) = loss {
            re -= 0.5 * g.matrix()[(m, k)];
        }
        let im = if m == k { -omega[k] } else { 0.0 };
        Complex64::new(re, im) * (eps[k] / eps[m])
    });
    Ok(SystemMatrix {
        a,
        eps: eps.to_vec(),
        omega: omega.to_vec(),
        gain: gain.clone(),
        loss: loss.cloned(),
    })
}

/// Full eigendecomposition with per-mode diagnostics.
#[derive(Debug, Clone)]
pub struct QuasiModeSet {
    eigenvalues: Vec<Complex64>,
    right: DMatrix<Complex64>,
    left: DMatrix<Complex64>,
    left_from_scaling: Vec<bool>,
    self_overlaps: Vec<Complex64>,
    overlap_scale: Vec<f64>,
    residuals: Vec<f64>,
    left_residuals: Vec<f64>,
    matrix_norm: f64,
    iterations: usize,
}

impl QuasiModeSet {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `μ_ν = λ_ν/2 - iΩ_ν` (net rate for damped systems).
    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    /// Right eigenvectors `c^(ν)` as columns, unit norm, largest entry real
    /// and positive.
    pub fn right_vectors(&self) -> &DMatrix<Complex64> {
        &self.right
    }

    pub fn right_vector(&self, index: usize) -> Vec<Complex64> {
        self.right.column(index).iter().copied().collect()
    }

    /// Left eigenvectors as columns (`ε² ∘ c` unless the scaling check failed).
    pub fn left_vectors(&self) -> &DMatrix<Complex64> {
        &self.left
    }

    /// Whether the left eigenvector of each mode came from the ε² scaling.
    pub fn left_from_scaling(&self) -> &[bool] {
        &self.left_from_scaling
    }

    /// `S_ν = Σ_n w_n c_n` with `w` the left eigenvector, i.e. `Σ ε_n² c_n²`.
    pub fn self_overlaps(&self) -> &[Complex64] {
        &self.self_overlaps
    }

    /// Relative residuals `‖A c - μ c‖ / ‖c‖`.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// Relative residuals `‖w^T A - μ w^T‖ / ‖w‖`.
    pub fn left_residuals(&self) -> &[f64] {
        &self.left_residuals
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_left_residual(&self) -> f64 {
        self.left_residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn matrix_norm(&self) -> f64 {
        self.matrix_norm
    }

    /// QR sweeps used by the Schur reduction.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Whether mode `index` is (numerically) self-orthogonal.
    pub fn is_flagged(&self, index: usize) -> bool {
        self.self_overlaps[index].norm() <= SELF_ORTHOGONAL_TOL * self.overlap_scale[index]
    }

    pub fn flagged(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_flagged(i)).collect()
    }

    /// Pairs of eigenvalues closer than the degeneracy threshold.
    pub fn degenerate_pairs(&self) -> Vec<(usize, usize)> {
        let tol = DEGENERACY_TOL * self.matrix_norm;
        let mut out = Vec::new();
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                if (self.eigenvalues[i] - self.eigenvalues[j]).norm() < tol {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

fn normalize_phase(v: &mut DVector<Complex64>) {
    let n = v.norm();
    if n == 0.0 {
        return;
    }
    let mut best = 0;
    let mut best_mod = -1.0;
    for (i, x) in v.iter().enumerate() {
        let m = x.norm();
        // strict comparison with a relative margin keeps the choice stable
        if m > best_mod * (1.0 + 1e-12) {
            best_mod = m;
            best = i;
        }
    }
    let phase = v[best] / v[best].norm();
    let scale = phase.conj() / n;
    for x in v.iter_mut() {
        *x *= scale;
    }
    v[best] = Complex64::new(v[best].re, 0.0);
}

fn right_residual(a: &DMatrix<Complex64>, mu: Complex64, x: &DVector<Complex64>) -> f64 {
    (a * x - x * mu).norm() / x.norm()
}

fn left_residual(at: &DMatrix<Complex64>, mu: Complex64, w: &DVector<Complex64>) -> f64 {
    (at * w - w * mu).norm() / w.norm()
}

/// Compute all eigenpairs of the system matrix.
pub fn eigendecompose(sys: &SystemMatrix) -> Result<QuasiModeSet> {
    let a = sys.matrix();
    let n = sys.dim();
    if n == 0 {
        return Err(Error::InvalidInput("empty system matrix".into()));
    }
    let norm = sys.norm();
    let schur = qr::schur(a)?;
    let y = qr::triangular_eigenvectors(&schur.t);
    let vecs = &schur.z * y;
    let at = a.transpose();

    let right_bound = RIGHT_RESIDUAL_TOL * norm;
    let left_bound = LEFT_RESIDUAL_TOL * norm;

    let mut eigenvalues = Vec::with_capacity(n);
    let mut right = DMatrix::zeros(n, n);
    let mut left = DMatrix::zeros(n, n);
    let mut left_from_scaling = Vec::with_capacity(n);
    let mut self_overlaps = Vec::with_capacity(n);
    let mut overlap_scale = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    let mut left_residuals = Vec::with_capacity(n);

    for k in 0..n {
        let mu = schur.t[(k, k)];
        let mut x: DVector<Complex64> = vecs.column(k).into_owned();
        x /= Complex64::new(x.norm(), 0.0);
        let mut r = right_residual(a, mu, &x);
        let mut steps = 0;
        while r > right_bound && steps < REFINEMENT_STEPS {
            match qr::inverse_iteration_step(a, mu, &x) {
                Some(next) => x = next,
                None => break,
            }
            r = right_residual(a, mu, &x);
            steps += 1;
        }
        if r > right_bound {
            return Err(Error::Inaccurate {
                index: k,
                residual: r,
                bound: right_bound,
            });
        }
        normalize_phase(&mut x);
        let r = right_residual(a, mu, &x);

        let mut w = DVector::from_fn(n, |i, _| x[i] * (sys.eps[i] * sys.eps[i]));
        let mut lr = left_residual(&at, mu, &w);
        let from_scaling = lr <= left_bound;
        if !from_scaling {
            w /= Complex64::new(w.norm(), 0.0);
            let mut steps = 0;
            while lr > left_bound && steps < REFINEMENT_STEPS {
                match qr::inverse_iteration_step(&at, mu, &w) {
                    Some(next) => w = next,
                    None => break,
                }
                lr = left_residual(&at, mu, &w);
                steps += 1;
            }
            if lr > left_bound {
                return Err(Error::Inaccurate {
                    index: k,
                    residual: lr,
                    bound: left_bound,
                });
            }
        }
        let s: Complex64 = w.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
        let scale: f64 = w
            .iter()
            .zip(x.iter())
            .map(|(a, b)| a.norm() * b.norm())
            .sum();

        eigenvalues.push(mu);
        right.set_column(k, &x);
        left.set_column(k, &w);
        left_from_scaling.push(from_scaling);
        self_overlaps.push(s);
        overlap_scale.push(scale);
        residuals.push(r);
        left_residuals.push(lr);
    }

    Ok(QuasiModeSet {
        eigenvalues,
        right,
        left,
        left_from_scaling,
        self_overlaps,
        overlap_scale,
        residuals,
        left_residuals,
        matrix_norm: norm,
        iterations: schur.iterations,
    })
}

/// Result of the biorthogonality check.
#[derive(Debug, Clone, PartialEq)]
pub struct BiorthogonalityCheck {
    /// `max_{ν≠μ} |Σ ε_n² c_n^(ν) c_n^(μ)| / sqrt(|S_ν| |S_μ|)`
    pub residual: f64,
    /// Eigenvalue pairs close enough that orthogonality is not guaranteed.
    pub degenerate_pairs: Vec<(usize, usize)>,
}

impl BiorthogonalityCheck {
    pub fn has_degeneracy_warning(&self) -> bool {
        !self.degenerate_pairs.is_empty()
    }
}

/// Largest normalised overlap between distinct quasi modes. Flagged modes
/// are skipped because their normalisation is undefined.
pub fn biorthogonality_residual(set: &QuasiModeSet, basis: &ModeBasis) -> BiorthogonalityCheck {
    let eps2: Vec<f64> = basis.eps().iter().map(|e| e * e).collect();
    let c = set.right_vectors();
    let n = set.len();
    let mut residual: f64 = 0.0;
    for i in 0..n {
        if set.is_flagged(i) {
            continue;
        }
        for j in i + 1..n {
            if set.is_flagged(j) {
                continue;
            }
            let o: Complex64 = (0..c.nrows())
                .map(|k| c[(k, i)] * c[(k, j)] * eps2[k])
                .sum();
            let norm = (set.self_overlaps[i].norm() * set.self_overlaps[j].norm()).sqrt();
            residual = residual.max(o.norm() / norm);
        }
    }
    BiorthogonalityCheck {
        residual,
        degenerate_pairs: set.degenerate_pairs(),
    }
}

/// `max_{n,m} |Σ_ν ε_n² c_n^(ν) c_m^(ν) / S_ν - δ_nm|`
pub fn completeness_residual(set: &QuasiModeSet, basis: &ModeBasis) -> Result<f64> {
    if let Some(&index) = set.flagged().first() {
        return Err(Error::CompletenessUnavailable { index });
    }
    let eps = basis.eps();
    let c = set.right_vectors();
    let n = c.nrows();
    let mut worst: f64 = 0.0;
    for row in 0..n {
        for col in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for nu in 0..set.len() {
                s += c[(row, nu)] * c[(col, nu)] / set.self_overlaps[nu];
            }
            s *= eps[row] * eps[row];
            if row == col {
                s -= 1.0;
            }
            worst = worst.max(s.norm());
        }
    }
    Ok(worst)
}

/// Elementwise `max |Σ_ν μ_ν c^(ν) w^(ν)T / S_ν - A|` using the stored left
/// vectors.
pub fn reconstruction_residual(set: &QuasiModeSet, sys: &SystemMatrix) -> f64 {
    let n = sys.dim();
    let mut rebuilt = DMatrix::<Complex64>::zeros(n, n);
    for nu in 0..set.len() {
        let c = set.right.column(nu);
        let w = set.left.column(nu);
        let f = set.eigenvalues[nu] / set.self_overlaps[nu];
        rebuilt += c * w.transpose() * f;
    }
    (rebuilt - sys.matrix())
        .iter()
        .map(|x| x.norm())
        .fold(0.0, f64::max)
}

/// Index of the quasi mode with the largest net amplification rate.
///
/// Real parts within [`TIE_TOL`] of the maximum tie; ties go to the mode whose
/// frequency `-Im μ` is closest to `target_frequency`, else the lowest index.
pub fn select_dominant(set: &QuasiModeSet, target_frequency: Option<f64>) -> Result<usize> {
    let candidates: Vec<usize> = (0..set.len()).filter(|&i| !set.is_flagged(i)).collect();
    if candidates.is_empty() {
        return Err(Error::NoSelectableMode);
    }
    let ev = set.eigenvalues();
    let scale = ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let best_re = candidates
        .iter()
        .map(|&i| ev[i].re)
        .fold(f64::NEG_INFINITY, f64::max);
    let tied = candidates
        .into_iter()
        .filter(|&i| best_re - ev[i].re <= TIE_TOL * scale);
    let chosen = match target_frequency {
        Some(t) => tied
            .min_by(|&i, &j| {
                let di = (ev[i].im + t).abs();
                let dj = (ev[j].im + t).abs();
                di.total_cmp(&dj).then(i.cmp(&j))
            })
            .expect("non-empty"),
        None => tied.min().expect("non-empty"),
    };
    Ok(chosen)
}

/// `min_θ ‖a - e^{iθ} b‖` for two vectors of equal length.
pub fn phase_aligned_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let ip: Complex64 = b.iter().zip(a).map(|(x, y)| x.conj() * y).sum();
    let phase = if ip.norm() == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        ip / ip.norm()
    };
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y * phase).norm_sqr())
        .sum::<f64>()
        .sqrt()
}
