//! Universe-mode basis on a 1D spatial grid.
//!
//! Natural units are used throughout: `hbar = 1` and `2 eps0 V = 1`, so the
//! vacuum field amplitude of a mode with frequency `omega` is `sqrt(omega)`.
//! Volume integrals `(1/V) ∫ d^3x` become `(1/extent) ∫ dx` on the grid.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerance on `(1/V) ∫ u_n u_m dx - δ_nm`.
pub const ORTHONORMALITY_TOL: f64 = 1e-6;

/// Minimum number of grid points.
pub const MIN_GRID_POINTS: usize = 64;

/// Uniform grid with composite quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    x: Vec<f64>,
    weights: Vec<f64>,
    extent: f64,
}

impl SpatialGrid {
    /// Uniform grid on `[0, extent]` including both end points.
    ///
    /// Uses composite Simpson weights when the number of intervals is even and
    /// the trapezoid rule otherwise.
    pub fn uniform(extent: f64, points: usize) -> Result<Self> {
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::InvalidInput(format!(
                "grid extent must be positive and finite, got {extent}"
            )));
        }
        if points < MIN_GRID_POINTS {
            return Err(Error::InvalidInput(format!(
                "grid needs at least {MIN_GRID_POINTS} points, got {points}"
            )));
        }
        let intervals = points - 1;
        let h = extent / intervals as f64;
        let x = (0..points).map(|i| i as f64 * h).collect();
        let weights = if intervals.is_multiple_of(2) {
            (0..points)
                .map(|i| {
                    let w = if i == 0 || i == intervals {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    w * h / 3.0
                })
                .collect()
        } else {
            (0..points)
                .map(|i| if i == 0 || i == intervals { 0.5 * h } else { h })
                .collect()
        };
        Ok(Self { x, weights, extent })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.x
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total length `V` of the universe.
    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn spacing(&self) -> f64 {
        self.extent / (self.x.len() - 1) as f64
    }

    /// `∫ f dx` over the whole grid.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// `∫ f dx` for a complex integrand.
    pub fn integrate_complex(&self, f: &[Complex64]) -> Complex64 {
        debug_assert_eq!(f.len(), self.len());
        self.weights.iter().zip(f).map(|(w, v)| v * *w).sum()
    }

    /// `(1/V) ∫ f g dx`
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum::<f64>()
            / self.extent
    }

    /// Index of the grid point closest to `x`.
    pub fn nearest_index(&self, x: f64) -> usize {
        let i = (x / self.spacing()).round();
        (i.max(0.0) as usize).min(self.len() - 1)
    }
}

/// Truncated set of orthonormal real mode functions with their frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBasis {
    omega: Vec<f64>,
    eps: Vec<f64>,
    u: Vec<Vec<f64>>,
    grid: SpatialGrid,
}

impl ModeBasis {
    pub fn n_modes(&self) -> usize {
        self.omega.len()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Vacuum field amplitudes `sqrt(omega_n)`.
    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    /// Sampled mode function `u_n` (0-based `n`).
    pub fn mode(&self, n: usize) -> &[f64] {
        &self.u[n]
    }

    pub fn modes(&self) -> &[Vec<f64>] {
        &self.u
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// Quadrature Gram matrix `(1/V) ∫ u_n u_m dx`.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        gram(&self.u, &self.grid)
    }

    /// Largest elementwise deviation of the Gram matrix from the identity.
    pub fn orthonormality_residual(&self) -> f64 {
        worst_gram_entry(&self.gram()).map_or(0.0, |(_, _, r)| r)
    }

    /// Same mode functions with every frequency shifted by `offset`.
    ///
    /// Shifting moves the band away from zero without touching the spatial
    /// structure, which is how optical-like `Δω/Ω` ratios are produced.
    pub fn with_frequency_offset(&self, offset: f64) -> Result<Self> {
        let omega = self.omega.iter().map(|w| w + offset).collect();
        make_custom_basis(omega, self.u.clone(), self.grid.clone())
    }
}

fn gram(u: &[Vec<f64>], grid: &SpatialGrid) -> Vec<Vec<f64>> {
    let n = u.len();
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = grid.inner(&u[i], &u[j]);
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    g
}

/// Worst `(n, m, residual)` over the upper triangle, 1-based.
fn worst_gram_entry(g: &[Vec<f64>]) -> Option<(usize, usize, f64)> {
    let mut worst: Option<(usize, usize, f64)> = None;
    for (i, row) in g.iter().enumerate() {
        for (j, v) in row.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            let r = (v - target).abs();
            if worst.is_none_or(|(_, _, w)| r > w) {
                worst = Some((i + 1, j + 1, r));
            }
        }
    }
    worst
}

/// Standing-wave modes `sqrt(2) sin(n π x / L)` of a box of length `L` with
/// unit wave speed, so `omega_n = n π / L`.
pub fn make_box_basis(n_modes: usize, box_length: f64, grid_points: usize) -> Result<ModeBasis> {
    if n_modes == 0 {
        return Err(Error::InvalidInput("n_modes must be at least 1".into()));
    }
    let grid = SpatialGrid::uniform(box_length, grid_points)?;
    let u: Vec<Vec<f64>> = (1..=n_modes)
        .map(|n| {
            let k = n as f64 * std::f64::consts::PI / box_length;
            grid.positions()
                .iter()
                .map(|x| std::f64::consts::SQRT_2 * (k * x).sin())
                .collect()
        })
        .collect();
    let omega: Vec<f64> = (1..=n_modes)
        .map(|n| n as f64 * std::f64::consts::PI / box_length)
        .collect();

    let g = gram(&u, &grid);
    let worst = worst_gram_entry(&g).expect("at least one mode");
    if grid_points < 4 * n_modes || worst.2 > ORTHONORMALITY_TOL {
        return Err(Error::Resolution {
            n: worst.0,
            m: worst.1,
            residual: worst.2,
        });
    }
    let eps = omega.iter().map(|w| w.sqrt()).collect();
    Ok(ModeBasis {
        omega,
        eps,
        u,
        grid,
    })
}

/// Validate user-supplied frequencies and sampled mode functions.
pub fn make_custom_basis(
    omega: Vec<f64>,
    u: Vec<Vec<f64>>,
    grid: SpatialGrid,
) -> Result<ModeBasis> {
    if omega.is_empty() {
        return Err(Error::InvalidInput("basis needs at least one mode".into()));
    }
    if u.len() != omega.len() {
        return Err(Error::Dimension {
            context: "mode function count",
            expected: omega.len(),
            found: u.len(),
        });
    }
    if let Some(bad) = u.iter().find(|f| f.len() != grid.len()) {
        return Err(Error::Dimension {
            context: "mode function samples",
            expected: grid.len(),
            found: bad.len(),
        });
    }
    if let Some((i, w)) = omega
        .iter()
        .enumerate()
        .find(|(_, w)| !(w.is_finite() && **w > 0.0))
    {
        return Err(Error::InvalidInput(format!(
            "frequency of mode {} must be positive and finite, got {w}",
            i + 1
        )));
    }
    if u.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "mode functions contain non-finite samples".into(),
        ));
    }
    let g = gram(&u, &grid);
    if let Some((n, m, residual)) = worst_gram_entry(&g) {
        if residual > ORTHONORMALITY_TOL {
            return Err(Error::NotOrthonormal { n, m, residual });
        }
    }
    let eps = omega.iter().map(|w| w.sqrt()).collect();
    Ok(ModeBasis {
        omega,
        eps,
        u,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn single_mode_in_pi_box() {
        let b = make_box_basis(1, PI, 256).unwrap();
        assert!((b.omega()[0] - 1.0).abs() < 1e-15);
        assert!((b.eps()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_modes_are_orthogonal() {
        let b = make_box_basis(2, PI, 256).unwrap();
        let g = b.gram();
        assert!(g[0][1].abs() < 1e-6);
        assert!((g[0][0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gram_residual_matches_finer_grid() {
        let coarse = make_box_basis(8, 10.0, 2048).unwrap();
        let fine = make_box_basis(8, 10.0, 20480).unwrap();
        let (gc, gf) = (coarse.gram(), fine.gram());
        for i in 0..8 {
            for j in 0..8 {
                assert!((gc[i][j] - gf[i][j]).abs() < 1e-6, "({i},{j})");
            }
        }
        assert!(coarse.orthonormality_residual() < 1e-12);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let err = make_box_basis(32, 1.0, 100).unwrap_err();
        assert!(matches!(err, Error::Resolution { .. }), "{err}");
    }

    #[test]
    fn eps_squared_equals_omega() {
        let b = make_box_basis(16, 2.7, 1025).unwrap();
        for (e, w) in b.eps().iter().zip(b.omega()) {
            assert!(((e * e - w) / w).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_sum_to_extent() {
        for points in [64, 65, 256, 257] {
            let g = SpatialGrid::uniform(3.3, points).unwrap();
            let s: f64 = g.weights().iter().sum();
            assert!((s - 3.3).abs() < 1e-13, "{points}");
            assert!(g.weights().iter().all(|w| *w > 0.0));
            assert!(g.positions().windows(2).all(|p| p[1] > p[0]));
        }
    }

    fn two_function_basis() -> (SpatialGrid, Vec<Vec<f64>>) {
        let grid = SpatialGrid::uniform(2.0, 128).unwrap();
        let u1 = vec![1.0; grid.len()];
        let u2 = grid
            .positions()
            .iter()
            .map(|x| std::f64::consts::SQRT_2 * (2.0 * PI * x / 2.0).cos())
            .collect();
        (grid, vec![u1, u2])
    }

    #[test]
    fn custom_basis_accepts_orthonormal_functions() {
        let (grid, u) = two_function_basis();
        let b = make_custom_basis(vec![1.0, 2.0], u, grid).unwrap();
        assert_eq!(b.n_modes(), 2);
        assert!((b.eps()[1] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn custom_basis_rejects_duplicate_function() {
        let (grid, mut u) = two_function_basis();
        u[1] = u[0].clone();
        match make_custom_basis(vec![1.0, 2.0], u, grid).unwrap_err() {
            Error::NotOrthonormal { n, m, residual } => {
                assert_eq!((n, m), (1, 2));
                assert!((residual - 1.0).abs() < 1e-12);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn custom_basis_rejects_bad_frequency() {
        let (grid, u) = two_function_basis();
        assert!(make_custom_basis(vec![1.0, -2.0], u.clone(), grid.clone()).is_err());
        assert!(make_custom_basis(vec![1.0, f64::NAN], u, grid).is_err());
    }

    #[test]
    fn box_basis_round_trips_through_custom_constructor() {
        let b = make_box_basis(5, 4.0, 513).unwrap();
        let c =
            make_custom_basis(b.omega().to_vec(), b.modes().to_vec(), b.grid().clone()).unwrap();
        assert_eq!(b.eps(), c.eps());
    }
}
