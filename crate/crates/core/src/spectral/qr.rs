//! Dense complex eigensolver: Householder reduction to upper Hessenberg form,
//! single-shift QR sweeps with Wilkinson shifts down to a Schur form, and
//! eigenvectors by back-substitution on the triangular factor.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

const EPS: f64 = f64::EPSILON;

/// Iterations allowed per eigenvalue before giving up.
pub(crate) const ITERATIONS_PER_EIGENVALUE: usize = 30;

fn c0() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Schur factorisation `a = z t z^H`.
pub(crate) struct Schur {
    pub t: DMatrix<Complex64>,
    pub z: DMatrix<Complex64>,
    pub iterations: usize,
}

/// Reduce `h` to upper Hessenberg form in place and return the accumulated
/// unitary factor.
fn hessenberg(h: &mut DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = h.nrows();
    let mut q = DMatrix::<Complex64>::identity(n, n);
    if n < 3 {
        return q;
    }
    for k in 0..n - 2 {
        let tail: f64 = (k + 2..n).map(|i| h[(i, k)].norm_sqr()).sum();
        if tail == 0.0 {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let norm = (tail + x0.norm_sqr()).sqrt();
        let phase = if x0.norm() == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            x0 / x0.norm()
        };
        let alpha = -phase * norm;
        let mut v: Vec<Complex64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= vnorm;
        }
        // h <- (I - 2 v v^H) h
        for j in 0..n {
            let mut s = c0();
            for (i, vi) in v.iter().enumerate() {
                s += vi.conj() * h[(k + 1 + i, j)];
            }
            s *= 2.0;
            for (i, vi) in v.iter().enumerate() {
                h[(k + 1 + i, j)] -= vi * s;
            }
        }
        // h <- h (I - 2 v v^H), q <- q (I - 2 v v^H)
        for m in [&mut *h, &mut q] {
            for i in 0..n {
                let mut s = c0();
                for (j, vj) in v.iter().enumerate() {
                    s += m[(i, k + 1 + j)] * vj;
                }
                s *= 2.0;
                for (j, vj) in v.iter().enumerate() {
                    m[(i, k + 1 + j)] -= s * vj.conj();
                }
            }
        }
        h[(k + 1, k)] = alpha;
        for i in k + 2..n {
            h[(i, k)] = c0();
        }
    }
    q
}

/// Givens rotation `[[c, s], [-conj(s), c]]` mapping `(f, g)` to `(r, 0)`.
fn givens(f: Complex64, g: Complex64) -> (f64, Complex64) {
    let fa = f.norm();
    let ga = g.norm();
    if ga == 0.0 {
        return (1.0, c0());
    }
    if fa == 0.0 {
        return (0.0, Complex64::new(1.0, 0.0));
    }
    let rho = fa.hypot(ga);
    let c = fa / rho;
    let s = (f / fa) * g.conj() / rho;
    (c, s)
}

fn wilkinson_shift(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let mean = (a + d) * 0.5;
    let mu1 = mean + disc;
    let mu2 = mean - disc;
    if (mu1 - d).norm() <= (mu2 - d).norm() {
        mu1
    } else {
        mu2
    }
}

/// Complex Schur decomposition of a square matrix.
pub(crate) fn schur(a: &DMatrix<Complex64>) -> Result<Schur> {
    let n = a.nrows();
    let mut h = a.clone();
    let mut z = hessenberg(&mut h);
    let norm = h.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let max_iter = ITERATIONS_PER_EIGENVALUE * n.max(1);
    let mut total = 0usize;
    let mut since_deflation = 0usize;

    let mut hi = n.saturating_sub(1);
    while hi > 0 {
        // locate the start of the active unreduced block
        let mut lo = hi;
        while lo > 0 {
            let mut s = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            if s == 0.0 {
                s = norm;
            }
            if h[(lo, lo - 1)].norm() <= EPS * s {
                h[(lo, lo - 1)] = c0();
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            since_deflation = 0;
            continue;
        }
        total += 1;
        since_deflation += 1;
        if total > max_iter {
            return Err(Error::NoConvergence {
                iterations: total,
                index: hi,
                subdiagonal: h[(hi, hi - 1)].norm(),
            });
        }

        let mu = if since_deflation.is_multiple_of(11) {
            // exceptional shift to break cycles
            h[(hi, hi)] + Complex64::new(0.75 * h[(hi, hi - 1)].norm(), 0.0)
        } else {
            wilkinson_shift(
                h[(hi - 1, hi - 1)],
                h[(hi - 1, hi)],
                h[(hi, hi - 1)],
                h[(hi, hi)],
            )
        };

        for i in lo..=hi {
            h[(i, i)] -= mu;
        }
        let mut rotations = Vec::with_capacity(hi - lo);
        for k in lo..hi {
            let (c, s) = givens(h[(k, k)], h[(k + 1, k)]);
            for j in k..n {
                let x = h[(k, j)];
                let y = h[(k + 1, j)];
                h[(k, j)] = x * c + s * y;
                h[(k + 1, j)] = -s.conj() * x + y * c;
            }
            h[(k + 1, k)] = c0();
            rotations.push((c, s));
        }
        for (off, &(c, s)) in rotations.iter().enumerate() {
            let k = lo + off;
            let rows = (k + 2).min(hi + 1);
            for i in 0..rows {
                let x = h[(i, k)];
                let y = h[(i, k + 1)];
                h[(i, k)] = x * c + s.conj() * y;
                h[(i, k + 1)] = -s * x + y * c;
            }
            for i in 0..n {
                let x = z[(i, k)];
                let y = z[(i, k + 1)];
                z[(i, k)] = x * c + s.conj() * y;
                z[(i, k + 1)] = -s * x + y * c;
            }
        }
        for i in lo..=hi {
            h[(i, i)] += mu;
        }
    }
    // clear rounding below the diagonal
    for j in 0..n {
        for i in j + 1..n {
            h[(i, j)] = c0();
        }
    }
    Ok(Schur {
        t: h,
        z,
        iterations: total,
    })
}

/// Right eigenvectors of an upper triangular matrix (columns, unnormalised).
pub(crate) fn triangular_eigenvectors(t: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = t.nrows();
    let norm = t.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let smin = (EPS * norm).max(f64::MIN_POSITIVE);
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        let tkk = t[(k, k)];
        let mut col = vec![c0(); k + 1];
        col[k] = Complex64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut s = c0();
            for i in j + 1..=k {
                s += t[(j, i)] * col[i];
            }
            let mut d = t[(j, j)] - tkk;
            if d.norm() < smin {
                d = Complex64::new(smin, 0.0);
            }
            col[j] = -s / d;
            let big = col.iter().map(|x| x.norm()).fold(0.0, f64::max);
            if big > 1e100 {
                for x in col.iter_mut() {
                    *x /= big;
                }
            }
        }
        for (i, v) in col.into_iter().enumerate() {
            y[(i, k)] = v;
        }
    }
    y
}

/// One step of inverse iteration: solve `(a - mu I) x_new = x` and normalise.
pub(crate) fn inverse_iteration_step(
    a: &DMatrix<Complex64>,
    mu: Complex64,
    x: &DVector<Complex64>,
) -> Option<DVector<Complex64>> {
    let n = a.nrows();
    let norm = a
        .iter()
        .map(|x| x.norm_sqr())
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    // nudge the shift so the factorisation stays regular
    let shifted = a - DMatrix::<Complex64>::identity(n, n) * (mu + Complex64::new(EPS * norm, 0.0));
    let lu = shifted.lu();
    let y = lu.solve(x)?;
    let ny = y.norm();
    if !(ny.is_finite() && ny > 0.0) {
        return None;
    }
    Some(y / Complex64::new(ny, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lcg_matrix(n: usize, seed: u64) -> DMatrix<Complex64> {
        let mut s = seed;
        let mut next = || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        DMatrix::from_fn(n, n, |_, _| c(next(), next()))
    }

    #[test]
    fn schur_reconstructs_input() {
        for n in [1, 2, 3, 7, 16, 32] {
            let a = lcg_matrix(n, n as u64 + 3);
            let s = schur(&a).unwrap();
            let back = &s.z * &s.t * s.z.adjoint();
            let err = (back - &a).iter().map(|x| x.norm()).fold(0.0, f64::max);
            assert!(err < 1e-12, "n={n} err={err}");
            let unit = (s.z.adjoint() * &s.z - DMatrix::identity(n, n))
                .iter()
                .map(|x| x.norm())
                .fold(0.0, f64::max);
            assert!(unit < 1e-13, "n={n}");
            for j in 0..n {
                for i in j + 1..n {
                    assert_eq!(s.t[(i, j)], c(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn diagonal_input_is_untouched() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![
            c(0.5, -1.0),
            c(0.5, -2.0),
            c(0.5, -3.0),
        ]));
        let s = schur(&a).unwrap();
        assert_eq!(s.t, a);
        assert_eq!(s.z, DMatrix::identity(3, 3));
        assert_eq!(triangular_eigenvectors(&s.t), DMatrix::identity(3, 3));
    }

    #[test]
    fn eigenvectors_of_triangular_factor() {
        let a = lcg_matrix(6, 11);
        let s = schur(&a).unwrap();
        let y = triangular_eigenvectors(&s.t);
        for k in 0..6 {
            let col = y.column(k);
            let r = &s.t * col - col * s.t[(k, k)];
            assert!(r.norm() < 1e-12 * col.norm());
        }
    }

    #[test]
    fn givens_zeroes_second_entry() {
        for (f, g) in [
            (c(1.0, 2.0), c(-0.5, 0.3)),
            (c(0.0, 0.0), c(1.0, 1.0)),
            (c(2.0, 0.0), c(0.0, 0.0)),
        ] {
            let (cs, s) = givens(f, g);
            let r0 = f * cs + s * g;
            let r1 = -s.conj() * f + g * cs;
            assert!(r1.norm() < 1e-15);
            assert!((r0.norm() - (f.norm_sqr() + g.norm_sqr()).sqrt()).abs() < 1e-14);
        }
    }
}
