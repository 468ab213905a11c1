use num_complex::Complex;
use num_traits::{One, Zero};

use super::{ComplexMatrix, ORTHO_TOL, PSD_TOL, SINGULAR_TOL};
use crate::error::{Error, Result};
use crate::scalar::Real;

const MAX_SWEEPS: usize = 100;
const SVD_MAX_DIM: usize = 64;

/// Eigendecomposition of a Hermitian matrix, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct Eigh<T> {
    pub values: Vec<T>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: ComplexMatrix<T>,
}

/// Thin singular value decomposition `a = u * diag(s) * v^H`.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    pub u: ComplexMatrix<T>,
    pub s: Vec<T>,
    pub v: ComplexMatrix<T>,
}

#[inline]
fn cis<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

/// Rotation parameters `(c, s)` annihilating the off-diagonal `g` of the real
/// symmetric block `[[app, g], [g, aqq]]`.
#[inline]
fn jacobi_rotation<T: Real>(app: T, aqq: T, g: T) -> (T, T) {
    let tau = (aqq - app) / (g + g);
    let t = tau.signum() / (tau.abs() + (T::one() + tau * tau).sqrt());
    let c = T::one() / (T::one() + t * t).sqrt();
    (c, t * c)
}

/// Cyclic Jacobi eigendecomposition of a Hermitian matrix. The strictly
/// lower triangle is assumed to mirror the upper one; call
/// [`ComplexMatrix::symmetrized`] first if it might not.
pub fn eigh<T: Real>(a: &ComplexMatrix<T>) -> Result<Eigh<T>> {
    if !a.is_square() {
        return Err(Error::dim("eigh", format!("{:?} is not square", a.shape())));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = ComplexMatrix::<T>::identity(n);
    let scale = m.frobenius_norm_sqr();
    let tiny = T::epsilon() * T::epsilon() * scale;

    let off = |m: &ComplexMatrix<T>| {
        let mut s = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                s += m[(i, j)].norm_sqr();
            }
        }
        s
    };

    let mut sweeps = 0;
    loop {
        let residual = off(&m);
        if residual <= tiny || scale.is_zero() {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                op: "eigh",
                sweeps,
                residual: residual.sqrt().as_f64(),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let g = apq.norm();
                if g.is_zero() {
                    continue;
                }
                let theta = apq.arg();
                let (c, s) = jacobi_rotation(m[(p, p)].re, m[(q, q)].re, g);
                let e_neg = cis(-theta);
                let e_pos = cis(theta);
                for k in 0..n {
                    let x = m[(k, p)];
                    let y = m[(k, q)] * e_neg;
                    m[(k, p)] = x * c - y * s;
                    m[(k, q)] = x * s + y * c;
                    let x = v[(k, p)];
                    let y = v[(k, q)] * e_neg;
                    v[(k, p)] = x * c - y * s;
                    v[(k, q)] = x * s + y * c;
                }
                for k in 0..n {
                    let x = m[(p, k)];
                    let y = m[(q, k)] * e_pos;
                    m[(p, k)] = x * c - y * s;
                    m[(q, k)] = x * s + y * c;
                }
                m[(p, q)] = Complex::zero();
                m[(q, p)] = Complex::zero();
                m[(p, p)].im = T::zero();
                m[(q, q)].im = T::zero();
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].re.partial_cmp(&m[(i, i)].re).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| m[(i, i)].re).collect();
    let vectors = v.select_columns(&order);
    Ok(Eigh { values, vectors })
}

/// Singular value decomposition for small matrices via one-sided Jacobi.
///
/// Singular values are sorted descending. Each column of `v` is rotated so
/// that its largest-magnitude entry is real and positive, which fixes the
/// phase ambiguity deterministically.
pub fn svd_small<T: Real>(a: &ComplexMatrix<T>) -> Result<Svd<T>> {
    let (m, n) = a.shape();
    if m > SVD_MAX_DIM || n > SVD_MAX_DIM {
        return Err(Error::dim(
            "svd_small",
            format!("{m}x{n} exceeds {SVD_MAX_DIM}x{SVD_MAX_DIM}"),
        ));
    }
    let mut out = if m >= n {
        one_sided_jacobi(a)?
    } else {
        let t = one_sided_jacobi(&a.hermitian())?;
        Svd { u: t.v, s: t.s, v: t.u }
    };
    fix_phases(&mut out);
    Ok(out)
}

fn one_sided_jacobi<T: Real>(a: &ComplexMatrix<T>) -> Result<Svd<T>> {
    let (m, n) = a.shape();
    // Work column-major: cols[j] is column j of the rotated matrix.
    let mut cols: Vec<Vec<Complex<T>>> = (0..n).map(|j| a.column(j).into_vec()).collect();
    let mut vcols: Vec<Vec<Complex<T>>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { Complex::one() } else { Complex::zero() }).collect())
        .collect();
    let tol = T::epsilon() * T::lit(m as f64);

    let mut sweeps = 0;
    loop {
        let mut worst = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha: T = cols[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: T = cols[q].iter().map(|z| z.norm_sqr()).sum();
                if alpha.is_zero() || beta.is_zero() {
                    continue;
                }
                let gamma = cols[p]
                    .iter()
                    .zip(&cols[q])
                    .fold(Complex::zero(), |acc, (x, y)| acc + x.conj() * y);
                let g = gamma.norm();
                let rel = g / (alpha * beta).sqrt();
                worst = worst.max(rel);
                if rel <= tol {
                    continue;
                }
                let (c, s) = jacobi_rotation(alpha, beta, g);
                let e = cis(-gamma.arg());
                rotate_pair(&mut cols, p, q, c, s, e);
                rotate_pair(&mut vcols, p, q, c, s, e);
            }
        }
        if worst <= tol {
            break;
        }
        sweeps += 1;
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                op: "svd_small",
                sweeps,
                residual: worst.as_f64(),
            });
        }
    }

    let norms: Vec<T> = cols
        .iter()
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));

    let s_max = norms[order[0]];
    let negligible = s_max * T::epsilon() * T::lit((m.max(n) * 4) as f64);
    let s: Vec<T> = order.iter().map(|&i| norms[i]).collect();

    let mut u_cols: Vec<Option<Vec<Complex<T>>>> = order
        .iter()
        .map(|&i| {
            if norms[i] > negligible && !norms[i].is_zero() {
                Some(cols[i].iter().map(|z| z / norms[i]).collect())
            } else {
                None
            }
        })
        .collect();
    complete_orthonormal(&mut u_cols, m);

    let u = ComplexMatrix::from_fn(m, n, |i, j| u_cols[j].as_ref().expect("completed")[i]);
    let v = ComplexMatrix::from_fn(n, n, |i, j| vcols[order[j]][i]);
    Ok(Svd { u, s, v })
}

fn rotate_pair<T: Real>(cols: &mut [Vec<Complex<T>>], p: usize, q: usize, c: T, s: T, e: Complex<T>) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y * e;
        *x = xp * c - yq * s;
        *y = xp * s + yq * c;
    }
}

/// Fills `None` columns with unit vectors orthogonal to all others.
fn complete_orthonormal<T: Real>(cols: &mut [Option<Vec<Complex<T>>>], m: usize) {
    let mut basis = 0;
    for j in 0..cols.len() {
        if cols[j].is_some() {
            continue;
        }
        while basis < m {
            let mut cand: Vec<Complex<T>> = (0..m)
                .map(|i| if i == basis { Complex::one() } else { Complex::zero() })
                .collect();
            basis += 1;
            for _ in 0..2 {
                for other in cols.iter().flatten() {
                    let proj = other
                        .iter()
                        .zip(&cand)
                        .fold(Complex::zero(), |acc, (o, x)| acc + o.conj() * x);
                    for (x, o) in cand.iter_mut().zip(other) {
                        *x = *x - o * proj;
                    }
                }
            }
            let norm = cand.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
            if norm > T::lit(0.5) {
                cols[j] = Some(cand.into_iter().map(|z| z / norm).collect());
                break;
            }
        }
    }
}

fn fix_phases<T: Real>(svd: &mut Svd<T>) {
    let k = svd.s.len();
    for j in 0..k {
        let mut best = 0;
        let mut best_mag = T::neg_infinity();
        for i in 0..svd.v.rows() {
            let mag = svd.v[(i, j)].norm();
            if mag > best_mag {
                best_mag = mag;
                best = i;
            }
        }
        let rot = cis(-svd.v[(best, j)].arg());
        for i in 0..svd.v.rows() {
            svd.v[(i, j)] = svd.v[(i, j)] * rot;
        }
        for i in 0..svd.u.rows() {
            svd.u[(i, j)] = svd.u[(i, j)] * rot;
        }
        svd.v[(best, j)].im = T::zero();
    }
    // Thin U for wide inputs carries only k columns; trim V to match.
    if svd.v.cols() > k {
        let keep: Vec<usize> = (0..k).collect();
        svd.v = svd.v.select_columns(&keep);
    }
}

/// Returns `log2 det(I + a)` for a Hermitian positive semidefinite `a`,
/// via Cholesky factorization of `I + a`.
pub(crate) fn log2_det_hermitian_plus_identity<T: Real>(a: &ComplexMatrix<T>) -> Result<T> {
    if !a.is_square() {
        return Err(Error::dim(
            "det_hermitian_plus_identity",
            format!("{:?} is not square", a.shape()),
        ));
    }
    let n = a.rows();
    let mut scale = T::one();
    for i in 0..n {
        scale = scale.max(a[(i, i)].re.abs());
    }
    let tol = T::lit(PSD_TOL) * scale;
    let mut l = ComplexMatrix::<T>::zeros(n, n);
    let mut log2_det = T::zero();
    for j in 0..n {
        let mut d = T::one() + a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d - T::one() < -tol || !d.is_finite() {
            return Err(Error::NotPsd {
                index: j,
                value: (d - T::one()).as_f64(),
            });
        }
        let d = d.max(T::one());
        let root = d.sqrt();
        l[(j, j)] = Complex::new(root, T::zero());
        log2_det += d.log2();
        for i in (j + 1)..n {
            // lower triangle entry of the Hermitian matrix I + a
            let mut z = (a[(j, i)]).conj();
            for k in 0..j {
                z = z - l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = z / root;
        }
    }
    Ok(log2_det)
}

/// `det(I + a)` for a Hermitian positive semidefinite `a`. Always `>= 1`.
pub fn det_hermitian_plus_identity<T: Real>(a: &ComplexMatrix<T>) -> Result<T> {
    Ok(log2_det_hermitian_plus_identity(a)?.exp2())
}

/// Hermitian inverse square root `B` with `B a B = I`.
pub fn inv_sqrt_hermitian<T: Real>(a: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    let e = eigh(&a.symmetrized())?;
    let smallest = *e.values.last().expect("non-empty");
    if smallest < T::lit(SINGULAR_TOL) {
        return Err(Error::Singular(format!(
            "smallest eigenvalue {:e} below {SINGULAR_TOL:e}",
            smallest.as_f64()
        )));
    }
    let n = a.rows();
    let w: Vec<T> = e.values.iter().map(|&l| T::one() / l.sqrt()).collect();
    Ok(ComplexMatrix::from_fn(n, n, |i, j| {
        (0..n).fold(Complex::zero(), |acc, k| {
            acc + e.vectors[(i, k)] * e.vectors[(j, k)].conj() * w[k]
        })
    }))
}

/// Largest deviation of `q^H q` from the identity.
pub(crate) fn orthonormality_error<T: Real>(q: &ComplexMatrix<T>) -> T {
    let g = q.hermitian().matmul(q).expect("shapes agree");
    let mut worst = T::zero();
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let target = if i == j { Complex::one() } else { Complex::zero() };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

#[allow(dead_code)]
pub(crate) fn is_orthonormal<T: Real>(q: &ComplexMatrix<T>) -> bool {
    orthonormality_error(q) < T::lit(ORTHO_TOL)
}
