//! Dense complex linear algebra used by the steady-state and Monte-Carlo solvers:
//! Schur-based (Bartels-Stewart) Sylvester solves, the vectorized Kronecker
//! route, eigenbasis decomposition and the matrix exponential.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    (m - m.adjoint()).norm() <= tol * m.norm().max(1.0)
}

pub fn is_symmetric(m: &CMatrix, tol: f64) -> bool {
    (m - m.transpose()).norm() <= tol * m.norm().max(1.0)
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn hermitian_min_eigenvalue(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let h = (m + m.adjoint()).scale(0.5);
    h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Kronecker product `a (x) b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Complex Schur form `a = q t q^dag` with `t` upper triangular.
#[derive(Debug, Clone)]
pub struct SchurForm {
    pub q: CMatrix,
    pub t: CMatrix,
}

impl SchurForm {
    pub fn new(a: &CMatrix) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Ok(Self {
                q: CMatrix::zeros(0, 0),
                t: CMatrix::zeros(0, 0),
            });
        }
        let schur = a
            .clone()
            .try_schur(f64::EPSILON, 10_000 * n)
            .ok_or_else(|| Error::Singular("Schur iteration did not converge".into()))?;
        let (q, mut t) = schur.unpack();
        // Clear the rounding noise below the diagonal.
        for j in 0..n {
            for i in (j + 1)..n {
                t[(i, j)] = ZERO;
            }
        }
        Ok(Self { q, t })
    }

    /// Schur form of the entrywise conjugate matrix.
    pub fn conj(&self) -> Self {
        Self {
            q: self.q.map(|z| z.conj()),
            t: self.t.map(|z| z.conj()),
        }
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        (0..self.t.nrows()).map(|i| self.t[(i, i)]).collect()
    }

    pub fn spectral_abscissa(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Solves `a x + x b = c` from the Schur forms of `a` and `b`.
pub fn solve_sylvester_schur(a: &SchurForm, b: &SchurForm, c: &CMatrix) -> Result<CMatrix> {
    let n = a.t.nrows();
    let m = b.t.nrows();
    if c.shape() != (n, m) {
        return Err(Error::Singular(format!(
            "right-hand side is {:?}, expected ({n}, {m})",
            c.shape()
        )));
    }
    let scale = a.t.norm() + b.t.norm();
    let floor = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    let cp = a.q.adjoint() * c * &b.q;
    let mut y = CMatrix::zeros(n, m);
    let mut rhs = DVector::<Complex64>::zeros(n);
    for j in 0..m {
        for i in 0..n {
            let mut v = cp[(i, j)];
            for k in 0..j {
                v -= y[(i, k)] * b.t[(k, j)];
            }
            rhs[i] = v;
        }
        let shift = b.t[(j, j)];
        for i in (0..n).rev() {
            let mut v = rhs[i];
            for k in (i + 1)..n {
                v -= a.t[(i, k)] * y[(k, j)];
            }
            let d = a.t[(i, i)] + shift;
            if d.norm() <= floor {
                return Err(Error::Singular(format!(
                    "eigenvalue pair sums to zero at ({i}, {j})"
                )));
            }
            y[(i, j)] = v / d;
        }
    }
    Ok(&a.q * y * b.q.adjoint())
}

/// Solves `a x + x b = c` by Bartels-Stewart.
pub fn solve_sylvester(a: &CMatrix, b: &CMatrix, c: &CMatrix) -> Result<CMatrix> {
    solve_sylvester_schur(&SchurForm::new(a)?, &SchurForm::new(b)?, c)
}

/// Solves `a x + x b = c` through the lifted system `(I (x) a + b^T (x) I) vec(x) = vec(c)`.
///
/// `n m` unknowns; intended for small systems and cross-checks.
pub fn solve_sylvester_kron(a: &CMatrix, b: &CMatrix, c: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    let m = b.nrows();
    let lifted = kron(&CMatrix::identity(m, m), a) + kron(&b.transpose(), &CMatrix::identity(n, n));
    // Column-major storage makes the matrix slice equal to vec(c).
    let rhs = DVector::from_column_slice(c.as_slice());
    let x = lifted
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("vectorized Sylvester system".into()))?;
    Ok(CMatrix::from_column_slice(n, m, x.as_slice()))
}

/// Eigendecomposition `a = v diag(values) v^{-1}` of a diagonalizable matrix.
#[derive(Debug, Clone)]
pub struct EigenForm {
    pub values: Vec<Complex64>,
    pub vectors: CMatrix,
    pub inverse: CMatrix,
}

impl EigenForm {
    pub fn new(a: &CMatrix) -> Result<Self> {
        let schur = SchurForm::new(a)?;
        let t = &schur.t;
        let n = t.nrows();
        let smin = (f64::EPSILON * t.norm()).max(f64::MIN_POSITIVE);
        let mut y = CMatrix::zeros(n, n);
        for k in 0..n {
            let lambda = t[(k, k)];
            y[(k, k)] = ONE;
            for i in (0..k).rev() {
                let mut v = ZERO;
                for j in (i + 1)..=k {
                    v -= t[(i, j)] * y[(j, k)];
                }
                let mut d = t[(i, i)] - lambda;
                if d.norm() < smin {
                    d = Complex64::new(smin, 0.0);
                }
                y[(i, k)] = v / d;
            }
        }
        let mut vectors = &schur.q * y;
        for mut col in vectors.column_iter_mut() {
            let nrm = col.norm();
            col /= Complex64::new(nrm, 0.0);
        }
        let inverse = vectors
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("eigenvector matrix is not invertible".into()))?;
        let values = schur.eigenvalues();
        let recon = &vectors * CMatrix::from_diagonal(&DVector::from_vec(values.clone())) * &inverse;
        let err = (recon - a).norm() / a.norm().max(f64::MIN_POSITIVE);
        if !(err < 1e-9) {
            return Err(Error::Singular(format!(
                "matrix is not numerically diagonalizable (reconstruction error {err:e})"
            )));
        }
        Ok(Self {
            values,
            vectors,
            inverse,
        })
    }
}

/// Solves `a x + x b = c` in the eigenbases of `a` and `b`.
pub fn solve_sylvester_eigen(a: &EigenForm, b: &EigenForm, c: &CMatrix) -> Result<CMatrix> {
    let mut cp = &a.inverse * c * &b.vectors;
    for j in 0..cp.ncols() {
        for i in 0..cp.nrows() {
            let d = a.values[i] + b.values[j];
            if d.norm() == 0.0 {
                return Err(Error::Singular("eigenvalue pair sums to zero".into()));
            }
            cp[(i, j)] /= d;
        }
    }
    Ok(&a.vectors * cp * &b.inverse)
}

/// Frobenius norm of `a x + x b - c`, relative to the size of the terms.
pub fn sylvester_residual(a: &CMatrix, b: &CMatrix, x: &CMatrix, c: &CMatrix) -> f64 {
    let r = a * x + x * b - c;
    let scale = c.norm().max((a.norm() + b.norm()) * x.norm());
    if scale == 0.0 {
        0.0
    } else {
        r.norm() / scale
    }
}

fn one_norm(a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let nrm = one_norm(a);
    let mut squarings = 0u32;
    if nrm > 0.5 {
        squarings = (nrm / 0.5).log2().ceil() as u32;
    }
    let scaled = a.scale(0.5f64.powi(squarings as i32));
    let mut sum = CMatrix::identity(n, n);
    let mut term = CMatrix::identity(n, n);
    for k in 1..40 {
        term = &term * &scaled / Complex64::new(k as f64, 0.0);
        sum += &term;
        if one_norm(&term) <= 1e-18 * one_norm(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Symmetric positive-semidefinite square root of a real symmetric matrix.
///
/// Eigenvalues with magnitude below `clamp` are set to zero; the most negative
/// eigenvalue is returned alongside so callers can reject indefinite input.
pub fn psd_sqrt(m: &DMatrix<f64>, clamp: f64) -> (DMatrix<f64>, f64) {
    let n = m.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), 0.0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let roots = eig
        .eigenvalues
        .map(|l| if l.abs() <= clamp || l < 0.0 { 0.0 } else { l.sqrt() });
    let v = &eig.eigenvectors;
    (v * DMatrix::from_diagonal(&roots) * v.transpose(), min_eig)
}
