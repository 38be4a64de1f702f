//! Dense linear-algebra helpers shared by the solvers.
//!
//! Everything works on `nalgebra` dynamic matrices. Zero-sized matrices are
//! legal inputs (a game without an environment state has `n0 = 0`), so each
//! helper short-circuits on empty shapes instead of handing them to a
//! factorization.

use nalgebra::{Cholesky, Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Minimum eigenvalue of the symmetric part of `m` (`+inf` for an empty matrix).
pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(sym(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn require_square(m: &Mat, name: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim(
            name,
            "square matrix".to_string(),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

pub fn require_shape(m: &Mat, rows: usize, cols: usize, name: &str) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::dim(
            name,
            format!("{rows}x{cols}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

/// Symmetry tolerance used by every definiteness check.
pub const SYMMETRY_TOL: f64 = 1e-9;

pub fn require_symmetric(m: &Mat, name: &str) -> Result<()> {
    require_square(m, name)?;
    let scale = 1.0 + m.amax();
    if (m - m.transpose()).amax() > SYMMETRY_TOL * scale {
        return Err(Error::InvalidValue {
            field: name.to_string(),
            message: "matrix is not symmetric".into(),
        });
    }
    Ok(())
}

pub fn require_pd(m: &Mat, name: &str) -> Result<()> {
    require_symmetric(m, name)?;
    let min = min_sym_eigenvalue(m);
    if m.nrows() > 0 && min <= 0.0 {
        return Err(Error::Definiteness {
            matrix: name.to_string(),
            kind: "definite",
            min_eigenvalue: min,
        });
    }
    Ok(())
}

/// Covariances may be singular; a small negative eigenvalue from rounding
/// in decimal input is tolerated.
pub fn require_psd(m: &Mat, name: &str) -> Result<()> {
    require_symmetric(m, name)?;
    let min = min_sym_eigenvalue(m);
    let tol = 1e-10 * (1.0 + m.amax());
    if m.nrows() > 0 && min < -tol {
        return Err(Error::Definiteness {
            matrix: name.to_string(),
            kind: "semidefinite",
            min_eigenvalue: min,
        });
    }
    Ok(())
}

/// Solves `s x = rhs` for symmetric positive-definite `s` via Cholesky.
/// A failed factorization is reported with the minimum eigenvalue; there is
/// no pseudo-inverse fallback.
pub fn spd_solve(s: &Mat, rhs: &Mat, name: &str) -> Result<Mat> {
    if s.nrows() == 0 {
        return Ok(Mat::zeros(0, rhs.ncols()));
    }
    match Cholesky::new(sym(s)) {
        Some(ch) => Ok(ch.solve(rhs)),
        None => Err(Error::Definiteness {
            matrix: name.to_string(),
            kind: "definite",
            min_eigenvalue: min_sym_eigenvalue(s),
        }),
    }
}

pub fn spd_solve_vec(s: &Mat, rhs: &Vector, name: &str) -> Result<Vector> {
    let m = spd_solve(s, &Mat::from_column_slice(rhs.len(), 1, rhs.as_slice()), name)?;
    Ok(m.column(0).into_owned())
}

/// Moore-Penrose pseudo-inverse with relative singular-value cutoff.
///
/// Used only for Gaussian conditioning, where a degenerate observation
/// covariance is a legitimate input and the pseudo-inverse gives the exact
/// conditional mean.
pub fn pinv(m: &Mat) -> Mat {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Mat::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = smax * 1e-12 * (m.nrows().max(m.ncols()) as f64);
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let mut out = Mat::zeros(m.ncols(), m.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += vt.row(i).transpose() * u.column(i).transpose() / s;
        }
    }
    out
}

/// Condition number in the 2-norm (`inf` when singular).
pub fn condition_number(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn eigenvalues(m: &Mat) -> Vec<Complex<f64>> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.clone().complex_eigenvalues().iter().copied().collect()
}

pub fn spectral_radius(m: &Mat) -> f64 {
    eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigenvalue of largest modulus.
pub fn dominant_eigenvalue(m: &Mat) -> Option<Complex<f64>> {
    eigenvalues(m)
        .into_iter()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
}

/// PBH test: every eigenvalue of `a` with modulus >= 1 must satisfy
/// `rank [a - lambda I, b] = n`. Returns the first uncontrollable unstable
/// eigenvalue, if any. `tol` bounds the smallest singular value relative to
/// the scale of the test matrix.
pub fn uncontrollable_unstable_mode(a: &Mat, b: &Mat, tol: f64) -> Option<Complex<f64>> {
    let n = a.nrows();
    if n == 0 {
        return None;
    }
    for lambda in eigenvalues(a) {
        if lambda.norm() < 1.0 {
            continue;
        }
        let mut test = DMatrix::<Complex<f64>>::zeros(n, n + b.ncols());
        for i in 0..n {
            for j in 0..n {
                test[(i, j)] = Complex::new(a[(i, j)], 0.0);
            }
            test[(i, i)] -= lambda;
            for j in 0..b.ncols() {
                test[(i, n + j)] = Complex::new(b[(i, j)], 0.0);
            }
        }
        let sv = test.singular_values();
        let max = sv.iter().copied().fold(0.0, f64::max);
        let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if min <= tol * max.max(1.0) {
            return Some(lambda);
        }
    }
    None
}

/// Solves the Stein equation `p = a p a' + q` by the doubling iteration.
/// Requires `spectral_radius(a) < 1`.
pub fn stein(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let rho = spectral_radius(a);
    if rho >= 1.0 {
        return Err(Error::InstabilityDetected {
            what: "Stein equation generator".into(),
            spectral_radius: rho,
        });
    }
    let mut p = q.clone();
    let mut ak = a.clone();
    for _ in 0..64 {
        let next = &p + &ak * &p * ak.transpose();
        let delta = (&next - &p).amax();
        p = next;
        ak = &ak * &ak;
        if delta <= 1e-16 * (1.0 + p.amax()) || ak.amax() < 1e-300 {
            break;
        }
    }
    Ok(sym(&p))
}

/// Solves `y = rhs + gen * y * right` for `y` (n x k) by vectorization.
pub fn stein_general(gen: &Mat, right: &Mat, rhs: &Mat) -> Result<Mat> {
    let (n, k) = (gen.nrows(), right.nrows());
    if n == 0 || k == 0 {
        return Ok(Mat::zeros(n, k));
    }
    // vec(gen y right) = (right' kron gen) vec(y)
    let op = Mat::identity(n * k, n * k) - right.transpose().kronecker(gen);
    let rhs_vec = Vector::from_column_slice(rhs.as_slice());
    let sol = op.lu().solve(&rhs_vec).ok_or_else(|| Error::InstabilityDetected {
        what: "geometric gain series".into(),
        spectral_radius: spectral_radius(gen) * spectral_radius(right),
    })?;
    Ok(Mat::from_column_slice(n, k, sol.as_slice()))
}

/// A factor `l` with `l l' = m` for symmetric PSD `m` (negative rounding
/// eigenvalues clamped to zero).
pub fn psd_sqrt(m: &Mat) -> Mat {
    let n = m.nrows();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    if let Some(ch) = Cholesky::new(sym(m)) {
        return ch.l();
    }
    let eig = SymmetricEigen::new(sym(m));
    let mut out = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        for i in 0..n {
            out[(i, j)] *= s;
        }
    }
    out
}

pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn vstack(blocks: &[&Mat]) -> Mat {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

pub fn hstack(blocks: &[&Mat]) -> Mat {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

pub fn vstack_vec(parts: &[&Vector]) -> Vector {
    let len: usize = parts.iter().map(|v| v.len()).sum();
    let mut out = Vector::zeros(len);
    let mut r = 0;
    for v in parts {
        out.rows_mut(r, v.len()).copy_from(*v);
        r += v.len();
    }
    out
}

pub fn col(v: &Vector) -> Mat {
    Mat::from_column_slice(v.len(), 1, v.as_slice())
}

pub fn frobenius(m: &Mat) -> f64 {
    m.norm()
}
