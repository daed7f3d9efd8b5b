//! Small dense complex linear-algebra helpers shared by the analysis modules.
//!
//! Everything here works on `DMatrix<Complex64>`; the matrices in this crate are
//! tiny (n ≤ ~10), so clarity wins over blocking or BLAS.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_norm(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Entrywise complex conjugate (no transpose).
pub fn conj(m: &CMatrix) -> CMatrix {
    m.map(|z| z.conj())
}

pub fn commutator(x: &CMatrix, y: &CMatrix) -> CMatrix {
    x * y - y * x
}

pub fn mat_pow(m: &CMatrix, k: usize) -> CMatrix {
    let mut out = identity(m.nrows());
    for _ in 0..k {
        out = &out * m;
    }
    out
}

/// Inverse via LU. Fails when the matrix is singular or the inverse is not finite.
pub fn inverse(m: &CMatrix) -> Result<CMatrix> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "cannot invert {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = max_abs(m);
    if scale == 0.0 {
        return Err(Error::SingularMatrix);
    }
    let inv = m.clone().lu().try_inverse().ok_or(Error::SingularMatrix)?;
    if !is_finite(&inv) || max_abs(&inv) * scale > 1.0 / f64::EPSILON {
        return Err(Error::SingularMatrix);
    }
    Ok(inv)
}

/// Singular values sorted descending together with the matching right singular vectors.
pub fn svd_sorted(m: &CMatrix) -> (Vec<f64>, Vec<CVector>) {
    let cols = m.ncols();
    // nalgebra returns a thin SVD; pad to at least `cols` rows so every
    // right singular vector is present.
    let padded = if m.nrows() < cols {
        let mut p = CMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| v_t.row(i).transpose().map(|z| z.conj()))
        .collect();
    (values, vectors)
}

pub fn spectral_norm(m: &CMatrix) -> f64 {
    svd_sorted(m).0.first().copied().unwrap_or(0.0)
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(m: &CMatrix) -> f64 {
    let (s, _) = svd_sorted(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Orthonormal basis of the null space: right singular vectors whose singular
/// value is at most `rel_tol` times the largest one. A zero matrix has a full
/// null space.
pub fn null_space(m: &CMatrix, rel_tol: f64) -> (Vec<CVector>, Vec<f64>) {
    let (values, vectors) = svd_sorted(m);
    let top = values.first().copied().unwrap_or(0.0);
    let basis = values
        .iter()
        .zip(vectors)
        .filter(|(s, _)| top == 0.0 || **s <= rel_tol * top)
        .map(|(_, v)| normalize_phase(&v))
        .collect();
    (basis, values)
}

/// The `k` right singular vectors belonging to the smallest singular values.
pub fn smallest_singular_vectors(m: &CMatrix, k: usize) -> Vec<CVector> {
    let (_, vectors) = svd_sorted(m);
    let start = vectors.len().saturating_sub(k);
    vectors[start..].to_vec()
}

/// Numerical rank with an absolute threshold on the singular values.
pub fn rank(m: &CMatrix, abs_tol: f64) -> usize {
    svd_sorted(m).0.iter().filter(|&&s| s > abs_tol).count()
}

/// Scale to unit norm with the largest-modulus entry real positive.
pub fn normalize_phase(v: &CVector) -> CVector {
    let norm = vec_norm(v);
    if norm == 0.0 {
        return v.clone();
    }
    let mut pivot = ZERO;
    for z in v.iter() {
        // strict comparison keeps the first of equal-modulus entries
        if z.norm() > pivot.norm() * (1.0 + 1e-12) {
            pivot = *z;
        }
    }
    let phase = pivot.conj() / pivot.norm();
    v.map(|z| z * phase / norm)
}

/// Eigenvalues via the complex Schur form. The Schur residual is checked
/// against `n·1e-10·‖m‖`. The QR iteration can stall on nearly scalar
/// matrices; the trace-shifted, rescaled matrix and then a fixed unitary
/// similarity are tried before giving up.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalues of {}x{} matrix",
            n,
            m.ncols()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if !is_finite(m) {
        return Err(Error::IllConditioned("matrix has non-finite entries".into()));
    }
    if let Some(ev) = schur_eigenvalues(m)? {
        return Ok(ev);
    }
    let mu = m.trace() / n as f64;
    let shifted = m - identity(n) * mu;
    let spread = frobenius(&shifted);
    if spread == 0.0 {
        return Ok(vec![mu; n]);
    }
    if let Some(ev) = schur_eigenvalues(&(shifted / Complex64::new(spread, 0.0)))? {
        return Ok(ev.into_iter().map(|z| z * spread + mu).collect());
    }
    let q = fixed_unitary(n);
    if let Some(ev) = schur_eigenvalues(&(&q * m * q.adjoint()))? {
        return Ok(ev);
    }
    Err(Error::IllConditioned("Schur iteration did not converge".into()))
}

fn schur_eigenvalues(m: &CMatrix) -> Result<Option<Vec<Complex64>>> {
    let n = m.nrows();
    let Some(schur) = Schur::try_new(m.clone(), f64::EPSILON, 10_000) else {
        return Ok(None);
    };
    let (q, t) = schur.unpack();
    let residual = frobenius(&(&q * &t * q.adjoint() - m));
    let bound = 1e-10 * (n as f64) * frobenius(m).max(f64::MIN_POSITIVE);
    if residual > bound {
        return Err(Error::IllConditioned(format!(
            "Schur residual {residual:e} exceeds {bound:e}"
        )));
    }
    Ok(Some((0..n).map(|i| t[(i, i)]).collect()))
}

/// Unitary factor of the QR decomposition of a fixed dense matrix.
fn fixed_unitary(n: usize) -> CMatrix {
    let a = CMatrix::from_fn(n, n, |i, j| {
        let k = (i * n + j) as f64;
        Complex64::new((1.3 * k + 0.7).sin(), (0.9 * k + 0.2).cos())
    });
    a.qr().q()
}

/// Square matrix from row-major nested rows.
pub fn from_rows(rows: &[Vec<Complex64>]) -> CMatrix {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    CMatrix::from_fn(n, m, |i, j| rows[i][j])
}

pub fn to_rows(m: &CMatrix) -> Vec<Vec<Complex64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn real_matrix(rows: &[&[f64]]) -> CMatrix {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    CMatrix::from_fn(n, m, |i, j| Complex64::new(rows[i][j], 0.0))
}

pub fn diag(values: &[Complex64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_column_slice(values))
}

/// Block-diagonal matrix from square blocks.
pub fn block_diag(blocks: &[CMatrix]) -> CMatrix {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMatrix::zeros(n, n);
    let mut offset = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((offset, offset), (k, k)).copy_from(b);
        offset += k;
    }
    out
}

/// Serde adapters writing matrices as nested `[[[re, im], ...], ...]` rows.
pub mod serde_matrix {
    use super::{from_rows, to_rows, CMatrix};
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        let rows = Vec::<Vec<Complex64>>::deserialize(d)?;
        if rows.iter().any(|r| r.len() != rows.first().map_or(0, Vec::len)) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(from_rows(&rows))
    }

    pub mod vec {
        use super::super::{to_rows, CMatrix};
        use serde::{Serialize, Serializer};

        pub fn serialize<S: Serializer>(ms: &[CMatrix], s: S) -> Result<S::Ok, S::Error> {
            ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
        }
    }
}

/// Serde adapters writing vectors as `[[re, im], ...]`.
pub mod serde_vector {
    use super::CVector;
    use num_complex::Complex64;
    use serde::{Serialize, Serializer};

    fn entries(v: &CVector) -> Vec<Complex64> {
        v.iter().copied().collect()
    }

    pub fn serialize<S: Serializer>(v: &CVector, s: S) -> Result<S::Ok, S::Error> {
        entries(v).serialize(s)
    }

    pub mod vec {
        use super::{entries, CVector};
        use serde::{Serialize, Serializer};

        pub fn serialize<S: Serializer>(vs: &[CVector], s: S) -> Result<S::Ok, S::Error> {
            vs.iter().map(entries).collect::<Vec<_>>().serialize(s)
        }
    }

    pub mod option {
        use super::{entries, CVector};
        use serde::{Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<CVector>, s: S) -> Result<S::Ok, S::Error> {
            v.as_ref().map(entries).serialize(s)
        }
    }
}
