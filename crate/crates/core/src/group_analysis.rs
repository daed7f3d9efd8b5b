//! Spectral and structural analysis of monodromy matrices.
//!
//! Multiplicities and Jordan structure are decided by thresholds, never by
//! exact comparisons: eigenvalues are merged by single-linkage clustering and
//! block sizes come from the numerical ranks of `(T − λ̄I)ᵏ`, where `λ̄` is
//! the cluster centroid. Every report echoes the thresholds it used.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, serde_matrix, CMatrix, CVector};

/// Relative rank threshold on singular values.
pub const RANK_TOL: f64 = 1e-8;
/// Default cluster tolerance, relative to `‖T‖₂`.
pub const CLUSTER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenCluster {
    pub value: Complex64,
    pub algebraic_multiplicity: usize,
    pub geometric_multiplicity: usize,
    /// Jordan block sizes, largest first.
    pub jordan_blocks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub eigenvalues: Vec<EigenCluster>,
    pub cluster_tolerance: f64,
    pub rank_tolerance: f64,
}

impl SpectralReport {
    pub fn dimension(&self) -> usize {
        self.eigenvalues.iter().map(|c| c.algebraic_multiplicity).sum()
    }

    /// Every eigenvalue with its multiplicity, in cluster order.
    pub fn values_with_multiplicity(&self) -> Vec<Complex64> {
        self.eigenvalues
            .iter()
            .flat_map(|c| std::iter::repeat_n(c.value, c.algebraic_multiplicity))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    NoRationalInvariant,
    InconclusiveNeedsInvariantSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObstructionVerdict {
    pub centralizer_spectrum: Vec<Complex64>,
    pub has_double_pair_structure: bool,
    pub one_in_spectrum_infinity: bool,
    pub verdict: Verdict,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockDiagonalization {
    /// Columns 0–1 span the generalized eigenspace of the first eigenvalue,
    /// columns 2–3 that of the second.
    #[serde(with = "serde_matrix")]
    pub basis: CMatrix,
    pub eigenvalues: [Complex64; 2],
    /// Per generator, the two diagonal 2×2 blocks in the new basis.
    pub blocks: Vec<[Block; 2]>,
    /// Largest off-diagonal block entry relative to the generator's size.
    pub off_diagonal_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Block(#[serde(with = "serde_matrix")] pub CMatrix);

/// Default cluster tolerance for `t`.
pub fn default_cluster_tol(t: &CMatrix) -> f64 {
    CLUSTER_TOL * linalg::spectral_norm(t).max(f64::MIN_POSITIVE)
}

/// Single-linkage clusters of `values`: two values share a cluster when a
/// chain of pairwise distances ≤ `tol` connects them. Clusters are sorted by
/// centroid (real part, then imaginary part).
pub fn cluster(values: &[Complex64], tol: f64) -> Vec<(Complex64, Vec<usize>)> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (values[i] - values[j]).norm() <= tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        match groups.iter_mut().find(|(r, _)| *r == root) {
            Some((_, members)) => members.push(i),
            None => groups.push((root, vec![i])),
        }
    }
    let mut out: Vec<(Complex64, Vec<usize>)> = groups
        .into_iter()
        .map(|(_, members)| {
            let sum: Complex64 = members.iter().map(|&i| values[i]).sum();
            (sum / members.len() as f64, members)
        })
        .collect();
    out.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
    out
}

/// Clustered eigenvalues with multiplicities and Jordan block sizes.
pub fn spectrum(t: &CMatrix, cluster_tol: f64) -> Result<SpectralReport> {
    let n = t.nrows();
    let values = linalg::eigenvalues(t)?;
    let scale = linalg::spectral_norm(t).max(f64::MIN_POSITIVE);
    let mut clusters = Vec::new();
    for (centroid, members) in cluster(&values, cluster_tol) {
        let alg = members.len();
        let shifted = t - linalg::identity(n) * centroid;
        // nullities d_k of (T − λ̄I)^k, k = 0..=alg
        let mut nullity = vec![0usize];
        let mut power = linalg::identity(n);
        for k in 1..=alg {
            power = &power * &shifted;
            let threshold = (RANK_TOL * scale.powi(k as i32))
                .max(cluster_tol * scale.powi(k as i32 - 1));
            let d = (n - linalg::rank(&power, threshold)).min(alg);
            nullity.push(d);
        }
        if nullity[alg] != alg || nullity.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::IllConditioned(format!(
                "rank sequence {nullity:?} inconsistent with multiplicity {alg} at {centroid}"
            )));
        }
        // at_least[k] = number of blocks of size ≥ k+1
        let at_least: Vec<usize> = nullity.windows(2).map(|w| w[1] - w[0]).collect();
        if at_least.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::IllConditioned(format!(
                "rank sequence {nullity:?} is not convex at {centroid}"
            )));
        }
        let mut blocks = Vec::new();
        for size in (1..=alg).rev() {
            let count = at_least[size - 1] - at_least.get(size).copied().unwrap_or(0);
            blocks.extend(std::iter::repeat_n(size, count));
        }
        clusters.push(EigenCluster {
            value: centroid,
            algebraic_multiplicity: alg,
            geometric_multiplicity: nullity[1],
            jordan_blocks: blocks,
        });
    }
    Ok(SpectralReport {
        eigenvalues: clusters,
        cluster_tolerance: cluster_tol,
        rank_tolerance: RANK_TOL,
    })
}

/// `‖(T − I)ⁿ‖ ≤ tol·‖T‖ⁿ` (Frobenius norms).
pub fn is_unipotent(t: &CMatrix, tol: f64) -> bool {
    unipotency_defect(t) <= tol
}

/// `‖(T − I)ⁿ‖ / ‖T‖ⁿ`.
pub fn unipotency_defect(t: &CMatrix) -> f64 {
    let n = t.nrows();
    let shifted = t - linalg::identity(n);
    let scale = linalg::frobenius(t).max(f64::MIN_POSITIVE);
    linalg::frobenius(&linalg::mat_pow(&shifted, n)) / scale.powi(n as i32)
}

/// `T∞ + T∞⁻¹ − 2·Id`, which commutes with every generator of the group
/// in the cases of interest.
pub fn centralizer_element(t_inf: &CMatrix) -> Result<CMatrix> {
    let n = t_inf.nrows();
    let inv = linalg::inverse(t_inf)?;
    Ok(t_inf + inv - linalg::identity(n) * Complex64::new(2.0, 0.0))
}

/// `‖XY − YX‖ / (‖X‖·‖Y‖)`, zero when either factor vanishes.
pub fn commutation_defect(x: &CMatrix, y: &CMatrix) -> f64 {
    let scale = linalg::frobenius(x) * linalg::frobenius(y);
    if scale == 0.0 {
        return 0.0;
    }
    linalg::frobenius(&linalg::commutator(x, y)) / scale
}

pub fn commutes(x: &CMatrix, y: &CMatrix, tol: f64) -> bool {
    commutation_defect(x, y) <= tol
}

/// Basis of a 2-dimensional subspace in reduced column form: the two rows
/// with the best-conditioned 2×2 minor become the identity, then columns are
/// normalised.
fn canonical_pair(vectors: &[CVector]) -> CMatrix {
    let n = vectors[0].len();
    let v = CMatrix::from_columns(vectors);
    let mut best = (0, 1, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let det = (v[(i, 0)] * v[(j, 1)] - v[(i, 1)] * v[(j, 0)]).norm();
            if det > best.2 * (1.0 + 1e-12) {
                best = (i, j, det);
            }
        }
    }
    let minor = CMatrix::from_row_slice(
        2,
        2,
        &[v[(best.0, 0)], v[(best.0, 1)], v[(best.1, 0)], v[(best.1, 1)]],
    );
    let mut out = match minor.clone().lu().try_inverse() {
        Some(inv) => &v * inv,
        None => v,
    };
    for mut col in out.column_iter_mut() {
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            col /= Complex64::new(norm, 0.0);
        }
    }
    out
}

/// Common 2+2 block-diagonal form of generators commuting with `t`, where
/// `t` has spectrum `{σ₁, σ₁, σ₂, σ₂}` with `σ₁ ≠ σ₂`.
pub fn simultaneous_block_diagonalize(
    generators: &[CMatrix],
    t: &CMatrix,
    tol: f64,
) -> Result<BlockDiagonalization> {
    let n = t.nrows();
    if n != 4 {
        return Err(Error::SpectrumShapeMismatch(format!(
            "expected a 4x4 matrix, got {n}x{n}"
        )));
    }
    let values = linalg::eigenvalues(t)?;
    let clusters = cluster(&values, tol * linalg::spectral_norm(t).max(1.0));
    if clusters.len() != 2 || clusters.iter().any(|(_, m)| m.len() != 2) {
        return Err(Error::SpectrumShapeMismatch(format!(
            "spectrum {values:?} is not of the form {{σ₁, σ₁, σ₂, σ₂}}"
        )));
    }
    for g in generators {
        let residual = commutation_defect(g, t);
        if residual > tol {
            return Err(Error::CommutationViolated {
                residual,
                tolerance: tol,
            });
        }
    }
    let eigenvalues = [clusters[0].0, clusters[1].0];
    let mut columns = Vec::new();
    for &sigma in &eigenvalues {
        let shifted = t - linalg::identity(n) * sigma;
        let squared = &shifted * &shifted;
        let pair = canonical_pair(&linalg::smallest_singular_vectors(&squared, 2));
        columns.extend(pair.column_iter().map(|c| c.into_owned()));
    }
    let basis = CMatrix::from_columns(&columns);
    let inv = linalg::inverse(&basis)?;
    let mut blocks = Vec::with_capacity(generators.len());
    let mut off_diagonal_residual: f64 = 0.0;
    for g in generators {
        let conj = &inv * g * &basis;
        let scale = linalg::max_abs(g).max(f64::MIN_POSITIVE);
        let off = linalg::max_abs(&conj.view((0, 2), (2, 2)).into_owned())
            .max(linalg::max_abs(&conj.view((2, 0), (2, 2)).into_owned()));
        off_diagonal_residual = off_diagonal_residual.max(off / scale);
        blocks.push([
            Block(conj.view((0, 0), (2, 2)).into_owned()),
            Block(conj.view((2, 2), (2, 2)).into_owned()),
        ]);
    }
    Ok(BlockDiagonalization {
        basis,
        eigenvalues,
        blocks,
        off_diagonal_residual,
    })
}

/// `‖conj(T₁)⁻¹ − T₂‖ / ‖T₂‖` with entrywise conjugation.
pub fn reflection_defect(t1: &CMatrix, t2: &CMatrix) -> Result<f64> {
    let mirrored = linalg::inverse(&linalg::conj(t1))?;
    Ok(linalg::frobenius(&(mirrored - t2)) / linalg::frobenius(t2).max(f64::MIN_POSITIVE))
}

pub fn verify_reflection_symmetry(t1: &CMatrix, t2: &CMatrix, tol: f64) -> Result<bool> {
    linalg::inverse(t2)?;
    Ok(reflection_defect(t1, t2)? <= tol)
}

/// Sufficient test for the absence of rational invariants: the centralizer
/// element has spectrum `{σ₁, σ₁, σ₂, σ₂}` with `σ₁ ≠ σ₂` and `1` is not an
/// eigenvalue of `T∞`. Both eigenvalue comparisons use `tol`.
pub fn rational_invariant_obstruction(t_inf: &CMatrix, tol: f64) -> Result<ObstructionVerdict> {
    let t = centralizer_element(t_inf)?;
    let mut centralizer_spectrum = linalg::eigenvalues(&t)?;
    centralizer_spectrum.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let clusters = cluster(&centralizer_spectrum, tol);
    let has_double_pair_structure = t.nrows() == 4
        && clusters.len() == 2
        && clusters.iter().all(|(_, m)| m.len() == 2)
        && (clusters[0].0 - clusters[1].0).norm() > tol;
    let one_in_spectrum_infinity = linalg::eigenvalues(t_inf)?
        .iter()
        .any(|z| (z - Complex64::new(1.0, 0.0)).norm() <= tol);
    let verdict = if has_double_pair_structure && !one_in_spectrum_infinity {
        Verdict::NoRationalInvariant
    } else {
        Verdict::InconclusiveNeedsInvariantSearch
    };
    Ok(ObstructionVerdict {
        centralizer_spectrum,
        has_double_pair_structure,
        one_in_spectrum_infinity,
        verdict,
        tolerance: tol,
    })
}
