//! Polynomial invariants of degree one and two for a finitely generated
//! matrix group, and the permutation action on a pair of dual eigenvectors.
//!
//! A linear invariant is a vector `w` with `Tᵢᵀw = w`, i.e. the linear form
//! `x ↦ Σ wⱼxⱼ` is preserved. A quadratic invariant is a symmetric `Q` with
//! `TᵢᵀQTᵢ = Q`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group_analysis;
use crate::linalg::{self, serde_matrix, serde_vector, CMatrix, CVector};

pub const NULL_SPACE_TOL: f64 = 1e-8;
pub const CLASSIFICATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearInvariantBasis {
    #[serde(with = "serde_vector::vec")]
    pub vectors: Vec<CVector>,
    /// `max ‖Tᵢᵀw − w‖` for each vector.
    pub residuals: Vec<f64>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticForm(#[serde(with = "serde_matrix")] pub CMatrix);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticInvariantBasis {
    pub forms: Vec<QuadraticForm>,
    /// `max ‖TᵢᵀQTᵢ − Q‖` for each form.
    pub residuals: Vec<f64>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PairAction {
    /// Both generators exchange `w` and `w̄`.
    Swap,
    /// Both generators fix `w` and `w̄`.
    Fix,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationPairReport {
    pub p: Complex64,
    #[serde(with = "serde_vector")]
    pub w: CVector,
    #[serde(with = "serde_vector")]
    pub w_bar: CVector,
    pub case: PairAction,
    #[serde(with = "serde_vector::option")]
    pub produced_invariant: Option<CVector>,
    /// Largest deviation from the matched permutation, per generator.
    pub residuals: [f64; 2],
    /// Set when the reality relation `T₂ = conj(T₁)⁻¹` held and `w̄` was taken
    /// as the conjugate of `w`.
    pub conjugate_pairing: bool,
    pub tolerance: f64,
}

fn stacked(blocks: Vec<CMatrix>, cols: usize) -> CMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMatrix::zeros(rows.max(1), cols);
    let mut offset = 0;
    for b in blocks {
        out.view_mut((offset, 0), (b.nrows(), cols)).copy_from(&b);
        offset += b.nrows();
    }
    out
}

pub fn linear_residual(generators: &[CMatrix], w: &CVector) -> f64 {
    generators
        .iter()
        .map(|t| linalg::vec_norm(&(t.transpose() * w - w)))
        .fold(0.0, f64::max)
}

pub fn quadratic_residual(generators: &[CMatrix], q: &CMatrix) -> f64 {
    generators
        .iter()
        .map(|t| linalg::frobenius(&(t.transpose() * q * t - q)))
        .fold(0.0, f64::max)
}

/// Orthonormal basis of `{w : Tᵢᵀw = w for all i}`.
pub fn linear_invariants(generators: &[CMatrix], tol: f64) -> LinearInvariantBasis {
    let n = generators.first().map_or(0, |g| g.nrows());
    let op = stacked(
        generators
            .iter()
            .map(|t| t.transpose() - linalg::identity(n))
            .collect(),
        n,
    );
    let (vectors, _) = linalg::null_space(&op, tol);
    let residuals = vectors.iter().map(|w| linear_residual(generators, w)).collect();
    LinearInvariantBasis {
        vectors,
        residuals,
        tolerance: tol,
    }
}

/// Orthonormal basis of the symmetric `n×n` matrices: `E_aa` and
/// `(E_ab + E_ba)/√2`.
fn symmetric_basis(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for a in 0..n {
        for b in a..n {
            out.push((a, b));
        }
    }
    out
}

fn symmetric_element(n: usize, (a, b): (usize, usize)) -> CMatrix {
    let mut e = CMatrix::zeros(n, n);
    if a == b {
        e[(a, a)] = linalg::ONE;
    } else {
        let v = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        e[(a, b)] = v;
        e[(b, a)] = v;
    }
    e
}

/// Coordinates of a symmetric matrix in the orthonormal symmetric basis.
fn symmetric_coordinates(m: &CMatrix, basis: &[(usize, usize)]) -> Vec<Complex64> {
    basis
        .iter()
        .map(|&(a, b)| {
            if a == b {
                m[(a, a)]
            } else {
                (m[(a, b)] + m[(b, a)]) * std::f64::consts::FRAC_1_SQRT_2
            }
        })
        .collect()
}

/// Orthonormal (trace inner product) basis of symmetric `Q` with
/// `TᵢᵀQTᵢ = Q` for all `i`.
pub fn quadratic_invariants(generators: &[CMatrix], tol: f64) -> QuadraticInvariantBasis {
    let n = generators.first().map_or(0, |g| g.nrows());
    let basis = symmetric_basis(n);
    let dim = basis.len();
    let elements: Vec<CMatrix> = basis.iter().map(|&ab| symmetric_element(n, ab)).collect();
    let blocks = generators
        .iter()
        .map(|t| {
            let mut block = CMatrix::zeros(dim, dim);
            for (k, e) in elements.iter().enumerate() {
                let image = t.transpose() * e * t - e;
                for (r, v) in symmetric_coordinates(&image, &basis).into_iter().enumerate() {
                    block[(r, k)] = v;
                }
            }
            block
        })
        .collect();
    let (coords, _) = linalg::null_space(&stacked(blocks, dim), tol);
    let forms: Vec<QuadraticForm> = coords
        .iter()
        .map(|c| {
            QuadraticForm(
                elements
                    .iter()
                    .zip(c.iter())
                    .fold(CMatrix::zeros(n, n), |acc, (e, &x)| acc + e * x),
            )
        })
        .collect();
    let residuals = forms.iter().map(|q| quadratic_residual(generators, &q.0)).collect();
    QuadraticInvariantBasis {
        forms,
        residuals,
        tolerance: tol,
    }
}

/// Distance of `v` from the span of the orthonormal `forms`, relative to `‖v‖`.
pub fn distance_to_span(forms: &[QuadraticForm], v: &CMatrix) -> f64 {
    let mut rest = v.clone();
    for q in forms {
        let coeff: Complex64 = q.0.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
        rest -= &q.0 * coeff;
    }
    linalg::frobenius(&rest) / linalg::frobenius(v).max(f64::MIN_POSITIVE)
}

fn eigenvector_of_transpose(t: &CMatrix, value: Complex64, tol: f64) -> Result<CVector> {
    let n = t.nrows();
    let shifted = t.transpose() - linalg::identity(n) * value;
    let scale = linalg::spectral_norm(t).max(f64::MIN_POSITIVE);
    let (values, vectors) = linalg::svd_sorted(&shifted);
    let kernel = values.iter().filter(|&&s| s <= tol * scale).count();
    if kernel != 1 {
        return Err(Error::PreconditionFailed(format!(
            "eigenspace of T∞ᵀ for {value} has dimension {kernel}, expected 1"
        )));
    }
    Ok(linalg::normalize_phase(&vectors[n - 1]))
}

/// `a` is nonzero and lies in the span of `b` up to `tol·‖a‖`.
fn parallel(a: &CVector, b: &CVector, tol: f64) -> bool {
    let (na, nb) = (linalg::vec_norm(a), linalg::vec_norm(b));
    if na <= tol || nb == 0.0 {
        return false;
    }
    let coeff: Complex64 = b.iter().zip(a.iter()).map(|(x, y)| x.conj() * y).sum::<Complex64>() / (nb * nb);
    linalg::vec_norm(&(a - b * coeff)) <= tol * na
}

/// How `t` acts on the pair: returns the best-matching action and its
/// residual relative to `‖w‖`.
fn pair_action(t: &CMatrix, w: &CVector, w_bar: &CVector) -> (PairAction, f64) {
    let tt = t.transpose();
    let (tw, twb) = (&tt * w, &tt * w_bar);
    let scale = linalg::vec_norm(w).max(linalg::vec_norm(w_bar));
    let fix = linalg::vec_norm(&(&tw - w)).max(linalg::vec_norm(&(&twb - w_bar))) / scale;
    let swap = linalg::vec_norm(&(&tw - w_bar)).max(linalg::vec_norm(&(&twb - w))) / scale;
    if swap < fix {
        (PairAction::Swap, swap)
    } else {
        (PairAction::Fix, fix)
    }
}

/// Eigenvectors `w`, `w̄` of `T∞ᵀ` for `p`, `p⁻¹`, and the action of
/// `T₁ᵀ`, `T₂ᵀ` on them. Requires `Spectr(T∞) = {p, p, p⁻¹, p⁻¹}` with
/// one-dimensional eigenspaces and `p ≠ p⁻¹`.
///
/// `w` has its largest entry real positive. When `T₂ = conj(T₁)⁻¹` holds and
/// `conj(w)` is an eigenvector for `p⁻¹`, `w̄ = conj(w)`. If `T₁ᵀw` is parallel
/// to `w̄`, `w̄` is rescaled to `T₁ᵀw` so a swap shows up exactly.
pub fn permutation_pair_structure(
    t1: &CMatrix,
    t2: &CMatrix,
    t_inf: &CMatrix,
    tol: f64,
) -> Result<PermutationPairReport> {
    let n = t_inf.nrows();
    let values = linalg::eigenvalues(t_inf)?;
    let clusters = group_analysis::cluster(&values, tol * linalg::spectral_norm(t_inf).max(1.0));
    let shape_ok = n == 4
        && clusters.len() == 2
        && clusters.iter().all(|(_, m)| m.len() == 2)
        && (clusters[0].0 * clusters[1].0 - linalg::ONE).norm() <= tol.sqrt();
    if !shape_ok {
        return Err(Error::PreconditionFailed(format!(
            "spectrum {values:?} is not of the form {{p, p, p⁻¹, p⁻¹}}"
        )));
    }
    // p is the member with non-negative argument, for a deterministic choice
    let (p, q) = if clusters[0].0.arg() >= clusters[1].0.arg() {
        (clusters[0].0, clusters[1].0)
    } else {
        (clusters[1].0, clusters[0].0)
    };
    let w = eigenvector_of_transpose(t_inf, p, tol)?;
    let mut w_bar = eigenvector_of_transpose(t_inf, q, tol)?;

    let conjugate_pairing = group_analysis::reflection_defect(t1, t2)? <= tol;
    if conjugate_pairing {
        let conj_w = w.map(|z| z.conj());
        if parallel(&conj_w, &w_bar, tol) {
            w_bar = conj_w;
        }
    }
    // fix the relative scale so that a swap by T₁ᵀ is exact
    let image = t1.transpose() * &w;
    if parallel(&image, &w_bar, tol) {
        w_bar = image;
    }

    let (a1, r1) = pair_action(t1, &w, &w_bar);
    let (a2, r2) = pair_action(t2, &w, &w_bar);
    let case = if a1 == a2 && r1 <= tol && r2 <= tol {
        a1
    } else {
        PairAction::Neither
    };
    let produced_invariant = (case == PairAction::Swap).then(|| &w + &w_bar);
    Ok(PermutationPairReport {
        p,
        w,
        w_bar,
        case,
        produced_invariant,
        residuals: [r1, r2],
        conjugate_pairing,
        tolerance: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::linalg::{block_diag, diag, identity, real_matrix};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_has_full_invariant_spaces() {
        let lin = linear_invariants(&[identity(3)], NULL_SPACE_TOL);
        assert_eq!(lin.vectors.len(), 3);
        let quad = quadratic_invariants(&[identity(3)], NULL_SPACE_TOL);
        assert_eq!(quad.forms.len(), 6);
    }

    #[test]
    fn shear_preserves_second_coordinate() {
        let lin = linear_invariants(&[real_matrix(&[&[1.0, 1.0], &[0.0, 1.0]])], NULL_SPACE_TOL);
        assert_eq!(lin.vectors.len(), 1);
        let w = &lin.vectors[0];
        assert!(w[0].norm() < 1e-14 && (w[1] - linalg::ONE).norm() < 1e-14);
    }

    #[test]
    fn hyperbolic_diagonal() {
        let g = [diag(&[c(2.0, 0.0), c(0.5, 0.0)])];
        assert!(linear_invariants(&g, NULL_SPACE_TOL).vectors.is_empty());
        let quad = quadratic_invariants(&[diag(&[c(3.0, 0.0), c(1.0 / 3.0, 0.0)])], NULL_SPACE_TOL);
        assert_eq!(quad.forms.len(), 1);
        let q = &quad.forms[0].0;
        assert!(q[(0, 0)].norm() < 1e-14 && q[(1, 1)].norm() < 1e-14);
        assert!((q[(0, 1)] - c(std::f64::consts::FRAC_1_SQRT_2, 0.0)).norm() < 1e-14);
    }

    fn sl2_pair() -> [CMatrix; 2] {
        [
            real_matrix(&[&[1.0, 1.0], &[0.0, 1.0]]),
            real_matrix(&[&[1.0, 0.0], &[-2.0, 1.0]]),
        ]
    }

    #[test]
    fn planted_quadratic_invariant_recovered() {
        // diag(g, g) with g ∈ SL₂ preserves x₁y₂ − x₂y₁ on C² ⊕ C²
        let [a, b] = sl2_pair();
        let gens0 = [block_diag(&[a.clone(), a]), block_diag(&[b.clone(), b])];
        let mut planted = CMatrix::zeros(4, 4);
        planted[(0, 3)] = c(0.5, 0.0);
        planted[(3, 0)] = c(0.5, 0.0);
        planted[(1, 2)] = c(-0.5, 0.0);
        planted[(2, 1)] = c(-0.5, 0.0);
        let u = fixtures::well_conditioned(&mut fixtures::rng(4), 4);
        let ui = linalg::inverse(&u).unwrap();
        let gens: Vec<CMatrix> = gens0.iter().map(|g| &u * g * &ui).collect();
        // x ↦ Ux moves the form to U⁻ᵀQU⁻¹
        let expected = ui.transpose() * &planted * &ui;
        let quad = quadratic_invariants(&gens, NULL_SPACE_TOL);
        assert_eq!(quad.forms.len(), 1);
        assert!(quad.residuals[0] < 1e-8);
        assert!(distance_to_span(&quad.forms, &expected) < 1e-8);
        assert!(linear_invariants(&gens, NULL_SPACE_TOL).vectors.is_empty());
    }

    fn swap_setup() -> (CMatrix, CMatrix) {
        let perm = real_matrix(&[
            &[0.0, 1.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0],
        ]);
        let p = c(0.6, 0.8);
        // Jordan blocks for p on e₁ and p⁻¹ on e₂ (transpose acts on the dual)
        let mut t_inf = diag(&[p, p.inv(), p, p.inv()]);
        t_inf[(2, 0)] = linalg::ONE;
        t_inf[(3, 1)] = linalg::ONE;
        (perm, t_inf)
    }

    #[test]
    fn explicit_swap() {
        let (perm, t_inf) = swap_setup();
        let rep = permutation_pair_structure(&perm, &perm, &t_inf, CLASSIFICATION_TOL).unwrap();
        assert_eq!(rep.case, PairAction::Swap);
        let inv = rep.produced_invariant.unwrap();
        assert!((inv[0] - linalg::ONE).norm() < 1e-12 && (inv[1] - linalg::ONE).norm() < 1e-12);
        assert!(inv[2].norm() < 1e-12 && inv[3].norm() < 1e-12);
    }

    #[test]
    fn explicit_fix() {
        let (_, t_inf) = swap_setup();
        let mut g = identity(4);
        g[(2, 0)] = linalg::ONE;
        let rep = permutation_pair_structure(&g, &g, &t_inf, CLASSIFICATION_TOL).unwrap();
        assert_eq!(rep.case, PairAction::Fix);
        assert!(rep.produced_invariant.is_none());
    }

    #[test]
    fn diagonalizable_t_inf_rejected() {
        let p = c(0.6, 0.8);
        let t_inf = diag(&[p, p, p.inv(), p.inv()]);
        assert!(matches!(
            permutation_pair_structure(&identity(4), &identity(4), &t_inf, CLASSIFICATION_TOL),
            Err(Error::PreconditionFailed(_))
        ));
    }

    #[test]
    fn random_pairs_have_no_invariants() {
        let mut rng = fixtures::rng(9);
        for _ in 0..10 {
            let gens = [fixtures::well_conditioned(&mut rng, 4), fixtures::well_conditioned(&mut rng, 4)];
            assert!(linear_invariants(&gens, NULL_SPACE_TOL).vectors.is_empty());
            assert!(quadratic_invariants(&gens, NULL_SPACE_TOL).forms.is_empty());
        }
    }

    fn unipotent_group(seed: u64) -> Vec<CMatrix> {
        // shears fixing e₄* and a rotation-free block: a common linear invariant
        let mut rng = fixtures::rng(seed);
        let u = fixtures::well_conditioned(&mut rng, 4);
        let ui = linalg::inverse(&u).unwrap();
        (0..2)
            .map(|_| {
                let mut g = block_diag(&[fixtures::well_conditioned(&mut rng, 3), identity(1)]);
                for j in 0..3 {
                    g[(j, 3)] = Complex64::new(0.3, -0.2) * (j as f64 + 1.0);
                }
                &u * g * &ui
            })
            .collect()
    }

    proptest! {
        #[test]
        fn invariants_satisfy_their_equations(seed in 0u64..200) {
            let gens = unipotent_group(seed);
            let lin = linear_invariants(&gens, NULL_SPACE_TOL);
            prop_assert_eq!(lin.vectors.len(), 1);
            for (w, r) in lin.vectors.iter().zip(&lin.residuals) {
                prop_assert!(*r <= 1e-10 * linalg::vec_norm(w));
            }
            let quad = quadratic_invariants(&gens, NULL_SPACE_TOL);
            for (q, r) in quad.forms.iter().zip(&quad.residuals) {
                prop_assert!(*r <= 1e-10 * linalg::frobenius(&q.0));
            }
            // squares of linear invariants are quadratic invariants
            for w in &lin.vectors {
                let square = w * w.transpose();
                prop_assert!(distance_to_span(&quad.forms, &square) < 1e-8);
            }
        }

        #[test]
        fn fixed_space_ignores_order_and_inversion(seed in 0u64..200) {
            let gens = unipotent_group(seed);
            let a = linear_invariants(&gens, NULL_SPACE_TOL);
            let alt = vec![gens[1].clone(), linalg::inverse(&gens[0]).unwrap()];
            let b = linear_invariants(&alt, NULL_SPACE_TOL);
            prop_assert_eq!(a.vectors.len(), b.vectors.len());
            // equal one-dimensional spans: |⟨a, b⟩| = 1
            let overlap: Complex64 = a.vectors[0].iter().zip(b.vectors[0].iter()).map(|(x, y)| x.conj() * y).sum();
            prop_assert!((overlap.norm() - 1.0).abs() < 1e-8);
        }

        #[test]
        fn conjugate_closed_for_reflected_pairs(seed in 0u64..200) {
            let gens = unipotent_group(seed);
            let t1 = gens[0].clone();
            let t2 = linalg::inverse(&linalg::conj(&t1)).unwrap();
            let lin = linear_invariants(&[t1.clone(), t2.clone()], NULL_SPACE_TOL);
            for w in &lin.vectors {
                let cw = w.map(|z| z.conj());
                prop_assert!(linear_residual(&[t1.clone(), t2.clone()], &cw) < 1e-8);
            }
        }
    }
}
