//! Mass-parameter layer for the normal variational equation along the
//! parabolic Lagrangian orbit: closed-form invariants, predicted spectra,
//! classification of σ, and the end-to-end check of a supplied residue set.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::Serialize;

use crate::continuation::{self, MonodromyGroup};
use crate::error::{Error, Result};
use crate::fuchsian::{self, FuchsianSystem, Singularity};
use crate::group_analysis::{self, ObstructionVerdict, Verdict};
use crate::invariants::{self, LinearInvariantBasis, PermutationPairReport, QuadraticInvariantBasis};
use crate::linalg::{self, CMatrix};

/// Default distance within which σ counts as one of the special values.
pub const SIGMA_MATCH_TOL: f64 = 1e-9;
/// Values closer than this to a special σ, but not matching, are flagged.
pub const NEAR_BOUNDARY: f64 = 1e-6;
pub const DEFAULT_TRANSPORT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Masses {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

impl Masses {
    pub fn new(m1: f64, m2: f64, m3: f64) -> Result<Self> {
        if [m1, m2, m3].iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::NonPositiveMass([m1, m2, m3]));
        }
        Ok(Masses { m1, m2, m3 })
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Masses::new(c * self.m1, c * self.m2, c * self.m3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassInvariants {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub sigma: f64,
    pub theta: f64,
    pub lambda1: Complex64,
    pub lambda2: Complex64,
    pub z0: Complex64,
    pub z1: Complex64,
    pub z2: Complex64,
}

impl MassInvariants {
    pub fn points(&self) -> [Complex64; 3] {
        [self.z0, self.z1, self.z2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SigmaCase {
    Generic,
    /// σ ∈ {1/3, 8/27}
    InvariantCase,
    /// σ = 2/9
    LinearOrQuadraticCase,
    /// σ ∈ {7/48, 5/16}
    ObstructionCase,
    NearBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaClass {
    pub value: SigmaCase,
    pub nearest: f64,
    pub distance: f64,
    pub tolerance: f64,
}

pub const SPECIAL_SIGMAS: [(f64, SigmaCase); 5] = [
    (1.0 / 3.0, SigmaCase::InvariantCase),
    (8.0 / 27.0, SigmaCase::InvariantCase),
    (2.0 / 9.0, SigmaCase::LinearOrQuadraticCase),
    (7.0 / 48.0, SigmaCase::ObstructionCase),
    (5.0 / 16.0, SigmaCase::ObstructionCase),
];

pub fn mass_invariants(masses: &Masses) -> Result<MassInvariants> {
    let Masses { m1, m2, m3 } = Masses::new(masses.m1, masses.m2, masses.m3)?;
    let s1 = m1 + m2 + m3;
    let s2 = m1 * m2 + m2 * m3 + m3 * m1;
    let s3 = m2 + 2.0 * m3;
    let sigma = s2 / (s1 * s1);
    // σ ≤ 1/3, so θ ≥ 0 up to rounding
    let theta = (144.0 * (1.0 - 3.0 * sigma)).max(0.0);
    let root = theta.sqrt();
    let half = Complex64::new(1.5, 0.0);
    let lambda1 = half + Complex64::new(13.0 + root, 0.0).sqrt() * 0.5;
    let lambda2 = half + Complex64::new(13.0 - root, 0.0).sqrt() * 0.5;
    let sqrt3 = 3f64.sqrt();
    let z0 = Complex64::new(sqrt3 * m1 * m2 / (2.0 * s2), 0.0);
    let z1 = Complex64::new(sqrt3 * m2, s3) * (m1 / (2.0 * s2));
    Ok(MassInvariants {
        s1,
        s2,
        s3,
        sigma,
        theta,
        lambda1,
        lambda2,
        z0,
        z1,
        z2: z1.conj(),
    })
}

/// `e^{2πiλ}`, with the real part of `λ` reduced modulo 1 first so that
/// integer and half-integer `λ` land exactly on `±1`.
pub fn exp_two_pi_i(lambda: Complex64) -> Complex64 {
    let frac = lambda.re - lambda.re.floor();
    let turn = TAU * frac;
    let modulus = (-TAU * lambda.im).exp();
    let (s, c) = turn.sin_cos();
    let snap = |x: f64| if x.abs() < 4.0 * f64::EPSILON { 0.0 } else { x };
    Complex64::new(snap(c), snap(s)) * modulus
}

/// `{e^{2πiλ₁}, e^{2πiλ₂}, e^{−2πiλ₁}, e^{−2πiλ₂}}`.
pub fn predicted_spectrum_infinity(inv: &MassInvariants) -> Vec<Complex64> {
    vec![
        exp_two_pi_i(inv.lambda1),
        exp_two_pi_i(inv.lambda2),
        exp_two_pi_i(-inv.lambda1),
        exp_two_pi_i(-inv.lambda2),
    ]
}

/// `{σ₁, σ₁, σ₂, σ₂}` with `σᵢ = 2(cos 2πλᵢ − 1)`.
pub fn predicted_centralizer_spectrum(inv: &MassInvariants) -> Vec<Complex64> {
    let sigma = |lambda: Complex64| {
        let e = exp_two_pi_i(lambda);
        e + exp_two_pi_i(-lambda) - Complex64::new(2.0, 0.0)
    };
    let (s1, s2) = (sigma(inv.lambda1), sigma(inv.lambda2));
    vec![s1, s1, s2, s2]
}

pub fn classify_sigma(sigma: f64, tol: f64) -> Result<SigmaClass> {
    if !(sigma > 0.0 && sigma <= 1.0 / 3.0 + 1e-12) {
        return Err(Error::SigmaOutOfRange(sigma));
    }
    let (nearest, case) = SPECIAL_SIGMAS
        .iter()
        .copied()
        .min_by(|a, b| (a.0 - sigma).abs().total_cmp(&(b.0 - sigma).abs()))
        .expect("non-empty table");
    let distance = (nearest - sigma).abs();
    let value = if distance <= tol {
        case
    } else if distance <= NEAR_BOUNDARY {
        SigmaCase::NearBoundary
    } else {
        SigmaCase::Generic
    };
    Ok(SigmaClass {
        value,
        nearest,
        distance,
        tolerance: tol,
    })
}

/// Masses `(t, t, 1)` with `σ = (t² + 2t)/(2t + 1)²`. The root taken is
/// `t = σ / ((1 − 2σ) + √(1 − 3σ))`, which is the positive root for σ < 1/4
/// and continues through σ = 1/4 up to `t = 1` at σ = 1/3.
pub fn masses_for_sigma(sigma_target: f64) -> Result<Masses> {
    if !(sigma_target > 0.0 && sigma_target <= 1.0 / 3.0 + 1e-12) {
        return Err(Error::SigmaOutOfRange(sigma_target));
    }
    let disc = (1.0 - 3.0 * sigma_target).max(0.0);
    let t = sigma_target / ((1.0 - 2.0 * sigma_target) + disc.sqrt());
    Masses::new(t, t, 1.0)
}

/// Source of NVE residues `A`, `B`, `C` for given masses.
pub trait ResidueProvider {
    fn name(&self) -> &str;
    fn system(&self, masses: &Masses) -> Result<FuchsianSystem>;
}

/// System with the given residues at `z₀, z₁, z₂` and basepoint 0.
pub fn three_body_system(masses: &Masses, residues: [CMatrix; 3]) -> Result<FuchsianSystem> {
    let inv = mass_invariants(masses)?;
    let singularities = inv
        .points()
        .into_iter()
        .zip(residues)
        .map(|(point, residue)| Singularity { point, residue })
        .collect();
    FuchsianSystem::new(4, singularities, Complex64::new(0.0, 0.0))
}

/// Synthetic residues with the monodromy structure the NVE is known to have.
/// This is a surrogate: it does not derive the true NVE coefficients.
///
/// `A = 0`, `B = P·diag(B₁, B₂)·P⁻¹`, `C = conj(B)` with a fixed real `P` and
/// nilpotent rank-one blocks `Bₖ = [[aₖ, 1], [−aₖ², −aₖ]]`, `aₖ = xₖ + iλₖ/2`.
/// Then `T₀ = Id`, `T₁`, `T₂` are unipotent with two 2×2 Jordan blocks, the
/// residue at infinity has eigenvalues `±λₖ`, and `T∞ + T∞⁻¹` is scalar on
/// each block. When `e^{2πiλ₁} = e^{2πiλ₂}` both blocks are built from `λ₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockModel {
    pub shifts: [f64; 2],
    /// Perturbs `C` so the reality symmetry fails (negative control).
    pub break_symmetry: bool,
}

impl Default for BlockModel {
    fn default() -> Self {
        BlockModel {
            shifts: [0.3, -0.2],
            break_symmetry: false,
        }
    }
}

fn block_model_conjugator() -> CMatrix {
    linalg::real_matrix(&[
        &[1.0, 0.3, -0.2, 0.1],
        &[0.2, 1.0, 0.4, -0.3],
        &[-0.1, 0.25, 1.0, 0.2],
        &[0.3, -0.1, 0.15, 1.0],
    ])
}

impl BlockModel {
    pub fn residues(&self, inv: &MassInvariants) -> Result<[CMatrix; 3]> {
        let same = (exp_two_pi_i(inv.lambda1) - exp_two_pi_i(inv.lambda2)).norm() < 1e-9;
        let lambdas = if same {
            [inv.lambda1.re, inv.lambda1.re]
        } else {
            [inv.lambda1.re, inv.lambda2.re]
        };
        let shifts = if same {
            [self.shifts[0], self.shifts[0]]
        } else {
            self.shifts
        };
        let blocks: Vec<CMatrix> = lambdas
            .iter()
            .zip(shifts)
            .map(|(&lambda, x)| {
                let a = Complex64::new(x, lambda / 2.0);
                linalg::from_rows(&[vec![a, linalg::ONE], vec![-a * a, -a]])
            })
            .collect();
        let p = block_model_conjugator();
        let pi = linalg::inverse(&p)?;
        let b = &p * linalg::block_diag(&blocks) * &pi;
        let mut c = linalg::conj(&b);
        if self.break_symmetry {
            c[(0, 0)] += Complex64::new(0.0, 0.1);
        }
        Ok([CMatrix::zeros(4, 4), b, c])
    }
}

impl ResidueProvider for BlockModel {
    fn name(&self) -> &str {
        "block-model"
    }

    fn system(&self, masses: &Masses) -> Result<FuchsianSystem> {
        let inv = mass_invariants(masses)?;
        three_body_system(masses, self.residues(&inv)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub residual: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: &str, residual: f64, tolerance: f64) -> Self {
        let status = if residual <= tolerance {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        Check {
            name: name.into(),
            status,
            residual,
            tolerance,
        }
    }

    fn skipped(name: &str) -> Self {
        Check {
            name: name.into(),
            status: CheckStatus::Skipped,
            residual: f64::NAN,
            tolerance: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind")]
pub enum PipelineVerdict {
    NoAdditionalMeromorphicIntegral,
    InvariantFound { degree: usize },
    Inconclusive,
    InputMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineTolerances {
    pub transport: f64,
    /// Matrix identities: `T₀ = Id`, unipotency, reflection, commutation.
    pub check: f64,
    /// Eigenvalue comparisons and clustering.
    pub spectral: f64,
    /// Null-space threshold of the invariant search.
    pub invariant: f64,
    pub sigma_match: f64,
}

impl PipelineTolerances {
    pub fn from_transport(tol: f64) -> Self {
        let check = (1e3 * tol).max(1e-12);
        PipelineTolerances {
            transport: tol,
            check,
            spectral: check.sqrt(),
            invariant: (10.0 * check).max(1e-6),
            sigma_match: SIGMA_MATCH_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PairOutcome {
    Analyzed(PermutationPairReport),
    NotApplicable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantSearch {
    pub linear: LinearInvariantBasis,
    pub quadratic: QuadraticInvariantBasis,
    pub permutation_pair: PairOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub masses: Masses,
    pub invariants: MassInvariants,
    pub sigma_class: SigmaClass,
    pub checks: Vec<Check>,
    pub group: Option<MonodromyGroup>,
    pub obstruction: Option<ObstructionVerdict>,
    pub invariant_search: Option<InvariantSearch>,
    pub verdict: PipelineVerdict,
    pub tolerances: PipelineTolerances,
}

impl PipelineReport {
    pub fn check(&self, prefix: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name.starts_with(prefix))
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status == CheckStatus::Pass)
    }
}

pub const CHECK_NAMES: [&str; 8] = [
    "a_singular_points_and_reality",
    "b_apparent_z0_and_product",
    "c_unipotent_jordan_2_2",
    "d_spectrum_infinity",
    "e_reflection",
    "f_centralizer_commutes",
    "g_centralizer_spectrum",
    "h_verdict",
];

/// Largest distance in a greedy nearest matching of two equal-size multisets.
fn multiset_distance(computed: &[Complex64], predicted: &[Complex64]) -> f64 {
    if computed.len() != predicted.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; computed.len()];
    let mut worst: f64 = 0.0;
    for p in predicted {
        let (j, d) = computed
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, c)| (j, (c - p).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("sizes match");
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

/// Jordan shape residual: 0 when `t` has the single eigenvalue 1 with two
/// 2×2 blocks, otherwise ∞; unipotency defect is added.
fn jordan_2_2_residual(t: &CMatrix, spectral_tol: f64) -> f64 {
    let defect = group_analysis::unipotency_defect(t);
    let scale = linalg::spectral_norm(t).max(1.0);
    match group_analysis::spectrum(t, spectral_tol * scale) {
        Ok(rep)
            if rep.eigenvalues.len() == 1
                && rep.eigenvalues[0].jordan_blocks == [2, 2]
                && (rep.eigenvalues[0].value - linalg::ONE).norm() <= spectral_tol =>
        {
            defect
        }
        _ => f64::INFINITY,
    }
}

/// End-to-end check of a residue set against the closed-form predictions.
///
/// Fails with `InputMismatch` when the singular points or dimension do not
/// fit the masses. A broken reality symmetry is reported as a failed first
/// check and stops the pipeline.
pub fn verify_pipeline(masses: &Masses, system: &FuchsianSystem, tol: f64) -> Result<PipelineReport> {
    let inv = mass_invariants(masses)?;
    let tolerances = PipelineTolerances::from_transport(tol);
    let sigma_class = classify_sigma(inv.sigma, tolerances.sigma_match)?;

    if system.dimension() != 4 || system.singularities().len() != 3 {
        return Err(Error::InputMismatch(format!(
            "expected a 4-dimensional system with 3 singular points, got dimension {} with {}",
            system.dimension(),
            system.singularities().len()
        )));
    }
    if system.basepoint().norm() != 0.0 {
        return Err(Error::InputMismatch(format!(
            "basepoint must be 0, got {}",
            system.basepoint()
        )));
    }
    let scale = inv.points().iter().map(|z| z.norm()).fold(1.0, f64::max);
    let point_tol = tol.max(1e-12) * scale;
    for (i, (given, expected)) in system.points().zip(inv.points()).enumerate() {
        if (given - expected).norm() > point_tol {
            return Err(Error::InputMismatch(format!(
                "singular point {i} is {given}, masses give {expected}"
            )));
        }
    }

    let residue_scale = system
        .singularities()
        .iter()
        .map(|s| linalg::max_abs(&s.residue))
        .fold(1.0, f64::max);
    let symmetry = fuchsian::check_reality_symmetry(system, point_tol.max(1e-12 * residue_scale));
    let paired = symmetry.pairing == [(1, 2)];
    let mut checks = vec![Check::new(
        CHECK_NAMES[0],
        if paired { symmetry.max_defect } else { f64::INFINITY },
        symmetry.tolerance,
    )];
    if checks[0].status == CheckStatus::Fail {
        checks.extend(CHECK_NAMES[1..].iter().map(|n| Check::skipped(n)));
        return Ok(PipelineReport {
            masses: *masses,
            invariants: inv,
            sigma_class,
            checks,
            group: None,
            obstruction: None,
            invariant_search: None,
            verdict: PipelineVerdict::InputMismatch,
            tolerances,
        });
    }

    let group = continuation::monodromy_generators(system, tol)?;
    let [t0, t1, t2] = [0, 1, 2].map(|i| group.generators[i].clone());
    let t_inf = group.at_infinity.clone();
    let id = linalg::identity(4);

    // (b) T₀ = Id and T₁T₂T∞ = Id
    let apparent = linalg::max_abs(&(&t0 - &id)) / linalg::max_abs(&t0).max(1.0);
    let product = linalg::max_abs(&(&t1 * &t2 * &t_inf - &id))
        / (linalg::max_abs(&t1) * linalg::max_abs(&t2) * linalg::max_abs(&t_inf)).max(1.0);
    checks.push(Check::new(CHECK_NAMES[1], apparent.max(product), tolerances.check));

    // (c)
    let jordan = jordan_2_2_residual(&t1, tolerances.spectral).max(jordan_2_2_residual(&t2, tolerances.spectral));
    checks.push(Check::new(CHECK_NAMES[2], jordan, tolerances.check));

    // (d)
    let spec_inf = linalg::eigenvalues(&t_inf)?;
    checks.push(Check::new(
        CHECK_NAMES[3],
        multiset_distance(&spec_inf, &predicted_spectrum_infinity(&inv)),
        tolerances.spectral,
    ));

    // (e)
    checks.push(Check::new(
        CHECK_NAMES[4],
        group_analysis::reflection_defect(&t1, &t2)?,
        tolerances.check,
    ));

    // (f)
    let t = group_analysis::centralizer_element(&t_inf)?;
    let commute = group_analysis::commutation_defect(&t, &t1).max(group_analysis::commutation_defect(&t, &t2));
    checks.push(Check::new(CHECK_NAMES[5], commute, tolerances.check));

    // (g)
    let spec_t = linalg::eigenvalues(&t)?;
    checks.push(Check::new(
        CHECK_NAMES[6],
        multiset_distance(&spec_t, &predicted_centralizer_spectrum(&inv)),
        tolerances.spectral,
    ));

    // (h)
    let obstruction = group_analysis::rational_invariant_obstruction(&t_inf, tolerances.spectral)?;
    let generators = [t1.clone(), t2.clone()];
    let (verdict, invariant_search) = if obstruction.verdict == Verdict::NoRationalInvariant {
        (PipelineVerdict::NoAdditionalMeromorphicIntegral, None)
    } else {
        let linear = invariants::linear_invariants(&generators, tolerances.invariant);
        let quadratic = invariants::quadratic_invariants(&generators, tolerances.invariant);
        let permutation_pair =
            match invariants::permutation_pair_structure(&t1, &t2, &t_inf, tolerances.spectral) {
                Ok(rep) => PairOutcome::Analyzed(rep),
                Err(e) => PairOutcome::NotApplicable { reason: e.to_string() },
            };
        let verdict = if !linear.vectors.is_empty() {
            PipelineVerdict::InvariantFound { degree: 1 }
        } else if !quadratic.forms.is_empty() {
            PipelineVerdict::InvariantFound { degree: 2 }
        } else {
            PipelineVerdict::Inconclusive
        };
        (
            verdict,
            Some(InvariantSearch {
                linear,
                quadratic,
                permutation_pair,
            }),
        )
    };
    let consistent = match sigma_class.value {
        SigmaCase::Generic | SigmaCase::ObstructionCase => {
            verdict == PipelineVerdict::NoAdditionalMeromorphicIntegral
        }
        SigmaCase::LinearOrQuadraticCase => matches!(verdict, PipelineVerdict::InvariantFound { .. }),
        SigmaCase::InvariantCase => verdict != PipelineVerdict::NoAdditionalMeromorphicIntegral,
        SigmaCase::NearBoundary => true,
    };
    checks.push(Check {
        name: CHECK_NAMES[7].into(),
        status: if consistent { CheckStatus::Pass } else { CheckStatus::Fail },
        residual: if consistent { 0.0 } else { 1.0 },
        tolerance: 0.0,
    });

    Ok(PipelineReport {
        masses: *masses,
        invariants: inv,
        sigma_class,
        checks,
        group: Some(group),
        obstruction: Some(obstruction),
        invariant_search,
        verdict,
        tolerances,
    })
}
