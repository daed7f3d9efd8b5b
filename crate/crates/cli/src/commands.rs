use std::fs;
use std::path::Path;

use monodromy::continuation::{self, LoopRequest, MonodromyGroup, TransportResult};
use monodromy::fixtures;
use monodromy::fuchsian::{self, FuchsianSystem};
use monodromy::group_analysis::{self, SpectralReport};
use monodromy::invariants::{self, LinearInvariantBasis, QuadraticInvariantBasis};
use monodromy::linalg::{self, max_abs, CMatrix};
use monodromy::threebody::{
    self, BlockModel, CheckStatus, MassInvariants, Masses, PipelineTolerances, PipelineVerdict, ResidueProvider,
    SigmaClass,
};
use monodromy::Error;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{render, Cli, Command, Format, MassInput, Model};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_STRUCTURAL: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure { code: EXIT_INPUT, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::IndexOutOfRange { .. }
            | Error::NonPositiveMass(_)
            | Error::SigmaOutOfRange(_)
            | Error::InputMismatch(_)
            | Error::DimensionMismatch(_) => EXIT_INPUT,
            _ => EXIT_NUMERIC,
        };
        Failure { code, message: e.to_string() }
    }
}

type Outcome = Result<u8, Failure>;

pub fn run(cli: &Cli) -> Outcome {
    for (name, value) in [("--tol", Some(cli.tol)), ("--cluster-tol", cli.cluster_tol), ("--invariant-tol", Some(cli.invariant_tol))] {
        if let Some(v) = value {
            if !(v.is_finite() && v > 0.0) {
                return Err(Failure::input(format!("{name} must be positive, got {v}")));
            }
        }
    }
    match &cli.command {
        Command::Masses { input } => cmd_masses(cli, input),
        Command::Monodromy { system, loop_file } => cmd_monodromy(cli, system, loop_file.as_deref()),
        Command::Invariants { generators } => cmd_invariants(cli, generators),
        Command::Verify { input, system, model, break_symmetry, write_system } => {
            cmd_verify(cli, input, system.as_deref(), *model, *break_symmetry, write_system.as_deref())
        }
        Command::Selftest => cmd_selftest(cli),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

fn emit<T: Serialize>(cli: &Cli, report: &T) -> Result<(), Failure> {
    let value = serde_json::to_value(report).expect("report serializes");
    let text = match cli.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&value).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Text => render::to_text(&value),
    };
    match &cli.out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn tolerances(cli: &Cli) -> PipelineTolerances {
    PipelineTolerances::from_transport(cli.tol)
}

fn cluster_tol(cli: &Cli) -> f64 {
    cli.cluster_tol.unwrap_or_else(|| tolerances(cli).spectral)
}

fn spectral_report(cli: &Cli, t: &CMatrix) -> Result<SpectralReport, Failure> {
    let scale = linalg::spectral_norm(t).max(1.0);
    Ok(group_analysis::spectrum(t, cluster_tol(cli) * scale)?)
}

fn resolve_masses(input: &MassInput) -> Result<(Masses, Option<f64>), Failure> {
    match (&input.masses, input.sigma) {
        (Some(m), None) => match m[..] {
            [m1, m2, m3] => Ok((Masses::new(m1, m2, m3)?, None)),
            _ => Err(Failure::input(format!("--masses needs 3 values, got {}", m.len()))),
        },
        (None, Some(s)) => Ok((threebody::masses_for_sigma(s)?, Some(s))),
        _ => Err(Failure::input("give exactly one of --masses or --sigma")),
    }
}

#[derive(Serialize)]
struct MassesReport {
    masses: Masses,
    sigma_requested: Option<f64>,
    invariants: MassInvariants,
    spectrum_infinity: Vec<Complex64>,
    centralizer_spectrum: Vec<Complex64>,
    sigma_class: SigmaClass,
}

fn cmd_masses(cli: &Cli, input: &MassInput) -> Outcome {
    let (masses, sigma_requested) = resolve_masses(input)?;
    let inv = threebody::mass_invariants(&masses)?;
    let report = MassesReport {
        masses,
        sigma_requested,
        invariants: inv,
        spectrum_infinity: threebody::predicted_spectrum_infinity(&inv),
        centralizer_spectrum: threebody::predicted_centralizer_spectrum(&inv),
        sigma_class: threebody::classify_sigma(inv.sigma, threebody::SIGMA_MATCH_TOL)?,
    };
    emit(cli, &report)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct GeneratorReport {
    index: usize,
    point: Complex64,
    /// `max |T − Id|`; the generator is flagged apparent when it is within tolerance.
    identity_defect: f64,
    apparent: bool,
    spectrum: SpectralReport,
}

#[derive(Serialize)]
struct ProductRelation {
    order: Vec<usize>,
    residual: f64,
    bound: f64,
    consistent: bool,
}

#[derive(Serialize)]
struct MonodromyReport {
    dimension: usize,
    basepoint: Complex64,
    group: MonodromyGroup,
    generators: Vec<GeneratorReport>,
    infinity_spectrum: SpectralReport,
    product_relation: ProductRelation,
    apparent_tolerance: f64,
}

#[derive(Serialize)]
struct LoopReport {
    dimension: usize,
    basepoint: Complex64,
    transport: TransportResult,
    spectrum: SpectralReport,
}

fn cmd_monodromy(cli: &Cli, system_path: &Path, loop_path: Option<&Path>) -> Outcome {
    let system = fuchsian::parse_system(&read(system_path)?)?;
    if let Some(path) = loop_path {
        let request: LoopRequest = continuation::parse_loop(&read(path)?)?;
        let route = request.to_route(&system)?;
        let transport = continuation::transport_route(&system, &route, cli.tol)?;
        let spectrum = spectral_report(cli, &transport.matrix)?;
        emit(cli, &LoopReport { dimension: system.dimension(), basepoint: system.basepoint(), transport, spectrum })?;
        return Ok(EXIT_OK);
    }
    let group = continuation::monodromy_generators(&system, cli.tol)?;
    let apparent_tolerance = tolerances(cli).check;
    let n = system.dimension();
    let generators = group
        .generators
        .iter()
        .zip(system.singularities())
        .enumerate()
        .map(|(index, (t, s))| {
            let identity_defect = max_abs(&(t - linalg::identity(n)));
            Ok(GeneratorReport {
                index,
                point: s.point,
                identity_defect,
                apparent: identity_defect <= apparent_tolerance,
                spectrum: spectral_report(cli, t)?,
            })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let product_relation = ProductRelation {
        order: group.relation_order.clone(),
        residual: group.product_residual,
        bound: group.product_bound,
        consistent: group.product_residual <= group.product_bound,
    };
    let consistent = product_relation.consistent;
    let report = MonodromyReport {
        dimension: n,
        basepoint: system.basepoint(),
        infinity_spectrum: spectral_report(cli, &group.at_infinity)?,
        group,
        generators,
        product_relation,
        apparent_tolerance,
    };
    emit(cli, &report)?;
    if consistent {
        Ok(EXIT_OK)
    } else {
        eprintln!("error: product relation residual exceeds its bound; singular points are not in loop order");
        Ok(EXIT_STRUCTURAL)
    }
}

/// Matrix group file. `generators` is accepted for `matrices`, and a
/// monodromy report is read through its `group` object.
#[derive(Deserialize)]
struct GeneratorsFile {
    #[serde(alias = "generators")]
    matrices: Vec<Vec<Vec<Complex64>>>,
    #[serde(default)]
    at_infinity: Option<Vec<Vec<Complex64>>>,
    /// Indices of `T₁`, `T₂` for the permutation-pair analysis.
    #[serde(default)]
    pair: Option<[usize; 2]>,
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum PairSection {
    Analyzed {
        pair: [usize; 2],
        #[serde(flatten)]
        report: invariants::PermutationPairReport,
    },
    NotApplicable { reason: String },
}

#[derive(Serialize)]
struct InvariantsReport {
    dimension: usize,
    generator_count: usize,
    linear: LinearInvariantBasis,
    quadratic: QuadraticInvariantBasis,
    permutation_pair: PairSection,
}

fn to_matrix(rows: &[Vec<Complex64>], n: usize, what: &str) -> Result<CMatrix, Failure> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Failure::input(format!("{what} is not {n}×{n}")));
    }
    let m = linalg::from_rows(rows);
    if !linalg::is_finite(&m) {
        return Err(Failure::input(format!("{what} has non-finite entries")));
    }
    Ok(m)
}

fn cmd_invariants(cli: &Cli, path: &Path) -> Outcome {
    let text = read(path)?;
    let bad = |e: serde_json::Error| Failure::input(format!("{}: {e}", path.display()));
    let mut value: serde_json::Value = serde_json::from_slice(&text).map_err(bad)?;
    // a whole monodromy report: use its group
    if let Some(group) = value.get_mut("group") {
        value = group.take();
    }
    let file: GeneratorsFile = serde_json::from_value(value).map_err(bad)?;
    let n = match file.matrices.first() {
        Some(m) if !m.is_empty() => m.len(),
        _ => return Err(Failure::input("no generators given")),
    };
    let generators = file
        .matrices
        .iter()
        .enumerate()
        .map(|(i, rows)| to_matrix(rows, n, &format!("generator {i}")))
        .collect::<Result<Vec<_>, _>>()?;

    let permutation_pair = match &file.at_infinity {
        None => PairSection::NotApplicable { reason: "no at_infinity matrix given".into() },
        Some(rows) => {
            let t_inf = to_matrix(rows, n, "at_infinity")?;
            let pair = match (file.pair, generators.len()) {
                (Some(p), _) => p,
                (None, 2) => [0, 1],
                (None, 3) => [1, 2],
                (None, k) => return Err(Failure::input(format!("{k} generators: give \"pair\" explicitly"))),
            };
            if pair.iter().any(|&i| i >= generators.len()) {
                return Err(Failure::input(format!("pair {pair:?} out of range")));
            }
            match invariants::permutation_pair_structure(&generators[pair[0]], &generators[pair[1]], &t_inf, cluster_tol(cli)) {
                Ok(report) => PairSection::Analyzed { pair, report },
                Err(e @ Error::PreconditionFailed(_)) => PairSection::NotApplicable { reason: e.to_string() },
                Err(e) => return Err(e.into()),
            }
        }
    };
    let report = InvariantsReport {
        dimension: n,
        generator_count: generators.len(),
        linear: invariants::linear_invariants(&generators, cli.invariant_tol),
        quadratic: invariants::quadratic_invariants(&generators, cli.invariant_tol),
        permutation_pair,
    };
    emit(cli, &report)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct VerifyReport {
    residue_source: String,
    #[serde(flatten)]
    report: threebody::PipelineReport,
}

fn cmd_verify(
    cli: &Cli,
    input: &MassInput,
    system_path: Option<&Path>,
    model: Option<Model>,
    break_symmetry: bool,
    write_system: Option<&Path>,
) -> Outcome {
    let (masses, _) = resolve_masses(input)?;
    let (system, residue_source): (FuchsianSystem, String) = match (system_path, model) {
        (Some(path), None) => (fuchsian::parse_system(&read(path)?)?, path.display().to_string()),
        (None, Some(Model::Block)) => {
            let provider = BlockModel { break_symmetry, ..BlockModel::default() };
            (provider.system(&masses)?, provider.name().to_string())
        }
        _ => return Err(Failure::input("give exactly one of --system or --model")),
    };
    if let Some(path) = write_system {
        fs::write(path, fuchsian::serialize_system(&system))
            .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))?;
    }
    let report = threebody::verify_pipeline(&masses, &system, cli.tol)?;
    let failed: Vec<String> = report
        .checks
        .iter()
        .filter(|c| c.status == CheckStatus::Fail)
        .map(|c| c.name.clone())
        .collect();
    let mismatch = report.verdict == PipelineVerdict::InputMismatch;
    emit(cli, &VerifyReport { residue_source, report })?;
    if failed.is_empty() && !mismatch {
        Ok(EXIT_OK)
    } else {
        eprintln!("error: structural checks failed: {}", failed.join(", "));
        Ok(EXIT_STRUCTURAL)
    }
}

#[derive(Serialize)]
struct SelftestCheck {
    name: &'static str,
    status: CheckStatus,
    residual: f64,
    tolerance: f64,
}

#[derive(Serialize)]
struct SelftestReport {
    seed: u64,
    transport_tolerance: f64,
    checks: Vec<SelftestCheck>,
}

fn selftest_check(name: &'static str, residual: f64, tolerance: f64) -> SelftestCheck {
    let status = if residual <= tolerance { CheckStatus::Pass } else { CheckStatus::Fail };
    SelftestCheck { name, status, residual, tolerance }
}

fn cmd_selftest(cli: &Cli) -> Outcome {
    let mut rng = fixtures::rng(cli.seed);
    let tol = cli.tol;
    let check = tolerances(cli).check;
    let mut checks = Vec::new();

    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let a = fixtures::random_nonresonant(&mut rng, 3, 0.5);
        let system = FuchsianSystem::new(
            3,
            vec![fuchsian::Singularity { point: Complex64::new(1.0, 0.0), residue: a.clone() }],
            Complex64::new(0.0, 0.0),
        )?;
        let t = &continuation::monodromy_generators(&system, tol)?.generators[0];
        let oracle = (a * Complex64::new(0.0, std::f64::consts::TAU)).exp();
        worst = worst.max(max_abs(&(t - &oracle)) / max_abs(&oracle).max(1.0));
    }
    checks.push(selftest_check("exponential_oracle", worst, check));

    let system = fixtures::random_ordered_system(&mut rng, 4, 3, 0.3);
    let group = continuation::monodromy_generators(&system, tol)?;
    checks.push(selftest_check("product_relation", group.product_residual, group.product_bound));

    let system = fixtures::random_reflection_symmetric(&mut rng, 4, 0.3);
    let group = continuation::monodromy_generators(&system, tol)?;
    let defect = group_analysis::reflection_defect(&group.generators[1], &group.generators[2])?;
    checks.push(selftest_check("reflection_symmetry", defect, check));

    let shear = linalg::real_matrix(&[&[1.0, 1.0], &[0.0, 1.0]]);
    let lin = invariants::linear_invariants(std::slice::from_ref(&shear), cli.invariant_tol);
    let residual = if lin.vectors.len() == 1 { lin.residuals[0] } else { f64::INFINITY };
    checks.push(selftest_check("shear_linear_invariant", residual, cli.invariant_tol));

    let random = [fixtures::well_conditioned(&mut rng, 3), fixtures::well_conditioned(&mut rng, 3)];
    let found = invariants::linear_invariants(&random, cli.invariant_tol).vectors.len()
        + invariants::quadratic_invariants(&random, cli.invariant_tol).forms.len();
    checks.push(selftest_check("random_group_no_invariants", found as f64, 0.0));

    let inv = threebody::mass_invariants(&Masses::new(0.1, 0.1, 1.0)?)?;
    let expected = [7.0 / 48.0, 81.0, 1.5 + 22f64.sqrt() / 2.0, 2.5];
    let got = [inv.sigma, inv.theta, inv.lambda1.re, inv.lambda2.re];
    let err = got.iter().zip(expected).map(|(g, e)| ((g - e) / e).abs()).fold(0.0, f64::max);
    checks.push(selftest_check("spectral_formula", err, 1e-12));

    let masses = threebody::masses_for_sigma(7.0 / 48.0)?;
    let report = threebody::verify_pipeline(&masses, &BlockModel::default().system(&masses)?, tol)?;
    let failed = report.checks.iter().filter(|c| c.status != CheckStatus::Pass).count();
    checks.push(selftest_check("block_model_pipeline", failed as f64, 0.0));

    let ok = checks.iter().all(|c| c.status == CheckStatus::Pass);
    emit(cli, &SelftestReport { seed: cli.seed, transport_tolerance: tol, checks })?;
    Ok(if ok { EXIT_OK } else { EXIT_STRUCTURAL })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(Failure::from(Error::Validation("x".into())).code, EXIT_INPUT);
        assert_eq!(Failure::from(Error::NonPositiveMass([1.0, -1.0, 1.0])).code, EXIT_INPUT);
        assert_eq!(Failure::from(Error::ToleranceNotMet { tol: 1e-10, budget: 1 }).code, EXIT_NUMERIC);
        assert_eq!(Failure::from(Error::NoClearPath { index: 0 }).code, EXIT_NUMERIC);
    }
}
