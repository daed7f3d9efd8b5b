//! Release gate: criteria 1–9 must pass; criterion 10 runs on surrogate
//! residues and is reported without gating.

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use monodromy::continuation::{
    monodromy_generators, standard_loop, standard_radius, transport, transport_loop, Orientation, PathSpec,
};
use monodromy::fixtures;
use monodromy::group_analysis::{self, Verdict};
use monodromy::invariants::{self, distance_to_span, NULL_SPACE_TOL};
use monodromy::linalg::{self, block_diag, diag, max_abs, CMatrix, CVector};
use monodromy::threebody::{self, BlockModel, Masses, PipelineVerdict, ResidueProvider};
use num_complex::Complex64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn spectral_exactness() -> Outcome {
    let cases = [
        ((0.1, 0.1, 1.0), [7.0 / 48.0, 81.0, 1.5 + 22f64.sqrt() / 2.0, 2.5]),
        ((0.5, 0.5, 1.0), [5.0 / 16.0, 9.0, 3.5, 1.5 + 10f64.sqrt() / 2.0]),
    ];
    let mut worst: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for ((m1, m2, m3), expected) in cases {
        let masses = Masses::new(m1, m2, m3).unwrap();
        let start = Instant::now();
        let inv = threebody::mass_invariants(&masses).unwrap();
        slowest = slowest.max(start.elapsed());
        let got = [inv.sigma, inv.theta, inv.lambda1.re, inv.lambda2.re];
        for (g, e) in got.iter().zip(expected) {
            worst = worst.max(rel(*g, e));
        }
        worst = worst.max(inv.lambda1.im.abs()).max(inv.lambda2.im.abs());
    }
    outcome(
        worst <= 1e-12 && slowest < Duration::from_millis(1),
        format!("max relative error {worst:.1e}, slowest evaluation {slowest:?}"),
    )
}

fn two_over_nine() -> Outcome {
    let inv = threebody::mass_invariants(&threebody::masses_for_sigma(2.0 / 9.0).unwrap()).unwrap();
    let spec = threebody::predicted_spectrum_infinity(&inv);
    let p = Complex64::from_polar(1.0, TAU * 3f64.sqrt());
    let gap = (spec[0] - spec[1]).norm();
    let to_p = [(spec[0] - p).norm(), (spec[1] - p).norm(), (spec[2] - p.inv()).norm(), (spec[3] - p.inv()).norm()]
        .into_iter()
        .fold(0.0, f64::max);
    outcome(
        gap <= 1e-10 && to_p <= 1e-10,
        format!("|e^(2πiλ1) − e^(2πiλ2)| = {gap:.1e}, distance to p, 1/p {to_p:.1e}"),
    )
}

fn eight_over_twenty_seven() -> Outcome {
    let inv = threebody::mass_invariants(&threebody::masses_for_sigma(8.0 / 27.0).unwrap()).unwrap();
    let err = rel(inv.lambda2.re, 3.0);
    let spec = threebody::predicted_spectrum_infinity(&inv);
    let one = spec.iter().map(|z| (z - linalg::ONE).norm()).fold(f64::INFINITY, f64::min);
    let verdict = group_analysis::rational_invariant_obstruction(&diag(&spec), 1e-8).unwrap().verdict;
    outcome(
        err <= 1e-12 && one <= 1e-12 && verdict == Verdict::InconclusiveNeedsInvariantSearch,
        format!("λ2 relative error {err:.1e}, distance of 1 to spectrum {one:.1e}, verdict {verdict:?}"),
    )
}

fn monodromy_oracle() -> Outcome {
    let mut rng = fixtures::rng(2024);
    let mut worst: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for _ in 0..20 {
        let a = fixtures::random_nonresonant(&mut rng, 4, 0.5);
        let system = monodromy::fuchsian::FuchsianSystem::new(
            4,
            vec![monodromy::fuchsian::Singularity { point: Complex64::new(0.7, -0.4), residue: a.clone() }],
            Complex64::new(0.0, 0.0),
        )
        .unwrap();
        let lp = standard_loop(&system, 0, Orientation::Counterclockwise).unwrap();
        let start = Instant::now();
        let t = transport_loop(&system, &lp, 1e-10).unwrap().matrix;
        slowest = slowest.max(start.elapsed());
        let oracle = (a * Complex64::new(0.0, TAU)).exp();
        worst = worst.max(max_abs(&(t - oracle)));
    }
    outcome(
        worst <= 1e-8 && slowest < Duration::from_secs(1),
        format!("max-norm error {worst:.1e} over 20 systems, slowest loop {slowest:?}"),
    )
}

fn product_relation() -> Outcome {
    let mut rng = fixtures::rng(7);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let system = fixtures::random_ordered_system(&mut rng, 4, 3, 0.3);
        let group = monodromy_generators(&system, 1e-9).unwrap();
        worst = worst.max(group.product_residual);
    }
    outcome(worst <= 1e-7, format!("max ‖T0·T1·T2·T∞ − Id‖ = {worst:.1e} over 10 systems"))
}

fn reflection() -> Outcome {
    let mut rng = fixtures::rng(11);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let system = fixtures::random_reflection_symmetric(&mut rng, 4, 0.3);
        let group = monodromy_generators(&system, 1e-10).unwrap();
        let mirrored = linalg::inverse(&linalg::conj(&group.generators[1])).unwrap();
        worst = worst.max(max_abs(&(mirrored - &group.generators[2])));
    }
    outcome(worst <= 1e-7, format!("max ‖conj(T1)⁻¹ − T2‖ = {worst:.1e} over 10 systems"))
}

fn homotopy() -> Outcome {
    let mut rng = fixtures::rng(13);
    let mut worst: f64 = 0.0;
    for trial in 0..5 {
        let system = fixtures::random_ordered_system(&mut rng, 4, 3, 0.3);
        for index in 0..3 {
            let center = system.singularities()[index].point;
            let radius = standard_radius(&system, index).unwrap();
            let entry = center - center * (radius / center.norm());
            let mut waypoints = vec![Complex64::new(0.0, 0.0)];
            waypoints.extend((0..=10).map(|k| {
                center + (entry - center) * Complex64::from_polar(1.0, TAU * k as f64 / 10.0)
            }));
            waypoints.push(Complex64::new(0.0, 0.0));
            let base = transport(&system, &PathSpec::new(waypoints.clone()).unwrap(), 1e-10).unwrap().matrix;
            let last = waypoints.len() - 1;
            for (k, z) in waypoints.iter_mut().enumerate().filter(|(k, _)| *k != 0 && *k != last) {
                let clearance = system.nearest_singularity(*z).unwrap().1;
                let phase = (trial * 31 + index * 7 + k) as f64 * 2.399;
                *z += Complex64::from_polar(0.4 * clearance, phase);
            }
            let moved = transport(&system, &PathSpec::new(waypoints).unwrap(), 1e-10).unwrap().matrix;
            worst = worst.max(max_abs(&(moved - base)));
        }
    }
    outcome(worst <= 1e-7, format!("max change {worst:.1e} over 15 perturbed loops"))
}

fn conjugated(gens: &[CMatrix], u: &CMatrix) -> Vec<CMatrix> {
    let ui = linalg::inverse(u).unwrap();
    gens.iter().map(|g| u * g * &ui).collect()
}

fn invariant_soundness() -> Outcome {
    let mut rng = fixtures::rng(17);
    let mut worst: f64 = 0.0;
    let mut recovered = true;
    for _ in 0..5 {
        let u = fixtures::well_conditioned(&mut rng, 4);
        let ui = linalg::inverse(&u).unwrap();

        // linear: a 3+1 block group fixing the last dual coordinate
        let gens: Vec<CMatrix> = (0..2)
            .map(|_| {
                let mut g = block_diag(&[fixtures::well_conditioned(&mut rng, 3), linalg::identity(1)]);
                for j in 0..3 {
                    g[(j, 3)] = Complex64::new(0.2, 0.1) * (j as f64 + 1.0);
                }
                g
            })
            .collect();
        let gens = conjugated(&gens, &u);
        let planted: CVector = ui.transpose() * CVector::from_column_slice(&[linalg::ZERO, linalg::ZERO, linalg::ZERO, linalg::ONE]);
        let lin = invariants::linear_invariants(&gens, NULL_SPACE_TOL);
        recovered &= lin.vectors.len() == 1;
        if let Some(w) = lin.vectors.first() {
            let overlap: Complex64 = w.iter().zip(planted.iter()).map(|(a, b)| a.conj() * b).sum();
            let off = linalg::vec_norm(&(&planted - w * overlap)) / linalg::vec_norm(&planted);
            worst = worst.max(lin.residuals[0]).max(off);
        }

        // quadratic: diag(g, g) with g ∈ SL2 keeps x1·y2 − x2·y1
        let a = linalg::real_matrix(&[&[1.0, 1.0], &[0.0, 1.0]]);
        let b = linalg::real_matrix(&[&[1.0, 0.0], &[-2.0, 1.0]]);
        let gens = conjugated(&[block_diag(&[a.clone(), a]), block_diag(&[b.clone(), b])], &u);
        let mut q0 = CMatrix::zeros(4, 4);
        for (i, j, v) in [(0, 3, 0.5), (3, 0, 0.5), (1, 2, -0.5), (2, 1, -0.5)] {
            q0[(i, j)] = Complex64::new(v, 0.0);
        }
        let planted_q = ui.transpose() * q0 * &ui;
        let quad = invariants::quadratic_invariants(&gens, NULL_SPACE_TOL);
        recovered &= quad.forms.len() == 1;
        if !quad.forms.is_empty() {
            worst = worst.max(quad.residuals[0]).max(distance_to_span(&quad.forms, &planted_q));
        }

        let random = [fixtures::well_conditioned(&mut rng, 4), fixtures::well_conditioned(&mut rng, 4)];
        recovered &= invariants::linear_invariants(&random, NULL_SPACE_TOL).vectors.is_empty();
        recovered &= invariants::quadratic_invariants(&random, NULL_SPACE_TOL).forms.is_empty();
    }
    outcome(
        recovered && worst <= 1e-8,
        format!("planted invariants recovered: {recovered}, worst residual {worst:.1e}"),
    )
}

fn centralizer_identities() -> Outcome {
    let mut rng = fixtures::rng(19);
    let mut worst_commutator: f64 = 0.0;
    for _ in 0..50 {
        let t_inf = fixtures::random_matrix(&mut rng, 4, 1.0) + linalg::identity(4) * Complex64::new(2.0, 0.0);
        let t = group_analysis::centralizer_element(&t_inf).unwrap();
        let defect = linalg::frobenius(&linalg::commutator(&t, &t_inf))
            / (linalg::frobenius(&t) * linalg::frobenius(&t_inf));
        worst_commutator = worst_commutator.max(defect);
    }
    let mut worst_spectrum: f64 = 0.0;
    let mut sigmas: Vec<f64> = threebody::SPECIAL_SIGMAS.iter().map(|s| s.0).collect();
    sigmas.extend([0.05, 0.2, 0.3]);
    for sigma in sigmas {
        let inv = threebody::mass_invariants(&threebody::masses_for_sigma(sigma).unwrap()).unwrap();
        let t_inf = diag(&threebody::predicted_spectrum_infinity(&inv));
        let t = group_analysis::centralizer_element(&t_inf).unwrap();
        for (k, lambda) in [inv.lambda1, inv.lambda2].iter().enumerate() {
            let expected = 2.0 * ((TAU * lambda.re).cos() - 1.0);
            for j in [k, k + 2] {
                worst_spectrum = worst_spectrum.max((t[(j, j)] - Complex64::new(expected, 0.0)).norm());
            }
        }
    }
    outcome(
        worst_commutator <= 1e-12 && worst_spectrum <= 1e-12,
        format!("commutator {worst_commutator:.1e} (relative), centralizer spectrum error {worst_spectrum:.1e}"),
    )
}

fn end_to_end() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for (label, sigma) in [("7/48", 7.0 / 48.0), ("5/16", 5.0 / 16.0), ("2/9", 2.0 / 9.0)] {
        let masses = threebody::masses_for_sigma(sigma).unwrap();
        let system = BlockModel::default().system(&masses).unwrap();
        match threebody::verify_pipeline(&masses, &system, threebody::DEFAULT_TRANSPORT_TOL) {
            Ok(report) => {
                let expected = match sigma {
                    s if s == 2.0 / 9.0 => matches!(report.verdict, PipelineVerdict::InvariantFound { .. }),
                    _ => report.verdict == PipelineVerdict::NoAdditionalMeromorphicIntegral,
                };
                pass &= report.all_passed() && expected;
                lines.push(format!("σ={label}: {:?}", report.verdict));
            }
            Err(e) => {
                pass = false;
                lines.push(format!("σ={label}: error {e}"));
            }
        }
    }
    outcome(pass, format!("surrogate block-model residues; {}", lines.join(", ")))
}

fn main() -> ExitCode {
    let gating: [(&str, fn() -> Outcome); 9] = [
        ("spectral formula exactness", spectral_exactness),
        ("sigma = 2/9 coincidence", two_over_nine),
        ("sigma = 8/27 degeneracy", eight_over_twenty_seven),
        ("monodromy oracle", monodromy_oracle),
        ("product relation", product_relation),
        ("reflection symmetry", reflection),
        ("homotopy invariance", homotopy),
        ("invariant solver soundness", invariant_soundness),
        ("centralizer identities", centralizer_identities),
    ];
    let mut failed = 0;
    for (k, (name, run)) in gating.iter().enumerate() {
        let result = run();
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} [{name}] {}",
            k + 1,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    let extra = end_to_end();
    println!(
        "criterion 10: {} [end-to-end, data-dependent, not gating] {}",
        if extra.pass { "PASS" } else { "FAIL" },
        extra.detail
    );
    if failed == 0 {
        println!("acceptance: criteria 1-9 passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} gating criteria failed");
        ExitCode::FAILURE
    }
}
