//! Seeded generators of test systems and matrices, shared by the self-test
//! command and the test suites.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fuchsian::{FuchsianSystem, Singularity};
use crate::linalg::{self, CMatrix};

pub type FixtureRng = ChaCha8Rng;

pub fn rng(seed: u64) -> FixtureRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in the square `[−scale, scale] × [−scale, scale]·i`.
pub fn random_matrix(rng: &mut FixtureRng, n: usize, scale: f64) -> CMatrix {
    if scale == 0.0 {
        return CMatrix::zeros(n, n);
    }
    CMatrix::from_fn(n, n, |_, _| {
        Complex64::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        )
    })
}

pub fn random_real_matrix(rng: &mut FixtureRng, n: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-scale..scale), 0.0))
}

/// `Id + perturbation`, with the perturbation small enough that the result is
/// comfortably invertible.
pub fn well_conditioned(rng: &mut FixtureRng, n: usize) -> CMatrix {
    let scale = 0.4 / n as f64;
    linalg::identity(n) + random_matrix(rng, n, scale)
}

/// Smallest distance between eigenvalue differences and the nonzero integers.
pub fn resonance_gap(residue: &CMatrix) -> f64 {
    let ev = linalg::eigenvalues(residue).unwrap_or_default();
    let mut gap = f64::INFINITY;
    for (i, a) in ev.iter().enumerate() {
        for b in &ev[i + 1..] {
            let d = a - b;
            let k = d.re.round();
            if k != 0.0 {
                gap = gap.min((d - Complex64::new(k, 0.0)).norm());
            } else {
                // nearest nonzero integer
                let alt = if d.re >= 0.0 { 1.0 } else { -1.0 };
                gap = gap.min((d - Complex64::new(alt, 0.0)).norm());
            }
        }
    }
    gap
}

/// Random residue whose eigenvalue differences stay at least 0.05 away from
/// the nonzero integers.
pub fn random_nonresonant(rng: &mut FixtureRng, n: usize, scale: f64) -> CMatrix {
    loop {
        let a = random_matrix(rng, n, scale);
        if resonance_gap(&a) > 0.05 {
            return a;
        }
    }
}

/// `k` singular points around the origin, listed clockwise as seen from the
/// basepoint 0 so that their standard loops compose in file order.
pub fn random_ordered_system(rng: &mut FixtureRng, n: usize, k: usize, scale: f64) -> FuchsianSystem {
    loop {
        let start: f64 = rng.random_range(0.0..TAU);
        let mut angles: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..0.75 * TAU)).collect();
        angles.sort_by(|a, b| b.total_cmp(a));
        let points: Vec<Complex64> = angles
            .iter()
            .map(|&t| Complex64::from_polar(rng.random_range(0.5..1.5), start + t))
            .collect();
        if min_separation(&points) < 0.3 {
            continue;
        }
        let singularities = points
            .into_iter()
            .map(|point| Singularity {
                point,
                residue: random_matrix(rng, n, scale),
            })
            .collect();
        return FuchsianSystem::new(n, singularities, Complex64::new(0.0, 0.0))
            .expect("separated points");
    }
}

/// Real-axis point with a real residue plus a conjugate pair with conjugate
/// residues; basepoint 0. Order: real point, upper point, lower point.
pub fn random_reflection_symmetric(rng: &mut FixtureRng, n: usize, scale: f64) -> FuchsianSystem {
    let x0 = rng.random_range(0.3..1.2);
    let upper = Complex64::new(rng.random_range(-0.5..1.0), rng.random_range(0.4..1.2));
    let a = random_real_matrix(rng, n, scale);
    let b = random_matrix(rng, n, scale);
    FuchsianSystem::new(
        n,
        vec![
            Singularity {
                point: Complex64::new(x0, 0.0),
                residue: a,
            },
            Singularity {
                point: upper,
                residue: b.clone(),
            },
            Singularity {
                point: upper.conj(),
                residue: linalg::conj(&b),
            },
        ],
        Complex64::new(0.0, 0.0),
    )
    .expect("separated points")
}

fn min_separation(points: &[Complex64]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in points.iter().enumerate() {
        best = best.min(a.norm());
        for b in &points[i + 1..] {
            best = best.min((a - b).norm());
        }
    }
    best
}
