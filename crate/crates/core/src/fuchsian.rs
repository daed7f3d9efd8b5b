//! Fuchsian linear systems `x' = Σᵢ Aᵢ/(z − zᵢ) · x` on the punctured plane.
//!
//! A [`FuchsianSystem`] is validated on construction and immutable afterwards.
//! The order of the singularities is significant: it defines the generator
//! indexing of every monodromy computation downstream.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// Relative separation below which two points count as coincident.
pub const MIN_SEPARATION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Singularity {
    pub point: Complex64,
    pub residue: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuchsianSystem {
    dimension: usize,
    singularities: Vec<Singularity>,
    basepoint: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub is_real_symmetric: bool,
    /// Pairs `(i, j)` of zero-based singularity indices with `zⱼ = conj(zᵢ)`.
    pub pairing: Vec<(usize, usize)>,
    pub max_defect: f64,
    pub tolerance: f64,
}

impl FuchsianSystem {
    pub fn new(
        dimension: usize,
        singularities: Vec<Singularity>,
        basepoint: Complex64,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Validation("dimension must be at least 1".into()));
        }
        if !(basepoint.re.is_finite() && basepoint.im.is_finite()) {
            return Err(Error::Validation("basepoint is not finite".into()));
        }
        for (i, s) in singularities.iter().enumerate() {
            if !(s.point.re.is_finite() && s.point.im.is_finite()) {
                return Err(Error::Validation(format!("singularity {i}: point is not finite")));
            }
            if s.residue.nrows() != dimension || s.residue.ncols() != dimension {
                return Err(Error::Validation(format!(
                    "singularity {i}: residue is {}x{}, expected {dimension}x{dimension}",
                    s.residue.nrows(),
                    s.residue.ncols()
                )));
            }
            if !linalg::is_finite(&s.residue) {
                return Err(Error::Validation(format!(
                    "singularity {i}: residue has non-finite entries"
                )));
            }
        }
        let system = FuchsianSystem {
            dimension,
            singularities,
            basepoint,
        };
        let min_gap = MIN_SEPARATION * system.length_scale();
        let pts = &system.singularities;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                if (pts[i].point - pts[j].point).norm() <= min_gap {
                    return Err(Error::Validation(format!(
                        "singularities {i} and {j} coincide (separation ≤ {min_gap:e})"
                    )));
                }
            }
            if (pts[i].point - basepoint).norm() <= min_gap {
                return Err(Error::Validation(format!(
                    "basepoint coincides with singularity {i}"
                )));
            }
        }
        Ok(system)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn singularities(&self) -> &[Singularity] {
        &self.singularities
    }

    pub fn points(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.singularities.iter().map(|s| s.point)
    }

    pub fn basepoint(&self) -> Complex64 {
        self.basepoint
    }

    pub fn with_basepoint(&self, basepoint: Complex64) -> Result<Self> {
        FuchsianSystem::new(self.dimension, self.singularities.clone(), basepoint)
    }

    /// Diameter of the singular points together with the basepoint, floored
    /// by the largest modulus so a single point still has a scale.
    pub fn length_scale(&self) -> f64 {
        let mut pts: Vec<Complex64> = self.points().collect();
        pts.push(self.basepoint);
        let mut diameter: f64 = 0.0;
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                diameter = diameter.max((a - b).norm());
            }
        }
        let modulus = pts.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        diameter.max(modulus).max(f64::MIN_POSITIVE)
    }

    /// Distance from `z` to the nearest singular point, with its index.
    pub fn nearest_singularity(&self, z: Complex64) -> Option<(usize, f64)> {
        self.points()
            .enumerate()
            .map(|(i, p)| (i, (z - p).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// `Σᵢ Aᵢ / (z − zᵢ)`.
pub fn evaluate_rhs(system: &FuchsianSystem, z: Complex64) -> Result<CMatrix> {
    let n = system.dimension();
    let mut out = CMatrix::zeros(n, n);
    for (index, s) in system.singularities().iter().enumerate() {
        let d = z - s.point;
        if d.norm() <= 4.0 * f64::EPSILON * s.point.norm().max(1.0) {
            return Err(Error::EvaluationAtSingularity { z, index });
        }
        out += &s.residue / d;
    }
    Ok(out)
}

/// Compare the system with its image under `z ↦ conj(z)`: real-axis points
/// should carry real residues and off-axis points should come in conjugate
/// pairs with conjugate residues. Defects are measured in the max-entry norm.
pub fn check_reality_symmetry(system: &FuchsianSystem, tol: f64) -> SymmetryReport {
    let pts = system.singularities();
    let mut max_defect: f64 = 0.0;
    let mut pairing = Vec::new();
    let mut complete = true;
    let mut paired = vec![false; pts.len()];

    for (i, s) in pts.iter().enumerate() {
        if s.point.im.abs() <= tol {
            let imag = s.residue.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
            max_defect = max_defect.max(imag).max(s.point.im.abs());
            paired[i] = true;
        }
    }
    for i in 0..pts.len() {
        if paired[i] {
            continue;
        }
        let target = pts[i].point.conj();
        let partner = (0..pts.len())
            .filter(|&j| j != i && !paired[j])
            .min_by(|&a, &b| {
                (pts[a].point - target)
                    .norm()
                    .total_cmp(&(pts[b].point - target).norm())
            });
        match partner {
            Some(j) => {
                paired[i] = true;
                paired[j] = true;
                pairing.push((i, j));
                let point_defect = (pts[j].point - target).norm();
                let residue_defect =
                    linalg::max_abs(&(&pts[j].residue - linalg::conj(&pts[i].residue)));
                max_defect = max_defect.max(point_defect).max(residue_defect);
            }
            None => complete = false,
        }
    }
    SymmetryReport {
        is_real_symmetric: complete && max_defect <= tol,
        pairing,
        max_defect,
        tolerance: tol,
    }
}

/// Residue at infinity, `−Σᵢ Aᵢ`.
pub fn residue_at_infinity(system: &FuchsianSystem) -> CMatrix {
    let n = system.dimension();
    let mut sum = CMatrix::zeros(n, n);
    for s in system.singularities() {
        sum += &s.residue;
    }
    -sum
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    dimension: usize,
    #[serde(default)]
    basepoint: Option<Complex64>,
    singularities: Vec<SingularityFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SingularityFile {
    point: Complex64,
    residue: Vec<Vec<Complex64>>,
}

pub(crate) fn json_error(err: &serde_json::Error) -> Error {
    let message = err.to_string();
    // serde_json names the offending field in backticks, when it knows it
    let field = message
        .split('`')
        .nth(1)
        .map(str::to_owned)
        .unwrap_or_else(|| "document".to_owned());
    Error::parse(err.line(), field, message)
}

/// Parse a system file. A missing basepoint defaults to the origin.
pub fn parse_system(text: &[u8]) -> Result<FuchsianSystem> {
    let file: SystemFile = serde_json::from_slice(text).map_err(|e| json_error(&e))?;
    let n = file.dimension;
    let mut singularities = Vec::with_capacity(file.singularities.len());
    for (i, s) in file.singularities.into_iter().enumerate() {
        if s.residue.len() != n || s.residue.iter().any(|row| row.len() != n) {
            return Err(Error::Validation(format!(
                "singularity {i}: residue shape does not match dimension {n}"
            )));
        }
        singularities.push(Singularity {
            point: s.point,
            residue: linalg::from_rows(&s.residue),
        });
    }
    FuchsianSystem::new(n, singularities, file.basepoint.unwrap_or_default())
}

pub fn serialize_system(system: &FuchsianSystem) -> Vec<u8> {
    let file = SystemFile {
        dimension: system.dimension,
        basepoint: Some(system.basepoint),
        singularities: system
            .singularities
            .iter()
            .map(|s| SingularityFile {
                point: s.point,
                residue: linalg::to_rows(&s.residue),
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&file).expect("system serializes");
    out.push(b'\n');
    out
}
