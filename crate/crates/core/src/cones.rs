//! Curvature cones: two-convexity and the pinching sets `Λ`.
//!
//! For a convex speed the pinching quantity is
//! `min_{i<j}(zᵢ + zⱼ) − β₁⁻¹f(z)`, for a concave speed it is
//! `β₁⁻¹f(z) − max zᵢ`; in both cases `Λ` is where it is positive, and
//! `β₂` bounds it by `β₂·min zᵢ` on `Λ`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::sampling::{index_rng, par_map_indexed, sample_unit_slice};
use crate::speeds::{cylinder_value_and_normalize, min_pair_sum, CurvatureVector, SpeedDescriptor};

/// Refinement iterations of the coordinate ascent on `β₂`.
pub const ASCENT_ITERATIONS: usize = 50;
/// Initial coordinate step of the ascent.
pub const ASCENT_STEP: f64 = 0.1;
/// Slack allowed when validating `quantity ≤ β₂·min zᵢ`.
pub const BETA2_SLACK: f64 = 1e-6;
/// Relative spread below which a face point counts as `z₂ = … = zₙ`.
pub const DIAGONAL_SPREAD: f64 = 1e-6;
/// Tolerance on the pinching quantity at face points (relative to `‖z‖`).
pub const FACE_TOL: f64 = 1e-12;
/// Smallest entry (on the unit slice) for which `quantity / min zᵢ` is formed.
const MIN_ENTRY_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PinchingMode {
    Convex,
    Concave,
}

impl PinchingMode {
    pub fn name(&self) -> &'static str {
        match self {
            PinchingMode::Convex => "convex",
            PinchingMode::Concave => "concave",
        }
    }
}

/// `Γ² = {min_{i<j}(zᵢ + zⱼ) > 0}`. Vacuously true for `n = 1`.
pub fn gamma2_membership(z: &CurvatureVector) -> bool {
    z.min_pair_sum() > 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeSample {
    pub z: Vec<f64>,
    pub quantity: f64,
    pub min_entry: f64,
    pub in_lambda: bool,
}

/// Evaluates the pinching quantity; `z` need only lie in the closed cone.
fn quantity_raw(speed: &SpeedDescriptor, beta1: f64, z: &[f64], mode: PinchingMode) -> f64 {
    // β₁ of the unscaled speed against the unscaled f
    let f = speed.value_unchecked(z) / speed.scale();
    match mode {
        PinchingMode::Convex => min_pair_sum(z) - f / beta1,
        PinchingMode::Concave => f / beta1 - z.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

fn sample_at(speed: &SpeedDescriptor, beta1: f64, z: &[f64], mode: PinchingMode) -> ConeSample {
    let quantity = quantity_raw(speed, beta1, z, mode);
    ConeSample {
        z: z.to_vec(),
        quantity,
        min_entry: z.iter().copied().fold(f64::INFINITY, f64::min),
        in_lambda: quantity > 0.0,
    }
}

fn beta1_of(speed: &SpeedDescriptor, mode: PinchingMode) -> Result<f64> {
    if mode == PinchingMode::Convex && speed.n() < 2 {
        return Err(LabError::InvalidInput("the convex pinching quantity needs n >= 2".into()));
    }
    Ok(cylinder_value_and_normalize(speed)?.0)
}

pub fn lambda_quantity(speed: &SpeedDescriptor, z: &CurvatureVector, mode: PinchingMode) -> Result<ConeSample> {
    let beta1 = beta1_of(speed, mode)?;
    speed.check_closed_cone(z.as_slice())?;
    Ok(sample_at(speed, beta1, z.as_slice(), mode))
}

fn ratio(s: &ConeSample) -> Option<f64> {
    (s.quantity >= 0.0 && s.min_entry > MIN_ENTRY_FLOOR).then(|| s.quantity / s.min_entry)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beta2Estimate {
    pub speed: String,
    pub n: usize,
    pub mode: PinchingMode,
    pub beta1: f64,
    pub beta2: f64,
    /// Where the supremum was attained (unit norm); `None` when the limit
    /// along the cylinder ray `(0, 1, …, 1)` was the largest candidate.
    pub witness: Option<Vec<f64>>,
    /// `lim quantity/min zᵢ` approaching the ray `(0, 1, …, 1)`.
    pub ray_limit: f64,
    pub samples: usize,
    pub samples_in_closure: usize,
    pub best_sample_ratio: f64,
}

/// Value of `quantity / min zᵢ` approached along `(ε, 1, …, 1)` as `ε → 0`.
fn cylinder_ray_limit(speed: &SpeedDescriptor, beta1: f64, mode: PinchingMode) -> f64 {
    let cyl = CurvatureVector::cylinder(speed.n());
    let df1 = speed.gradient_unchecked(cyl.as_slice())[0] / speed.scale();
    match mode {
        PinchingMode::Convex => 1.0 - df1 / beta1,
        PinchingMode::Concave => df1 / beta1,
    }
}

fn unit(z: &[f64]) -> Vec<f64> {
    let r = z.iter().map(|x| x * x).sum::<f64>().sqrt();
    z.iter().map(|x| x / r).collect()
}

/// Coordinate ascent on the unit slice with step halving.
fn refine(speed: &SpeedDescriptor, beta1: f64, mode: PinchingMode, start: &[f64]) -> (f64, Vec<f64>) {
    let eval = |z: &[f64]| -> Option<f64> {
        speed
            .cone()
            .contains_closed(z)
            .then(|| ratio(&sample_at(speed, beta1, z, mode)))
            .flatten()
    };
    let mut best = start.to_vec();
    let mut best_ratio = eval(start).unwrap_or(f64::NEG_INFINITY);
    let mut step = ASCENT_STEP;
    for _ in 0..ASCENT_ITERATIONS {
        let mut improved = false;
        for i in 0..best.len() {
            for dir in [1.0, -1.0] {
                let mut trial = best.clone();
                trial[i] += dir * step;
                let trial = unit(&trial);
                if let Some(r) = eval(&trial) {
                    if r > best_ratio {
                        best_ratio = r;
                        best = trial;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best_ratio, best)
}

/// Empirical `β₂ = sup quantity/min zᵢ` over `Λ̄ ∩ {‖z‖ = 1}`.
pub fn estimate_beta2(
    speed: &SpeedDescriptor,
    mode: PinchingMode,
    sample_count: usize,
    rng_seed: u64,
) -> Result<Beta2Estimate> {
    if sample_count == 0 {
        return Err(LabError::InvalidInput("sample_count must be >= 1".into()));
    }
    let beta1 = beta1_of(speed, mode)?;
    let n = speed.n();
    let samples = par_map_indexed(sample_count, |i| {
        let mut rng = index_rng(rng_seed, i as u64);
        let z = sample_unit_slice(&mut rng, n, |x| speed.cone().contains(x))?;
        Some(sample_at(speed, beta1, &z, mode))
    });
    let mut in_closure = 0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in samples.iter().flatten() {
        if s.quantity >= 0.0 {
            in_closure += 1;
        }
        if let Some(r) = ratio(s) {
            if best.as_ref().is_none_or(|(b, _)| r > *b) {
                best = Some((r, s.z.clone()));
            }
        }
    }
    let (best_sample_ratio, start) = best.ok_or_else(|| {
        LabError::SamplingFailure(format!(
            "none of {sample_count} samples landed in the closure of Λ ({} mode)",
            mode.name()
        ))
    })?;
    let (refined, witness) = refine(speed, beta1, mode, &start);
    let ray_limit = cylinder_ray_limit(speed, beta1, mode);
    let (beta2, witness) = if ray_limit > refined {
        (ray_limit, None)
    } else {
        (refined, Some(witness))
    };
    Ok(Beta2Estimate {
        speed: speed.name().to_string(),
        n,
        mode,
        beta1,
        beta2,
        witness,
        ray_limit,
        samples: sample_count,
        samples_in_closure: in_closure,
        best_sample_ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaValidation {
    pub samples: usize,
    pub in_lambda: usize,
    /// Samples of `Λ` with `min zᵢ ≤ 0` (must be none: `Λ ⊂ Γ₊`).
    pub containment_violations: usize,
    /// Samples of `Λ̄` with `quantity > (β₂ + slack)·min zᵢ`.
    pub beta2_violations: usize,
    /// Largest `quantity / min zᵢ` seen on `Λ̄`.
    pub max_ratio: f64,
    pub passed: bool,
}

/// Checks `Λ ⊂ Γ₊` and the `β₂` inequality on fresh samples of the cone.
pub fn validate_lambda(
    speed: &SpeedDescriptor,
    mode: PinchingMode,
    beta2: f64,
    sample_count: usize,
    rng_seed: u64,
) -> Result<LambdaValidation> {
    let beta1 = beta1_of(speed, mode)?;
    let n = speed.n();
    let samples = par_map_indexed(sample_count, |i| {
        let mut rng = index_rng(rng_seed, i as u64);
        let z = sample_unit_slice(&mut rng, n, |x| speed.cone().contains(x))?;
        Some(sample_at(speed, beta1, &z, mode))
    });
    let mut v = LambdaValidation {
        samples: 0,
        in_lambda: 0,
        containment_violations: 0,
        beta2_violations: 0,
        max_ratio: f64::NEG_INFINITY,
        passed: false,
    };
    for s in samples.iter().flatten() {
        v.samples += 1;
        if s.in_lambda {
            v.in_lambda += 1;
            if s.min_entry <= 0.0 {
                v.containment_violations += 1;
            }
        }
        if s.quantity >= 0.0 {
            if s.quantity > (beta2 + BETA2_SLACK) * s.min_entry {
                v.beta2_violations += 1;
            }
            if let Some(r) = ratio(s) {
                v.max_ratio = v.max_ratio.max(r);
            }
        }
    }
    v.passed = v.samples > 0 && v.in_lambda > 0 && v.containment_violations == 0 && v.beta2_violations == 0;
    Ok(v)
}

/// Checks `tz + (1 − t)w ∈ Λ` for sampled pairs `z, w ∈ Λ`.
pub fn lambda_convexity_violations(
    speed: &SpeedDescriptor,
    mode: PinchingMode,
    pair_count: usize,
    rng_seed: u64,
) -> Result<usize> {
    let beta1 = beta1_of(speed, mode)?;
    let n = speed.n();
    let in_lambda = |x: &[f64]| speed.cone().contains(x) && quantity_raw(speed, beta1, x, mode) > 0.0;
    let bad = par_map_indexed(pair_count, |i| {
        let mut rng = index_rng(rng_seed, i as u64);
        let (Some(z), Some(w)) = (
            sample_unit_slice(&mut rng, n, in_lambda),
            sample_unit_slice(&mut rng, n, in_lambda),
        ) else {
            return false;
        };
        (1..10).any(|k| {
            let t = k as f64 / 10.0;
            let m: Vec<f64> = z.iter().zip(&w).map(|(a, b)| t * a + (1.0 - t) * b).collect();
            !in_lambda(&m)
        })
    });
    Ok(bad.into_iter().filter(|b| *b).count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceProbeReport {
    pub speed: String,
    pub n: usize,
    pub mode: PinchingMode,
    pub points: usize,
    /// Face points with `z₂ = … = zₙ` (relative spread ≤ 1e-6).
    pub diagonal_points: usize,
    /// Diagonal points whose quantity is not zero.
    pub nonzero_on_diagonal: usize,
    /// Off-diagonal points violating the sign condition (`< 0` concave, `≤ 0` convex).
    pub sign_violations: usize,
    /// Points whose membership changed under `z ↦ kz`, `k ∈ {0.1, 10}`.
    pub scaling_mismatches: usize,
    /// Largest quantity found off the diagonal, relative to `‖z‖`.
    pub max_off_diagonal: f64,
    pub passed: bool,
}

/// Scans the face `z₁ = 0` on the grid `zᵢ ∈ {1/grid, …, 1}` for `i ≥ 2`.
pub fn boundary_ray_probe(speed: &SpeedDescriptor, mode: PinchingMode, grid: usize) -> Result<FaceProbeReport> {
    if grid < 2 {
        return Err(LabError::InvalidInput("grid must be at least 2".into()));
    }
    let beta1 = beta1_of(speed, mode)?;
    let n = speed.n();
    if n < 2 {
        return Err(LabError::InvalidInput("the face probe needs n >= 2".into()));
    }
    let m = n - 1;
    let total = grid.checked_pow(m as u32).ok_or_else(|| {
        LabError::InvalidInput(format!("grid {grid}^{m} points is too large"))
    })?;
    let mut report = FaceProbeReport {
        speed: speed.name().to_string(),
        n,
        mode,
        points: 0,
        diagonal_points: 0,
        nonzero_on_diagonal: 0,
        sign_violations: 0,
        scaling_mismatches: 0,
        max_off_diagonal: f64::NEG_INFINITY,
        passed: false,
    };
    for idx in 0..total {
        let mut rem = idx;
        let mut z = vec![0.0; n];
        for zi in z.iter_mut().skip(1) {
            *zi = ((rem % grid) + 1) as f64 / grid as f64;
            rem /= grid;
        }
        if !speed.cone().contains_closed(&z) {
            continue;
        }
        report.points += 1;
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        let q = quantity_raw(speed, beta1, &z, mode);
        let (lo, hi) = z[1..]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
        let diagonal = (hi - lo) <= DIAGONAL_SPREAD * hi;
        let tol = FACE_TOL * norm;
        if diagonal {
            report.diagonal_points += 1;
            if q.abs() > tol {
                report.nonzero_on_diagonal += 1;
            }
        } else {
            report.max_off_diagonal = report.max_off_diagonal.max(q / norm);
            let bad = match mode {
                PinchingMode::Concave => q >= 0.0,
                PinchingMode::Convex => q > tol,
            };
            if bad {
                report.sign_violations += 1;
            }
        }
        for k in [0.1, 10.0] {
            let zk: Vec<f64> = z.iter().map(|x| k * x).collect();
            let qk = quantity_raw(speed, beta1, &zk, mode);
            let member = |v: f64, t: f64| v > t;
            if member(q, tol) != member(qk, k * tol) {
                report.scaling_mismatches += 1;
            }
        }
    }
    report.passed = report.points > 0
        && report.diagonal_points > 0
        && report.nonzero_on_diagonal == 0
        && report.sign_violations == 0
        && report.scaling_mismatches == 0;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speeds::SpeedKind;
    use approx::assert_relative_eq;

    fn cv(v: &[f64]) -> CurvatureVector {
        CurvatureVector::new(v.to_vec()).unwrap()
    }

    fn speed(kind: SpeedKind) -> SpeedDescriptor {
        SpeedDescriptor::new(kind, 3).unwrap()
    }

    #[test]
    fn gamma2_examples() {
        assert!(gamma2_membership(&cv(&[0.0, 1.0, 1.0])));
        assert!(!gamma2_membership(&cv(&[-1.0, 0.5, 1.0])));
        assert!(gamma2_membership(&cv(&[-0.4, 0.5, 1.0])));
    }

    #[test]
    fn quantity_examples() {
        for kind in SpeedKind::ALL {
            let s = speed(kind);
            let q = lambda_quantity(&s, &cv(&[0.0, 1.0, 1.0]), PinchingMode::Concave).unwrap();
            assert!(q.quantity.abs() < 1e-14, "{kind}: {q:?}");
            assert!(!q.in_lambda);
            let q = lambda_quantity(&s, &cv(&[1.0, 1.0, 1.0]), PinchingMode::Concave).unwrap();
            assert!(q.quantity > 0.0 && q.in_lambda, "{kind}");
        }
        let q = lambda_quantity(&speed(SpeedKind::Mean), &cv(&[1.0, 1.0, 1.0]), PinchingMode::Convex).unwrap();
        assert_relative_eq!(q.quantity, 0.5);
    }

    #[test]
    fn quantity_ignores_normalization_and_is_homogeneous() {
        let raw = speed(SpeedKind::TwoHarmonicMean);
        let norm = SpeedDescriptor::normalized(SpeedKind::TwoHarmonicMean, 3).unwrap();
        let z = cv(&[0.3, 0.8, 1.1]);
        let a = lambda_quantity(&raw, &z, PinchingMode::Concave).unwrap();
        let b = lambda_quantity(&norm, &z, PinchingMode::Concave).unwrap();
        assert_relative_eq!(a.quantity, b.quantity, epsilon = 1e-14);
        let z7 = cv(&[2.1, 5.6, 7.7]);
        let c = lambda_quantity(&raw, &z7, PinchingMode::Concave).unwrap();
        assert_relative_eq!(c.quantity, 7.0 * a.quantity, max_relative = 1e-10);
    }

    #[test]
    fn face_point_off_diagonal_is_outside() {
        let s = speed(SpeedKind::TwoHarmonicMean);
        // f(0,1,2) = 1/(1 + 1/2 + 1/3) = 6/11, β₁ = 2/5
        let q = lambda_quantity(&s, &cv(&[0.0, 1.0, 2.0]), PinchingMode::Concave).unwrap();
        assert_relative_eq!(q.quantity, 2.5 * 6.0 / 11.0 - 2.0, epsilon = 1e-14);
        assert!(q.quantity < 0.0);
    }

    #[test]
    fn mean_convex_beta2_is_one_half() {
        // (z₁ + z₂ − z₃)/(2z₁) ≤ 1/2 on Λ, with equality at (1,1,1)
        let e = estimate_beta2(&speed(SpeedKind::Mean), PinchingMode::Convex, 20_000, 1).unwrap();
        assert!(e.beta2 >= 0.5 - 1e-12, "{e:?}");
        assert!(e.beta2 <= 0.5 + 1e-9, "{e:?}");
    }

    #[test]
    fn two_harmonic_concave_beta2_validates() {
        let s = speed(SpeedKind::TwoHarmonicMean);
        let e = estimate_beta2(&s, PinchingMode::Concave, 20_000, 7).unwrap();
        assert!(e.beta2.is_finite() && e.beta2 > 0.0);
        let v = validate_lambda(&s, PinchingMode::Concave, e.beta2, 20_000, 8).unwrap();
        assert!(v.passed, "{e:?} {v:?}");
    }

    #[test]
    fn lambda_is_convex_for_the_mean_speed() {
        let bad = lambda_convexity_violations(&speed(SpeedKind::Mean), PinchingMode::Convex, 2000, 5).unwrap();
        assert_eq!(bad, 0);
    }

    #[test]
    fn face_probe_finds_only_the_diagonal() {
        for kind in SpeedKind::ALL {
            let r = boundary_ray_probe(&speed(kind), PinchingMode::Concave, 40).unwrap();
            assert!(r.passed, "{kind}: {r:?}");
        }
        let r = boundary_ray_probe(&speed(SpeedKind::Mean), PinchingMode::Convex, 40).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn degenerate_inputs() {
        assert!(boundary_ray_probe(&speed(SpeedKind::Mean), PinchingMode::Concave, 1).is_err());
        assert!(estimate_beta2(&speed(SpeedKind::Mean), PinchingMode::Concave, 0, 1).is_err());
    }
}
