//! Admissible curvature speeds `f(κ)`.
//!
//! A speed is a smooth, symmetric, 1-homogeneous function of the principal
//! curvatures that is strictly increasing in each entry on an open symmetric
//! cone. The shipped speeds are the mean curvature, the two-harmonic mean
//! curvature and (for `n = 3` only) the square root of the scalar curvature
//! and the ratio of scalar to mean curvature.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::sampling::{index_rng, log_uniform, par_map_indexed, sample_cone_point, sample_unit_slice};

/// Relative tolerance for strict cone membership.
pub const CONE_TOL: f64 = 1e-12;
/// Central-difference step relative to `max(‖κ‖, 1)`.
pub const FD_REL_STEP: f64 = 1e-5;
/// Permutation invariance tolerance (relative).
pub const SYMMETRY_TOL: f64 = 1e-12;
/// 1-homogeneity tolerance (relative).
pub const HOMOGENEITY_TOL: f64 = 1e-10;
/// Hessian sign tolerance for the concavity checks, multiplied by the speed scale.
pub const CONCAVITY_TOL: f64 = 1e-8;

fn norm(k: &[f64]) -> f64 {
    k.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Principal curvatures `κ = (κ₁, …, κₙ)` of a hypersurface at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureVector {
    kappa: Vec<f64>,
}

impl CurvatureVector {
    pub fn new(kappa: Vec<f64>) -> Result<Self> {
        if kappa.is_empty() {
            return Err(LabError::InvalidInput("curvature vector needs n >= 1".into()));
        }
        if let Some(bad) = kappa.iter().find(|x| !x.is_finite()) {
            return Err(LabError::InvalidInput(format!("non-finite curvature {bad}")));
        }
        Ok(Self { kappa })
    }

    /// The cylinder configuration `(0, 1, …, 1)`.
    pub fn cylinder(n: usize) -> Self {
        let mut kappa = vec![1.0; n];
        kappa[0] = 0.0;
        Self { kappa }
    }

    pub fn n(&self) -> usize {
        self.kappa.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.kappa
    }

    pub fn norm(&self) -> f64 {
        norm(&self.kappa)
    }

    pub fn min(&self) -> f64 {
        self.kappa.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.kappa.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `min_{i<j} (κᵢ + κⱼ)`; `+∞` when `n = 1`.
    pub fn min_pair_sum(&self) -> f64 {
        min_pair_sum(&self.kappa)
    }

    pub fn is_two_convex(&self) -> bool {
        self.min_pair_sum() > 0.0
    }
}

pub(crate) fn min_pair_sum(k: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..k.len() {
        for j in i + 1..k.len() {
            best = best.min(k[i] + k[j]);
        }
    }
    best
}

/// Open symmetric cones on which the shipped speeds are admissible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cone {
    /// `Γ₁ = {Σκᵢ > 0}`.
    PositiveMean,
    /// `Γ² = {κᵢ + κⱼ > 0 for all i < j}`.
    TwoConvex,
    /// Gårding cone `{σ₁ > 0, σ₂ > 0}`.
    PositiveScalar,
}

impl Cone {
    pub fn name(&self) -> &'static str {
        match self {
            Cone::PositiveMean => "positive-mean",
            Cone::TwoConvex => "two-convex",
            Cone::PositiveScalar => "positive-scalar",
        }
    }

    /// Describes the violated condition, or `None` when `k` is inside.
    ///
    /// With `strict` the open cone is tested with margin `CONE_TOL·‖κ‖`
    /// (`‖κ‖²` for the quadratic condition); otherwise the closure is tested
    /// with the same slack in the other direction.
    pub fn violation(&self, k: &[f64], strict: bool) -> Option<String> {
        let scale = norm(k);
        let lin_tol = CONE_TOL * scale;
        let quad_tol = CONE_TOL * scale * scale;
        let ok = |value: f64, tol: f64| if strict { value > tol } else { value >= -tol };
        let sigma1: f64 = k.iter().sum();
        match self {
            Cone::PositiveMean => {
                (!ok(sigma1, lin_tol)).then(|| format!("sum of curvatures {sigma1:e} is not positive"))
            }
            Cone::TwoConvex => {
                for i in 0..k.len() {
                    for j in i + 1..k.len() {
                        let s = k[i] + k[j];
                        if !ok(s, lin_tol) {
                            return Some(format!(
                                "pair (κ{}, κ{}) has sum {s:e}, not positive",
                                i + 1,
                                j + 1
                            ));
                        }
                    }
                }
                None
            }
            Cone::PositiveScalar => {
                let sigma2 = sigma2(k);
                if !ok(sigma1, lin_tol) {
                    Some(format!("σ₁ = {sigma1:e} is not positive"))
                } else if !ok(sigma2, quad_tol) {
                    Some(format!("σ₂ = {sigma2:e} is not positive"))
                } else {
                    None
                }
            }
        }
    }

    pub fn contains(&self, k: &[f64]) -> bool {
        self.violation(k, true).is_none()
    }

    pub fn contains_closed(&self, k: &[f64]) -> bool {
        self.violation(k, false).is_none()
    }
}

fn sigma2(k: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..k.len() {
        for j in i + 1..k.len() {
            s += k[i] * k[j];
        }
    }
    s
}

/// The shipped speed functions, identified by stable names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpeedKind {
    Mean,
    TwoHarmonicMean,
    SqrtScalar,
    ScalarToMean,
}

impl SpeedKind {
    pub const ALL: [SpeedKind; 4] = [
        SpeedKind::Mean,
        SpeedKind::TwoHarmonicMean,
        SpeedKind::SqrtScalar,
        SpeedKind::ScalarToMean,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SpeedKind::Mean => "mean",
            SpeedKind::TwoHarmonicMean => "two-harmonic-mean",
            SpeedKind::SqrtScalar => "sqrt-scalar",
            SpeedKind::ScalarToMean => "scalar-to-mean",
        }
    }

    pub fn cone(&self) -> Cone {
        match self {
            SpeedKind::Mean => Cone::PositiveMean,
            SpeedKind::TwoHarmonicMean => Cone::TwoConvex,
            SpeedKind::SqrtScalar | SpeedKind::ScalarToMean => Cone::PositiveScalar,
        }
    }
}

impl fmt::Display for SpeedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SpeedKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        SpeedKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| LabError::InvalidInput(format!("unknown speed `{s}`")))
    }
}

/// A speed `scale·f(κ)` in dimension `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedDescriptor {
    kind: SpeedKind,
    n: usize,
    scale: f64,
}

impl SpeedDescriptor {
    pub fn new(kind: SpeedKind, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(LabError::InvalidInput("dimension must be at least 1".into()));
        }
        match kind {
            SpeedKind::SqrtScalar | SpeedKind::ScalarToMean if n != 3 => {
                return Err(LabError::UnsupportedDimension {
                    speed: kind.name(),
                    required: 3,
                    got: n,
                })
            }
            SpeedKind::TwoHarmonicMean if n < 2 => {
                return Err(LabError::InvalidInput(
                    "two-harmonic-mean needs n >= 2 (no curvature pairs otherwise)".into(),
                ))
            }
            _ => {}
        }
        Ok(Self { kind, n, scale: 1.0 })
    }

    /// The speed rescaled so that its value on `(0, 1, …, 1)` is `n − 1`.
    pub fn normalized(kind: SpeedKind, n: usize) -> Result<Self> {
        Ok(cylinder_value_and_normalize(&Self::new(kind, n)?)?.1)
    }

    pub fn with_scale(self, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(LabError::InvalidSpeed(format!("scale {scale} must be positive")));
        }
        Ok(Self { scale, ..self })
    }

    pub fn kind(&self) -> SpeedKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn cone(&self) -> Cone {
        self.kind.cone()
    }

    pub fn homogeneity_degree(&self) -> u32 {
        1
    }

    pub fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(LabError::InvalidInput(format!(
                "speed `{}` has n = {}, got {} curvatures",
                self.name(),
                self.n,
                len
            )));
        }
        Ok(())
    }

    pub fn check_cone(&self, k: &[f64]) -> Result<()> {
        self.check_dim(k.len())?;
        match self.cone().violation(k, true) {
            None => Ok(()),
            Some(condition) => Err(LabError::ConeViolation {
                cone: self.cone().name(),
                condition,
            }),
        }
    }

    pub fn check_closed_cone(&self, k: &[f64]) -> Result<()> {
        self.check_dim(k.len())?;
        match self.cone().violation(k, false) {
            None => Ok(()),
            Some(condition) => Err(LabError::ConeViolation {
                cone: self.cone().name(),
                condition,
            }),
        }
    }

    /// `scale·f(κ)` without any cone check.
    pub fn value_unchecked(&self, k: &[f64]) -> f64 {
        self.scale * self.raw_value(k)
    }

    pub fn gradient_unchecked(&self, k: &[f64]) -> Vec<f64> {
        let mut g = self.raw_gradient(k);
        g.iter_mut().for_each(|x| *x *= self.scale);
        g
    }

    pub fn hessian_unchecked(&self, k: &[f64]) -> DMatrix<f64> {
        self.raw_hessian(k) * self.scale
    }

    fn raw_value(&self, k: &[f64]) -> f64 {
        match self.kind {
            SpeedKind::Mean => k.iter().sum(),
            SpeedKind::TwoHarmonicMean => {
                let mut s = 0.0;
                for i in 0..k.len() {
                    for j in i + 1..k.len() {
                        s += 1.0 / (k[i] + k[j]);
                    }
                }
                1.0 / s
            }
            SpeedKind::SqrtScalar => (2.0 * sigma2(k)).sqrt(),
            SpeedKind::ScalarToMean => 2.0 * sigma2(k) / k.iter().sum::<f64>(),
        }
    }

    fn raw_gradient(&self, k: &[f64]) -> Vec<f64> {
        let n = k.len();
        let sigma1: f64 = k.iter().sum();
        match self.kind {
            SpeedKind::Mean => vec![1.0; n],
            SpeedKind::TwoHarmonicMean => {
                let f = self.raw_value(k);
                (0..n)
                    .map(|a| {
                        let s: f64 = (0..n).filter(|&b| b != a).map(|b| (k[a] + k[b]).powi(-2)).sum();
                        f * f * s
                    })
                    .collect()
            }
            SpeedKind::SqrtScalar => {
                let f = self.raw_value(k);
                k.iter().map(|ka| (sigma1 - ka) / f).collect()
            }
            SpeedKind::ScalarToMean => {
                let q = 2.0 * sigma2(k);
                k.iter()
                    .map(|ka| 2.0 * (sigma1 - ka) / sigma1 - q / (sigma1 * sigma1))
                    .collect()
            }
        }
    }

    fn raw_hessian(&self, k: &[f64]) -> DMatrix<f64> {
        let n = k.len();
        let sigma1: f64 = k.iter().sum();
        match self.kind {
            SpeedKind::Mean => DMatrix::zeros(n, n),
            SpeedKind::TwoHarmonicMean => {
                // f = 1/g with g = Σ_{i<j} 1/(κᵢ+κⱼ)
                let g = 1.0 / self.raw_value(k);
                let dg: Vec<f64> = (0..n)
                    .map(|a| -(0..n).filter(|&b| b != a).map(|b| (k[a] + k[b]).powi(-2)).sum::<f64>())
                    .collect();
                DMatrix::from_fn(n, n, |a, b| {
                    let ddg = if a == b {
                        2.0 * (0..n).filter(|&c| c != a).map(|c| (k[a] + k[c]).powi(-3)).sum::<f64>()
                    } else {
                        2.0 * (k[a] + k[b]).powi(-3)
                    };
                    2.0 * dg[a] * dg[b] / g.powi(3) - ddg / (g * g)
                })
            }
            SpeedKind::SqrtScalar => {
                let f = self.raw_value(k);
                let dq: Vec<f64> = k.iter().map(|ka| 2.0 * (sigma1 - ka)).collect();
                DMatrix::from_fn(n, n, |a, b| {
                    let ddq = if a == b { 0.0 } else { 2.0 };
                    ddq / (2.0 * f) - dq[a] * dq[b] / (4.0 * f.powi(3))
                })
            }
            SpeedKind::ScalarToMean => {
                let q = 2.0 * sigma2(k);
                let dq: Vec<f64> = k.iter().map(|ka| 2.0 * (sigma1 - ka)).collect();
                DMatrix::from_fn(n, n, |a, b| {
                    let ddq = if a == b { 0.0 } else { 2.0 };
                    ddq / sigma1 - (dq[a] + dq[b]) / (sigma1 * sigma1) + 2.0 * q / sigma1.powi(3)
                })
            }
        }
    }
}

/// A symmetric function of curvatures that can be put through the sampling
/// checks. Implemented by [`SpeedDescriptor`]; tests implement it for
/// negative controls.
pub trait CurvatureFunction: Sync {
    fn dim(&self) -> usize;

    fn value_at(&self, k: &[f64]) -> f64;

    /// Strict (open) domain membership.
    fn in_domain(&self, k: &[f64]) -> bool;

    fn gradient_at(&self, k: &[f64]) -> Result<Vec<f64>> {
        central_gradient(|x| self.value_at(x), |x| self.in_domain(x), k)
    }

    /// Multiplier applied to the concavity tolerance.
    fn tolerance_scale(&self) -> f64 {
        1.0
    }
}

impl CurvatureFunction for SpeedDescriptor {
    fn dim(&self) -> usize {
        self.n
    }

    fn value_at(&self, k: &[f64]) -> f64 {
        self.value_unchecked(k)
    }

    fn in_domain(&self, k: &[f64]) -> bool {
        k.len() == self.n && self.cone().contains(k)
    }

    fn gradient_at(&self, k: &[f64]) -> Result<Vec<f64>> {
        self.check_cone(k)?;
        Ok(self.gradient_unchecked(k))
    }

    fn tolerance_scale(&self) -> f64 {
        self.scale
    }
}

fn fd_step(k: &[f64]) -> f64 {
    FD_REL_STEP * norm(k).max(1.0)
}

/// Shrinks the step until the whole axis-aligned stencil lies inside.
fn stencil_step(inside: &dyn Fn(&[f64]) -> bool, k: &[f64]) -> Result<f64> {
    let floor = 1e-12 * norm(k).max(1.0);
    let mut h = fd_step(k);
    let mut probe = k.to_vec();
    while h >= floor {
        let ok = (0..k.len()).all(|i| {
            [h, -h].iter().all(|d| {
                probe[i] = k[i] + d;
                let r = inside(&probe);
                probe[i] = k[i];
                r
            })
        });
        if ok {
            return Ok(h);
        }
        h *= 0.5;
    }
    Err(LabError::BoundaryProximity(k.to_vec()))
}

/// Central-difference gradient with step `1e-5·max(‖κ‖, 1)`, halved while
/// the stencil leaves the domain.
pub fn central_gradient(
    value: impl Fn(&[f64]) -> f64,
    inside: impl Fn(&[f64]) -> bool,
    k: &[f64],
) -> Result<Vec<f64>> {
    if !inside(k) {
        return Err(LabError::BoundaryProximity(k.to_vec()));
    }
    let h = stencil_step(&inside, k)?;
    let mut x = k.to_vec();
    Ok((0..k.len())
        .map(|i| {
            x[i] = k[i] + h;
            let fp = value(&x);
            x[i] = k[i] - h;
            let fm = value(&x);
            x[i] = k[i];
            (fp - fm) / (2.0 * h)
        })
        .collect())
}

/// Finite-difference Hessian obtained by central differences of a gradient,
/// symmetrised.
pub fn fd_hessian(
    gradient: impl Fn(&[f64]) -> Result<Vec<f64>>,
    inside: impl Fn(&[f64]) -> bool,
    k: &[f64],
) -> Result<DMatrix<f64>> {
    let n = k.len();
    let h = stencil_step(&inside, k)?;
    let mut hess = DMatrix::zeros(n, n);
    let mut x = k.to_vec();
    for j in 0..n {
        x[j] = k[j] + h;
        let gp = gradient(&x)?;
        x[j] = k[j] - h;
        let gm = gradient(&x)?;
        x[j] = k[j];
        for i in 0..n {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    Ok((&hess + hess.transpose()) * 0.5)
}

/// Evaluates `scale·f(κ)` on the interior of the speed's cone.
pub fn eval_speed(speed: &SpeedDescriptor, kappa: &CurvatureVector) -> Result<f64> {
    speed.check_cone(kappa.as_slice())?;
    Ok(speed.value_unchecked(kappa.as_slice()))
}

/// `(∂f/∂κ₁, …, ∂f/∂κₙ)` in closed form.
pub fn grad_speed(speed: &SpeedDescriptor, kappa: &CurvatureVector) -> Result<Vec<f64>> {
    speed.gradient_at(kappa.as_slice())
}

/// Closed-form Hessian `∂²f/∂κᵢ∂κⱼ`.
pub fn hessian_speed(speed: &SpeedDescriptor, kappa: &CurvatureVector) -> Result<DMatrix<f64>> {
    speed.check_cone(kappa.as_slice())?;
    Ok(speed.hessian_unchecked(kappa.as_slice()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub symmetry_ok: bool,
    pub monotone_ok: bool,
    pub homogeneous_ok: bool,
    /// Largest of the three individual violations.
    pub worst_violation: f64,
    pub samples_used: usize,
    pub symmetry_violation: f64,
    /// `max(0, −min ∂f/∂κᵢ)` over all samples.
    pub monotonicity_violation: f64,
    pub homogeneity_violation: f64,
    pub min_gradient: f64,
}

impl AdmissibilityReport {
    pub fn passed(&self) -> bool {
        self.symmetry_ok && self.monotone_ok && self.homogeneous_ok
    }
}

struct AdmissibilitySample {
    symmetry: f64,
    homogeneity: f64,
    min_gradient: f64,
}

/// Samples the domain interior and records the worst violation of
/// permutation symmetry, strict monotonicity and 1-homogeneity.
pub fn check_admissible<F: CurvatureFunction + ?Sized>(
    speed: &F,
    sample_count: usize,
    rng_seed: u64,
) -> Result<AdmissibilityReport> {
    if sample_count == 0 {
        return Err(LabError::InvalidInput("sample_count must be >= 1".into()));
    }
    let n = speed.dim();
    let samples = par_map_indexed(sample_count, |i| -> Option<Result<AdmissibilitySample>> {
        let mut rng = index_rng(rng_seed, i as u64);
        let k = sample_cone_point(&mut rng, n, |x| speed.in_domain(x))?;
        let f = speed.value_at(&k);
        // |f| alone loses all digits where f nearly cancels at the cone edge
        let denom = (f.abs() + speed.tolerance_scale() * norm(&k)).max(f64::MIN_POSITIVE);

        let mut perm = k.clone();
        perm.shuffle(&mut rng);
        let symmetry = (speed.value_at(&perm) - f).abs() / denom;

        let lambda = log_uniform(&mut rng, 0.1, 10.0);
        let scaled: Vec<f64> = k.iter().map(|x| lambda * x).collect();
        let homogeneity = (speed.value_at(&scaled) - lambda * f).abs() / (lambda * denom);

        Some(speed.gradient_at(&k).map(|g| AdmissibilitySample {
            symmetry,
            homogeneity,
            min_gradient: g.into_iter().fold(f64::INFINITY, f64::min),
        }))
    });

    let mut used = 0;
    let (mut sym, mut hom, mut min_grad) = (0.0_f64, 0.0_f64, f64::INFINITY);
    for s in samples.into_iter().flatten() {
        let s = s?;
        used += 1;
        sym = sym.max(s.symmetry);
        hom = hom.max(s.homogeneity);
        min_grad = min_grad.min(s.min_gradient);
    }
    if used == 0 {
        return Err(LabError::SamplingFailure("no sample landed inside the domain".into()));
    }
    let mono = (-min_grad).max(0.0);
    Ok(AdmissibilityReport {
        symmetry_ok: sym <= SYMMETRY_TOL,
        monotone_ok: min_grad > 0.0,
        homogeneous_ok: hom <= HOMOGENEITY_TOL,
        worst_violation: sym.max(hom).max(mono),
        samples_used: used,
        symmetry_violation: sym,
        monotonicity_violation: mono,
        homogeneity_violation: hom,
        min_gradient: min_grad,
    })
}

fn face_point(y: &[f64]) -> Vec<f64> {
    std::iter::once(0.0).chain(y.iter().map(|v| 1.0 / v)).collect()
}

fn check_dual_input(speed: &SpeedDescriptor, y: &[f64]) -> Result<Vec<f64>> {
    if speed.n() < 2 || y.len() != speed.n() - 1 {
        return Err(LabError::InvalidInput(format!(
            "dual speed needs n - 1 = {} positive entries, got {}",
            speed.n().saturating_sub(1),
            y.len()
        )));
    }
    if let Some(bad) = y.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(LabError::InvalidInput(format!("dual argument {bad} is not positive")));
    }
    let face = face_point(y);
    speed.check_closed_cone(&face)?;
    Ok(face)
}

/// `f*(y) = 1 / f(0, 1/y₂, …, 1/yₙ)`.
pub fn dual_speed_eval(speed: &SpeedDescriptor, y: &[f64]) -> Result<f64> {
    let face = check_dual_input(speed, y)?;
    let f = speed.value_unchecked(&face);
    if f <= 0.0 {
        return Err(LabError::ConeViolation {
            cone: speed.cone().name(),
            condition: format!("speed vanishes on the face point {face:?}"),
        });
    }
    Ok(1.0 / f)
}

/// Gradient of the dual speed via the chain rule.
pub fn dual_speed_gradient(speed: &SpeedDescriptor, y: &[f64]) -> Result<Vec<f64>> {
    let face = check_dual_input(speed, y)?;
    let f = speed.value_unchecked(&face);
    let g = speed.gradient_unchecked(&face);
    Ok(y.iter()
        .enumerate()
        .map(|(k, yk)| g[k + 1] / (yk * yk * f * f))
        .collect())
}

/// The dual speed viewed as a function on the positive cone `Γ₊^{n−1}`.
struct DualSpeed<'a>(&'a SpeedDescriptor);

impl CurvatureFunction for DualSpeed<'_> {
    fn dim(&self) -> usize {
        self.0.n() - 1
    }

    fn value_at(&self, y: &[f64]) -> f64 {
        1.0 / self.0.value_unchecked(&face_point(y))
    }

    fn in_domain(&self, y: &[f64]) -> bool {
        y.iter().all(|v| *v > CONE_TOL * norm(y)) && self.0.cone().contains_closed(&face_point(y))
    }

    fn gradient_at(&self, y: &[f64]) -> Result<Vec<f64>> {
        dual_speed_gradient(self.0, y)
    }

    fn tolerance_scale(&self) -> f64 {
        // f* scales like 1/scale
        1.0 / self.0.scale()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcavityMode {
    Convex,
    Concave,
    DualConcave,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcavityReport {
    pub mode: ConcavityMode,
    /// Largest tangential Hessian eigenvalue for the concave modes, smallest
    /// for the convex mode.
    pub extremal_eigenvalue: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub samples_used: usize,
    pub worst_point: Vec<f64>,
}

/// Orthonormal basis of the hyperplane orthogonal to `k`, as columns.
pub(crate) fn tangent_basis(k: &[f64]) -> DMatrix<f64> {
    let n = k.len();
    let r = norm(k);
    let radial: Vec<f64> = k.iter().map(|x| x / r).collect();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
    for e in 0..n {
        if basis.len() == n - 1 {
            break;
        }
        let mut v = vec![0.0; n];
        v[e] = 1.0;
        for b in std::iter::once(&radial).chain(basis.iter()) {
            let d: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            v.iter_mut().zip(b).for_each(|(a, c)| *a -= d * c);
        }
        let len = norm(&v);
        if len > 1e-6 {
            basis.push(v.into_iter().map(|x| x / len).collect());
        }
    }
    DMatrix::from_fn(n, n - 1, |i, j| basis[j][i])
}

/// Eigenvalues of the Hessian restricted to the tangent space of the sphere
/// through `k` (the radial null direction of a 1-homogeneous function removed).
pub(crate) fn tangential_spectrum(hess: &DMatrix<f64>, k: &[f64]) -> Vec<f64> {
    if k.len() < 2 {
        return Vec::new();
    }
    let t = tangent_basis(k);
    let restricted = t.transpose() * hess * &t;
    SymmetricEigen::new(restricted).eigenvalues.iter().copied().collect()
}

/// Samples the unit slice of the domain and checks the sign of the
/// finite-difference Hessian in the tangential directions.
pub fn check_concavity<F: CurvatureFunction + ?Sized>(
    speed: &F,
    mode: ConcavityMode,
    sample_count: usize,
    rng_seed: u64,
) -> Result<ConcavityReport> {
    if sample_count == 0 {
        return Err(LabError::InvalidInput("sample_count must be >= 1".into()));
    }
    let tolerance = CONCAVITY_TOL * speed.tolerance_scale();
    let n = speed.dim();
    let results = par_map_indexed(sample_count, |i| -> Option<Result<(f64, Vec<f64>)>> {
        let mut rng = index_rng(rng_seed, i as u64);
        let k = sample_unit_slice(&mut rng, n, |x| speed.in_domain(x))?;
        let spectrum = fd_hessian(|x| speed.gradient_at(x), |x| speed.in_domain(x), &k)
            .map(|h| tangential_spectrum(&h, &k));
        Some(spectrum.map(|s| {
            let ext = match mode {
                ConcavityMode::Convex => s.into_iter().fold(f64::INFINITY, f64::min),
                _ => s.into_iter().fold(f64::NEG_INFINITY, f64::max),
            };
            (ext, k)
        }))
    });
    let mut used = 0;
    let mut worst: Option<(f64, Vec<f64>)> = None;
    for r in results.into_iter().flatten() {
        let (ext, k) = r?;
        used += 1;
        let worse = match (&worst, mode) {
            (None, _) => true,
            (Some((w, _)), ConcavityMode::Convex) => ext < *w,
            (Some((w, _)), _) => ext > *w,
        };
        if worse {
            worst = Some((ext, k));
        }
    }
    let (extremal, point) =
        worst.ok_or_else(|| LabError::SamplingFailure("no sample landed inside the domain".into()))?;
    // a one-dimensional slice has no tangential directions
    let extremal = if extremal.is_finite() { extremal } else { 0.0 };
    let passed = match mode {
        ConcavityMode::Convex => extremal >= -tolerance,
        _ => extremal <= tolerance,
    };
    Ok(ConcavityReport {
        mode,
        extremal_eigenvalue: extremal,
        tolerance,
        passed,
        samples_used: used,
        worst_point: point,
    })
}

/// Concavity check for a shipped speed, including the dual mode.
pub fn check_speed_concavity(
    speed: &SpeedDescriptor,
    mode: ConcavityMode,
    sample_count: usize,
    rng_seed: u64,
) -> Result<ConcavityReport> {
    match mode {
        ConcavityMode::DualConcave => {
            if speed.n() < 2 {
                return Err(LabError::InvalidInput("dual speed needs n >= 2".into()));
            }
            check_concavity(&DualSpeed(speed), mode, sample_count, rng_seed)
        }
        _ => check_concavity(speed, mode, sample_count, rng_seed),
    }
}

/// Returns `β₁ = f(0, 1, …, 1)` for the unscaled speed and the speed rescaled
/// so that its value there is `n − 1`.
pub fn cylinder_value_and_normalize(speed: &SpeedDescriptor) -> Result<(f64, SpeedDescriptor)> {
    let cyl = CurvatureVector::cylinder(speed.n());
    speed.check_closed_cone(cyl.as_slice())?;
    let beta1 = speed.raw_value(cyl.as_slice());
    if !(beta1.is_finite() && beta1 > 0.0) {
        return Err(LabError::InvalidSpeed(format!(
            "`{}` takes the value {beta1} on the cylinder (0, 1, ..., 1)",
            speed.name()
        )));
    }
    let normalized = speed.with_scale((speed.n() - 1) as f64 / beta1)?;
    Ok((beta1, normalized))
}
