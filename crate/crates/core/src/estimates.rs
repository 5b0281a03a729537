//! Verification of the quantitative estimates on constructed translators.
//!
//! Limits and `o(·)` statements are checked as two-point decade comparisons
//! (`h_top/10` against `h_top`). Empirical constants (`C₁`, `h₀`, `β₂`) are
//! measured on the solution and then fed back into the inequalities they
//! are supposed to control.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bowl::{solve_profile_with, Profile, ProfilePoint};
use crate::cones::{boundary_ray_probe, estimate_beta2, validate_lambda, PinchingMode};
use crate::error::{LabError, Result};
use crate::matrix_calculus::iccond_sweep;
use crate::speeds::{CurvatureVector, SpeedDescriptor, SpeedKind};

/// Tolerance of the decade checks on `F√h`.
pub const ASYMPTOTIC_TOL: f64 = 0.05;
/// Tolerance of the blow-down radius and the girth limit.
pub const BLOWDOWN_TOL: f64 = 0.02;
pub const KAPPA1_RATIO_MAX: f64 = 0.05;
pub const SPEED_JACOBI_TOL: f64 = 1e-3;
pub const ROTATION_JACOBI_TOL: f64 = 1e-2;
pub const LINEARIZED_TOL: f64 = 1e-8;
/// Slack in the round-cross-section inequality, relative to `H²`.
pub const ROUND_CROSS_SECTION_SLACK: f64 = 1e-10;
/// Smallest `κ₁/F` admitted in the gradient ratio.
const KAPPA1_FLOOR: f64 = 1e-14;
/// Lowest height used by the decade checks.
const DECADE_SPAN: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub lemma_id: String,
    pub passed: bool,
    pub tolerance: f64,
    pub bound_constant: f64,
    /// `(h, value)` pairs on which the inequality was checked.
    pub measured: Vec<(f64, f64)>,
    pub extras: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl EstimateReport {
    fn new(lemma_id: &str, tolerance: f64) -> Self {
        Self {
            lemma_id: lemma_id.to_string(),
            passed: false,
            tolerance,
            bound_constant: 0.0,
            measured: Vec::new(),
            extras: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    fn extra(&mut self, key: &str, value: f64) {
        self.extras.insert(key.to_string(), value);
    }

    fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CylindricalMode {
    /// `|A|² − H²/(n − 1)`.
    Mcf,
    /// `κ₁ + κ₂ − β₁⁻¹F`.
    Convex,
    /// `κₙ − β₁⁻¹F`.
    Concave,
}

impl CylindricalMode {
    pub fn name(&self) -> &'static str {
        match self {
            CylindricalMode::Mcf => "mcf",
            CylindricalMode::Convex => "convex",
            CylindricalMode::Concave => "concave",
        }
    }

    /// The quantity is negative where the estimate holds.
    fn negative_is_good(&self) -> bool {
        !matches!(self, CylindricalMode::Convex)
    }
}

/// `β₁` of `speed` including its scale.
fn scaled_beta1(speed: &SpeedDescriptor) -> f64 {
    speed.value_unchecked(CurvatureVector::cylinder(speed.n()).as_slice())
}

/// The cylindrical-estimate quantity at a profile point. The estimate holds
/// where the result is negative (`mcf`, `concave`) or positive (`convex`).
pub fn cylindrical_quantity(point: &ProfilePoint, speed: &SpeedDescriptor, mode: CylindricalMode) -> Result<f64> {
    let n = point.n;
    if n < 2 {
        return Err(LabError::InvalidInput("cylindrical quantities need n >= 2".into()));
    }
    speed.check_dim(n)?;
    let mut k = point.curvatures();
    k.sort_by(f64::total_cmp);
    Ok(match mode {
        CylindricalMode::Mcf => {
            let h = point.mean_curvature();
            point.norm_a_sq() - h * h / (n - 1) as f64
        }
        CylindricalMode::Convex => k[0] + k[1] - point.f / scaled_beta1(speed),
        CylindricalMode::Concave => k[n - 1] - point.f / scaled_beta1(speed),
    })
}

fn check_top(profile: &Profile, h_top: f64, need_decade: bool) -> Result<()> {
    let lo = if need_decade { 1e3 } else { 1.0 };
    if !(h_top >= lo && h_top <= profile.height_max()) {
        return Err(LabError::OutOfRange {
            what: "h_top (insufficient h_max)",
            value: h_top,
            lo,
            hi: profile.height_max(),
        });
    }
    Ok(())
}

fn nodes_between(profile: &Profile, lo: f64, hi: f64) -> impl Iterator<Item = &ProfilePoint> {
    profile.nodes().iter().filter(move |p| p.u >= lo && p.u <= hi)
}

/// `true` when `values` is strictly decreasing.
fn strictly_decreasing(values: impl Iterator<Item = f64>) -> bool {
    let mut last = f64::INFINITY;
    for v in values {
        if v >= last {
            return false;
        }
        last = v;
    }
    true
}

/// Cylindrical estimate at every node, the decay of its `H²`-scaled size,
/// and (for MCF) the round-cross-section and strict-convexity inequalities.
pub fn cylindrical_estimate_report(profile: &Profile, mode: CylindricalMode, h_top: f64) -> Result<EstimateReport> {
    check_top(profile, h_top, true)?;
    let speed = profile.speed();
    let mut report = EstimateReport::new("cylindrical-estimate", 0.0);
    report.note(format!("mode {}", mode.name()));
    let mut sign_violations = 0usize;
    let mut cross_violations = 0usize;
    let mut convexity_violations = 0usize;
    for p in profile.nodes().iter().filter(|p| p.u <= h_top) {
        let q = cylindrical_quantity(p, speed, mode)?;
        report.measured.push((p.u, q));
        let ok = if mode.negative_is_good() { q < 0.0 } else { q > 0.0 };
        if !ok {
            sign_violations += 1;
        }
        let h = p.mean_curvature();
        let a = cylindrical_quantity(p, speed, CylindricalMode::Mcf)?;
        if a + p.kappa_min() * h < -ROUND_CROSS_SECTION_SLACK * h * h {
            cross_violations += 1;
        }
        if mode == CylindricalMode::Mcf && p.kappa_min() < -a / h {
            convexity_violations += 1;
        }
    }
    let scaled = |p: &ProfilePoint| -> Result<f64> {
        let h = p.mean_curvature();
        Ok(cylindrical_quantity(p, speed, CylindricalMode::Mcf)? / (h * h))
    };
    let top = scaled(&profile.point_at_height(h_top)?)?;
    let decreasing = strictly_decreasing(
        nodes_between(profile, h_top / DECADE_SPAN, h_top)
            .map(|p| scaled(p).map(f64::abs))
            .collect::<Result<Vec<_>>>()?
            .into_iter(),
    );
    report.bound_constant = top.abs();
    report.extra("sign_violations", sign_violations as f64);
    report.extra("round_cross_section_violations", cross_violations as f64);
    report.extra("strict_convexity_violations", convexity_violations as f64);
    report.extra("scaled_quantity_at_top", top);
    report.extra("scaled_decreasing", f64::from(u8::from(decreasing)));
    report.passed = sign_violations == 0
        && cross_violations == 0
        && convexity_violations == 0
        && (mode != CylindricalMode::Mcf || (top.abs() < KAPPA1_RATIO_MAX && decreasing));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    /// `sup (|∇A|²/F⁴)/(κ₁/F)` over `h ≥ h_burn`.
    pub c1: f64,
    /// Height beyond which `F·√(4C₁h) ≥ 1` is asserted.
    pub h0: f64,
    /// Height where `F` first drops below `1/√3`.
    pub h1: f64,
    pub excluded_nodes: usize,
    pub report: EstimateReport,
}

/// Measures `C₁` and checks the lower bound `F ≥ 1/√(4C₁h)` for `h ≥ h₀`.
pub fn gradient_ratio_and_c1(profile: &Profile, h_burn: f64) -> Result<GradientEstimate> {
    if profile.height_max() < 10.0 * h_burn {
        return Err(LabError::OutOfRange {
            what: "h_max (must reach 10 h_burn)",
            value: profile.height_max(),
            lo: 10.0 * h_burn,
            hi: f64::INFINITY,
        });
    }
    let mut c1: f64 = 0.0;
    let mut excluded = 0;
    let mut ratio_at = Vec::new();
    for p in nodes_between(profile, h_burn, f64::INFINITY) {
        let k1 = p.kappa_min();
        if k1 / p.f <= KAPPA1_FLOOR {
            excluded += 1;
            continue;
        }
        let r = p.grad_a_sq / p.f.powi(3) / k1;
        ratio_at.push((p.u, r));
        c1 = c1.max(r);
    }
    if !c1.is_finite() || c1 <= 0.0 {
        return Err(LabError::InvalidInput(format!("gradient ratio sup {c1} is not a positive finite number")));
    }
    let h1 = profile
        .nodes()
        .iter()
        .find(|p| p.f <= 1.0 / 3f64.sqrt())
        .map(|p| p.u)
        .ok_or_else(|| LabError::InvalidInput("F never drops below 1/sqrt(3)".into()))?;
    let f_h1 = profile.point_at_height(h1)?.f;
    let h0 = h1.max(1.0 / (c1 * f_h1 * f_h1));

    let mut report = EstimateReport::new("lemma-3.3", 0.0);
    report.bound_constant = c1;
    let mut violations = 0;
    for p in nodes_between(profile, h0, f64::INFINITY) {
        let v = p.f * (4.0 * c1 * p.u).sqrt();
        report.measured.push((p.u, v));
        if v < 1.0 {
            violations += 1;
        }
    }
    // variation of the ratio per decade in the far field
    let at = |h: f64| -> Option<f64> {
        ratio_at
            .iter()
            .min_by(|a, b| (a.0 / h).ln().abs().total_cmp(&(b.0 / h).ln().abs()))
            .map(|x| x.1)
    };
    let mut decade_variation: f64 = 0.0;
    let mut h = 1e2;
    while 10.0 * h <= profile.height_max() {
        if let (Some(a), Some(b)) = (at(h), at(10.0 * h)) {
            decade_variation = decade_variation.max((b - a).abs() / a.abs().max(b.abs()));
        }
        h *= 10.0;
    }
    report.extra("c1", c1);
    report.extra("h0", h0);
    report.extra("h1", h1);
    report.extra("excluded_nodes", excluded as f64);
    report.extra("violations", violations as f64);
    report.extra("tail_decade_variation", decade_variation);
    report.passed = violations == 0 && !report.measured.is_empty();
    Ok(GradientEstimate {
        c1,
        h0,
        h1,
        excluded_nodes: excluded,
        report,
    })
}

/// `F·√h → √((n − 1)/2)`, with the deviation shrinking over the last decade.
pub fn corollary_h_report(profile: &Profile, h_top: f64) -> Result<EstimateReport> {
    check_top(profile, h_top, true)?;
    let limit = ((profile.n() as f64 - 1.0) / 2.0).sqrt();
    let mut report = EstimateReport::new("corollary-H", ASYMPTOTIC_TOL);
    report.bound_constant = limit;
    let value = |h: f64| -> Result<f64> { Ok(profile.point_at_height(h)?.f * h.sqrt()) };
    let mut h = h_top / DECADE_SPAN;
    while h <= h_top * (1.0 + 1e-12) {
        report.measured.push((h, value(h)?));
        h *= 10.0;
    }
    let top = value(h_top)?;
    let below = value(h_top / 10.0)?;
    let (dev_top, dev_below) = ((top - limit).abs(), (below - limit).abs());
    report.extra("value_at_top", top);
    report.extra("deviation_at_top", dev_top);
    report.extra("deviation_decade_below", dev_below);
    report.passed = dev_top <= ASYMPTOTIC_TOL * limit && dev_top < dev_below;
    Ok(report)
}

/// `F` strictly decreasing, `F(h_top) < F(h_top/10)`, and
/// `F ≤ 2√((n − 1)/(2h))` beyond `h₀`.
pub fn lemma_3_1_report(profile: &Profile, h_top: f64, h0: f64) -> Result<EstimateReport> {
    check_top(profile, h_top, true)?;
    let n = profile.n() as f64;
    let mut report = EstimateReport::new("lemma-3.1", 0.0);
    report.bound_constant = h0;
    let decreasing = strictly_decreasing(profile.nodes().iter().map(|p| p.f));
    let mut violations = 0;
    for p in nodes_between(profile, h0, h_top) {
        let bound = 2.0 * ((n - 1.0) / (2.0 * p.u)).sqrt();
        report.measured.push((p.u, p.f));
        if p.f > bound {
            violations += 1;
        }
    }
    let top = profile.point_at_height(h_top)?.f;
    let below = profile.point_at_height(h_top / 10.0)?.f;
    report.extra("f_at_top", top);
    report.extra("f_decade_below", below);
    report.extra("bound_violations", violations as f64);
    report.extra("strictly_decreasing", f64::from(u8::from(decreasing)));
    report.passed = decreasing && top < below && violations == 0;
    Ok(report)
}

/// Girth lower bound `ρ(h) ≥ √(h/(16C₁))` for `h ≥ h₀`; the girth limit
/// `ρ/√h → √(2(n − 1))` is recorded alongside.
pub fn lemma_3_4_report(profile: &Profile, c1: f64, h0: f64, h_top: f64) -> Result<EstimateReport> {
    check_top(profile, h_top, false)?;
    let mut report = EstimateReport::new("lemma-3.4", 0.0);
    report.bound_constant = c1;
    let mut violations = 0;
    for p in nodes_between(profile, h0, h_top) {
        report.measured.push((p.u, p.r));
        if p.r < (p.u / (16.0 * c1)).sqrt() {
            violations += 1;
        }
    }
    let limit = (2.0 * (profile.n() as f64 - 1.0)).sqrt();
    let girth = profile.radius_at_height(h_top)? / h_top.sqrt();
    report.extra("h0", h0);
    report.extra("violations", violations as f64);
    report.extra("girth_ratio_at_top", girth);
    report.extra("girth_limit", limit);
    report.extra("girth_limit_deviation", (girth - limit).abs() / limit);
    report.passed = violations == 0 && !report.measured.is_empty();
    Ok(report)
}

/// Distance from `h·e_{n+1}` to the surface, and the node set within the
/// closed ball of radius `radius` about that point.
fn axis_distance(profile: &Profile, h: f64) -> Result<f64> {
    let d2 = |p: &ProfilePoint| p.r * p.r + (p.u - h) * (p.u - h);
    let nodes = profile.nodes();
    let (i, _) = nodes
        .iter()
        .enumerate()
        .map(|(i, p)| (i, d2(p)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("profiles have nodes");
    let lo = nodes[i.saturating_sub(1)].r;
    let hi = nodes[(i + 1).min(nodes.len() - 1)].r;
    // golden-section refinement on the neighbouring intervals
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let eval = |r: f64| -> Result<f64> { profile.geometry_at(r).map(|p| d2(&p)) };
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = eval(d)?;
        }
    }
    Ok(fc.min(fd).min(d2(&nodes[i])).sqrt())
}

/// Heights `10^{k/per_decade}` in `[lo, hi]`.
fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    let steps = ((b - a) * per_decade as f64).floor() as usize;
    (0..=steps)
        .map(|k| 10f64.powf(a + k as f64 / per_decade as f64))
        .collect()
}

/// Claim ball1 (`dist(h·e_{n+1}, M) ≤ √(2nh)`) and the upper bound
/// `min_{M ∩ B̄} F ≤ √(h₀/h)`, with `h₀ = max(h₁, n/2)` and `h₁` the
/// empirical constant of the empty-ball claim.
pub fn lemma_3_5_report(profile: &Profile, h_top: f64) -> Result<EstimateReport> {
    check_top(profile, h_top, false)?;
    let n = profile.n() as f64;
    let h_max = profile.height_max();
    let heights: Vec<f64> = log_grid(1.0, h_top, 20)
        .into_iter()
        .filter(|h| h + (2.0 * n * h).sqrt() <= h_max)
        .collect();
    if heights.is_empty() {
        return Err(LabError::OutOfRange {
            what: "h_max (ball lemma needs h + sqrt(2nh) <= h_max)",
            value: h_max,
            lo: 1.0 + (2.0 * n).sqrt(),
            hi: f64::INFINITY,
        });
    }
    let mut report = EstimateReport::new("lemma-3.5", 0.0);
    let mut h1: f64 = 0.0;
    let mut ball1_violations = 0;
    let mut data = Vec::with_capacity(heights.len());
    for &h in &heights {
        let radius = (2.0 * n * h).sqrt();
        let d = axis_distance(profile, h)?;
        if d > radius {
            ball1_violations += 1;
        }
        h1 = h1.max(n * n * h / (d * d));
        let min_f = profile
            .nodes()
            .iter()
            .filter(|p| p.r * p.r + (p.u - h) * (p.u - h) <= radius * radius)
            .map(|p| p.f)
            .fold(f64::INFINITY, f64::min);
        data.push((h, d, min_f));
    }
    let h0 = h1.max(n / 2.0);
    let mut upper_violations = 0;
    let mut empty_balls = 0;
    for &(h, _, min_f) in &data {
        if !min_f.is_finite() {
            empty_balls += 1;
            continue;
        }
        report.measured.push((h, min_f));
        if h >= h0 && min_f > (h0 / h).sqrt() {
            upper_violations += 1;
        }
    }
    report.bound_constant = h0;
    report.extra("h0", h0);
    report.extra("h1", h1);
    report.extra("ball1_violations", ball1_violations as f64);
    report.extra("empty_ball_scans", empty_balls as f64);
    report.extra("upper_bound_violations", upper_violations as f64);
    report.extra("heights_sampled", data.len() as f64);
    report.passed = ball1_violations == 0 && upper_violations == 0 && empty_balls == 0;
    Ok(report)
}

/// `κ₁/F < 0.05` at `h_top` and strictly decreasing over `[h_top/100, h_top]`.
pub fn lemma_3_6_report(profile: &Profile, h_top: f64) -> Result<EstimateReport> {
    check_top(profile, h_top, true)?;
    let mut report = EstimateReport::new("lemma-3.6", KAPPA1_RATIO_MAX);
    for p in nodes_between(profile, h_top / DECADE_SPAN, h_top) {
        report.measured.push((p.u, p.kappa_min() / p.f));
    }
    let top = profile.point_at_height(h_top)?;
    let at_top = top.kappa_min() / top.f;
    let decreasing = strictly_decreasing(report.measured.iter().map(|m| m.1));
    report.bound_constant = at_top;
    report.extra("ratio_at_top", at_top);
    report.extra("decreasing", f64::from(u8::from(decreasing)));
    report.passed = at_top < KAPPA1_RATIO_MAX && decreasing;
    Ok(report)
}

/// The asymptotic package on one profile: `corollary-H`, `lemma-3.1`,
/// `lemma-3.3`, `lemma-3.4`, `lemma-3.5`, `lemma-3.6`.
pub fn asymptotics_report(profile: &Profile, h_top: f64) -> Result<Vec<EstimateReport>> {
    let grad = gradient_ratio_and_c1(profile, 1.0)?;
    Ok(vec![
        corollary_h_report(profile, h_top)?,
        lemma_3_1_report(profile, h_top, grad.h0)?,
        lemma_3_4_report(profile, grad.c1, 2.0 * grad.h0, h_top)?,
        lemma_3_5_report(profile, h_top)?,
        lemma_3_6_report(profile, h_top)?,
        grad.report,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowdownSample {
    pub h_j: f64,
    pub t: f64,
    pub measured_radius: f64,
    pub predicted_radius: f64,
    pub relative_deviation: f64,
}

/// Radius of `h_j^{-1/2}(M + h_j t e_{n+1} − h_j e_{n+1})` at height zero.
pub fn blowdown_radius(profile: &Profile, h_j: f64, t: f64) -> Result<BlowdownSample> {
    if t.is_nan() || t >= 1.0 || h_j.is_nan() || h_j <= 0.0 {
        return Err(LabError::InvalidInput(format!("need t < 1 and h_j > 0, got t = {t}, h_j = {h_j}")));
    }
    let height = h_j * (1.0 - t);
    let measured_radius = profile.radius_at_height(height)? / h_j.sqrt();
    let predicted_radius = (2.0 * (profile.n() as f64 - 1.0) * (1.0 - t)).sqrt();
    Ok(BlowdownSample {
        h_j,
        t,
        measured_radius,
        predicted_radius,
        relative_deviation: (measured_radius - predicted_radius).abs() / predicted_radius,
    })
}

pub fn blowdown_report(profile: &Profile, h_js: &[f64], ts: &[f64]) -> Result<EstimateReport> {
    let mut report = EstimateReport::new("blowdown", BLOWDOWN_TOL);
    let mut worst: f64 = 0.0;
    for &h_j in h_js {
        for &t in ts {
            let s = blowdown_radius(profile, h_j, t)?;
            report.measured.push((h_j * (1.0 - t), s.measured_radius));
            worst = worst.max(s.relative_deviation);
            report.note(format!(
                "h_j = {h_j}, t = {t}: measured {:.6}, predicted {:.6}",
                s.measured_radius, s.predicted_radius
            ));
        }
    }
    report.bound_constant = worst;
    report.extra("worst_relative_deviation", worst);
    report.passed = !report.measured.is_empty() && worst <= BLOWDOWN_TOL;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizedCylinderCheck {
    pub speed: String,
    pub n: usize,
    pub t: f64,
    pub radius: f64,
    /// `max_{j≥2} |∂f/∂κⱼ − 1|`.
    pub gradient_deviation: f64,
    pub a_norm_f: f64,
    pub a_norm_f_expected: f64,
    pub relative_deviation: f64,
    pub passed: bool,
}

/// `∂f/∂κⱼ = 1` (`j ≥ 2`) and `|A|²_F = 1/(2(1 − t))` on the shrinking
/// cylinder of radius `√(2(n − 1)(1 − t))`.
pub fn cylinder_linearized_check(speed: &SpeedDescriptor, n: usize, t: f64) -> Result<LinearizedCylinderCheck> {
    speed.check_dim(n)?;
    if n < 2 {
        return Err(LabError::InvalidInput("the cylinder needs n >= 2".into()));
    }
    if t.is_nan() || t >= 1.0 {
        return Err(LabError::InvalidInput(format!("t = {t} must be < 1")));
    }
    let radius = (2.0 * (n as f64 - 1.0) * (1.0 - t)).sqrt();
    let mut k = vec![1.0 / radius; n];
    k[0] = 0.0;
    speed.check_closed_cone(&k)?;
    let grad = speed.gradient_unchecked(&k);
    let gradient_deviation = grad[1..].iter().map(|g| (g - 1.0).abs()).fold(0.0, f64::max);
    let a_norm_f: f64 = grad.iter().zip(&k).map(|(g, x)| g * x * x).sum();
    let expected = 1.0 / (2.0 * (1.0 - t));
    let relative_deviation = (a_norm_f - expected).abs() / expected;
    Ok(LinearizedCylinderCheck {
        speed: speed.name().to_string(),
        n,
        t,
        radius,
        gradient_deviation,
        a_norm_f,
        a_norm_f_expected: expected,
        relative_deviation,
        passed: gradient_deviation <= LINEARIZED_TOL && relative_deviation <= LINEARIZED_TOL,
    })
}

pub fn linearized_cylinder_report(speed: &SpeedDescriptor, ts: &[f64]) -> Result<EstimateReport> {
    let mut report = EstimateReport::new("linearized-cylinder", LINEARIZED_TOL);
    let mut worst: f64 = 0.0;
    let mut passed = !ts.is_empty();
    for &t in ts {
        let c = cylinder_linearized_check(speed, speed.n(), t)?;
        report.measured.push((t, c.a_norm_f));
        worst = worst.max(c.gradient_deviation).max(c.relative_deviation);
        passed &= c.passed;
    }
    report.bound_constant = worst;
    report.extra("worst_deviation", worst);
    report.passed = passed;
    Ok(report)
}

/// Three-point first and second derivatives on a nonuniform grid.
fn three_point(x: [f64; 3], y: [f64; 3]) -> (f64, f64) {
    let (h1, h2) = (x[1] - x[0], x[2] - x[1]);
    let d1 = -h2 / (h1 * (h1 + h2)) * y[0] + (h2 - h1) / (h1 * h2) * y[1] + h1 / (h2 * (h1 + h2)) * y[2];
    let d2 = 2.0 * (y[0] / (h1 * (h1 + h2)) - y[1] / (h1 * h2) + y[2] / (h2 * (h1 + h2)));
    (d1, d2)
}

struct NodeTerms {
    h: f64,
    residual: f64,
    scale: f64,
}

/// Residual of `−Δ_F u = ∇_V u + |A|²_F u` for `u = F` at every interior node.
fn speed_jacobi_terms(profile: &Profile) -> Vec<NodeTerms> {
    let speed = profile.speed();
    let nodes = profile.nodes();
    let n = profile.n();
    nodes
        .windows(3)
        .map(|w| {
            let p = &w[1];
            // differencing F − 1 = −u_r²/(W(1 + W)) avoids cancellation at the tip
            let dev = |q: &ProfilePoint| -q.u_r * q.u_r / (q.w() * (1.0 + q.w()));
            let (phi_s, phi_ss) = three_point([w[0].s, w[1].s, w[2].s], [dev(&w[0]), dev(&w[1]), dev(&w[2])]);
            let k = p.curvatures();
            let grad = speed.gradient_unchecked(&k);
            let sph: f64 = grad[1..].iter().sum();
            let rho_ratio = if n == 1 { 0.0 } else { 1.0 / (p.w() * p.r) };
            let laplace = grad[0] * phi_ss + sph * rho_ratio * phi_s;
            let v_term = (1.0 - p.f * p.f).max(0.0).sqrt() * phi_s;
            let a_f: f64 = grad.iter().zip(&k).map(|(g, x)| g * x * x).sum();
            NodeTerms {
                h: p.u,
                residual: laplace + v_term + a_f * p.f,
                scale: a_f * p.f.abs(),
            }
        })
        .collect()
}

/// A rotation or translation generated Jacobi field in the first angular mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsometryField {
    /// `J = e₁ ∧ e_{n+1}` about `O = c·e_{n+1}`.
    Tilt { center_height: f64 },
    /// Translation along `e₁`.
    HorizontalTranslation,
}

impl IsometryField {
    /// Radial part of `⟨J e_{n+1}, ν⟩`: along the translating flow the field
    /// picks up `t·⟨J e_{n+1}, ν⟩`, which enters the static equation as a source.
    fn source(&self, p: &ProfilePoint) -> f64 {
        match *self {
            IsometryField::Tilt { .. } => IsometryField::HorizontalTranslation.phi(p),
            IsometryField::HorizontalTranslation => 0.0,
        }
    }

    fn phi(&self, p: &ProfilePoint) -> f64 {
        match *self {
            IsometryField::Tilt { center_height } => -((p.u - center_height) * p.u_r + p.r) / p.w(),
            IsometryField::HorizontalTranslation => -p.u_r / p.w(),
        }
    }
}

/// Residual of the mode-1 reduced MCF Jacobi equation
/// `φ_ss + (n−1)(ρ_s/ρ)φ_s − (n−1)φ/ρ² + ‖V‖φ_s + |A|²φ = σ`,
/// with `σ` the source of [`IsometryField::source`], scaled by the sum of
/// the magnitudes of its terms.
fn mode_one_terms(profile: &Profile, field: IsometryField) -> Vec<NodeTerms> {
    let m = profile.n() as f64 - 1.0;
    profile
        .nodes()
        .windows(3)
        .map(|w| {
            let p = &w[1];
            let phi = [field.phi(&w[0]), field.phi(&w[1]), field.phi(&w[2])];
            let (phi_s, phi_ss) = three_point([w[0].s, w[1].s, w[2].s], phi);
            let rho_ratio = 1.0 / (p.w() * p.r);
            let terms = [
                phi_ss,
                m * rho_ratio * phi_s,
                -m * phi[1] / (p.r * p.r),
                p.tangential_speed() * phi_s,
                p.norm_a_sq() * phi[1],
                -field.source(p),
            ];
            NodeTerms {
                h: p.u,
                residual: terms.iter().sum(),
                scale: terms.iter().map(|t| t.abs()).sum(),
            }
        })
        .collect()
}

fn worst_relative(terms: &[NodeTerms]) -> (f64, f64, Vec<(f64, f64)>) {
    let mut worst: f64 = 0.0;
    let mut at = f64::NAN;
    let mut measured = Vec::with_capacity(terms.len());
    for t in terms {
        let rel = if t.scale > 0.0 { t.residual.abs() / t.scale } else { t.residual.abs() };
        measured.push((t.h, rel));
        if rel > worst {
            worst = rel;
            at = t.h;
        }
    }
    (worst, at, measured)
}

/// Finite-difference residual of the linearized translator equation for
/// `u = F`, relative to `|A|²_F·|u|`.
pub fn speed_jacobi_residual(profile: &Profile) -> Result<EstimateReport> {
    if profile.len() < 3 {
        return Err(LabError::InvalidInput("profile grid too short for differencing".into()));
    }
    let (worst, at, measured) = worst_relative(&speed_jacobi_terms(profile));
    let mut report = EstimateReport::new("jacobi-speed", SPEED_JACOBI_TOL);
    report.bound_constant = worst;
    report.measured = measured;
    report.extra("max_relative_residual", worst);
    report.extra("worst_height", at);
    if worst > SPEED_JACOBI_TOL {
        report.note("resolution warning: residual dominated by differencing");
    }
    report.passed = worst <= SPEED_JACOBI_TOL;
    Ok(report)
}

/// Residuals of the tilt and horizontal-translation Jacobi fields (MCF only).
pub fn rotation_jacobi_residual(profile: &Profile, center_height: f64) -> Result<EstimateReport> {
    if profile.speed().kind() != SpeedKind::Mean {
        return Err(LabError::InvalidInput(
            "the mode-1 Jacobi check is implemented for the mean curvature speed only".into(),
        ));
    }
    if profile.n() < 2 || profile.len() < 3 {
        return Err(LabError::InvalidInput("need n >= 2 and at least three nodes".into()));
    }
    let (tilt, tilt_at, measured) = worst_relative(&mode_one_terms(profile, IsometryField::Tilt { center_height }));
    let (shift, shift_at, _) = worst_relative(&mode_one_terms(profile, IsometryField::HorizontalTranslation));
    let mut report = EstimateReport::new("jacobi-rotation", ROTATION_JACOBI_TOL);
    report.bound_constant = tilt.max(shift);
    report.measured = measured;
    report.extra("center_height", center_height);
    report.extra("tilt_max_relative_residual", tilt);
    report.extra("tilt_worst_height", tilt_at);
    report.extra("translation_max_relative_residual", shift);
    report.extra("translation_worst_height", shift_at);
    if report.bound_constant > ROTATION_JACOBI_TOL {
        report.note("resolution warning: residual dominated by differencing");
    }
    report.passed = report.bound_constant <= ROTATION_JACOBI_TOL;
    Ok(report)
}

/// Re-runs `check` on a profile solved with roughly half the step size and
/// requires its `bound_constant` to at least halve.
pub fn with_refinement<C>(profile: &Profile, check: C) -> Result<EstimateReport>
where
    C: Fn(&Profile) -> Result<EstimateReport>,
{
    let mut base = check(profile)?;
    let refined_profile = solve_profile_with(profile.speed(), profile.options().refined())?;
    let refined = check(&refined_profile)?;
    let ratio = refined.bound_constant / base.bound_constant;
    base.extra("refined_residual", refined.bound_constant);
    base.extra("refinement_ratio", ratio);
    base.passed = base.passed && refined.passed && ratio <= 0.5;
    if ratio > 0.5 {
        base.note("residual did not halve under refinement");
    }
    Ok(base)
}

/// `Λ ⊂ Γ₊`, the `β₂` inequality on a fresh sample, and the face probe,
/// reported as `claim-4.1` (convex) or `claim-4.2` (concave). In concave
/// mode a profile adds the node check `β₁⁻¹F − κₙ ≤ β₂κ₁`.
pub fn cone_constants_report(
    speed: &SpeedDescriptor,
    mode: PinchingMode,
    samples: usize,
    seed: u64,
    grid: usize,
    profile: Option<&Profile>,
) -> Result<EstimateReport> {
    let id = match mode {
        PinchingMode::Convex => "claim-4.1",
        PinchingMode::Concave => "claim-4.2",
    };
    let beta2 = estimate_beta2(speed, mode, samples, seed)?;
    let validation = validate_lambda(speed, mode, beta2.beta2, samples, seed.wrapping_add(1))?;
    let probe = boundary_ray_probe(speed, mode, grid)?;
    let mut report = EstimateReport::new(id, crate::cones::BETA2_SLACK);
    report.bound_constant = beta2.beta2;
    report.note(format!("mode {}", mode.name()));
    report.extra("beta1", beta2.beta1);
    report.extra("beta2", beta2.beta2);
    report.extra("ray_limit", beta2.ray_limit);
    report.extra("samples_in_closure", beta2.samples_in_closure as f64);
    report.extra("validation_samples", validation.samples as f64);
    report.extra("validation_in_lambda", validation.in_lambda as f64);
    report.extra("containment_violations", validation.containment_violations as f64);
    report.extra("beta2_violations", validation.beta2_violations as f64);
    report.extra("probe_points", probe.points as f64);
    report.extra("probe_sign_violations", probe.sign_violations as f64);
    report.extra("probe_nonzero_on_diagonal", probe.nonzero_on_diagonal as f64);
    report.extra("probe_scaling_mismatches", probe.scaling_mismatches as f64);
    let mut passed = validation.passed && probe.passed;
    if let (Some(p), PinchingMode::Concave) = (profile, mode) {
        let beta1 = scaled_beta1(p.speed());
        let mut violations = 0;
        for node in p.nodes() {
            let lhs = node.f / beta1 - node.kappa_max();
            report.measured.push((node.u, lhs - beta2.beta2 * node.kappa_min()));
            if lhs > (beta2.beta2 + crate::cones::BETA2_SLACK) * node.kappa_min() {
                violations += 1;
            }
        }
        report.extra("profile_violations", violations as f64);
        passed &= violations == 0;
    }
    report.passed = passed;
    Ok(report)
}

/// Inverse-concavity sweep over random face points.
pub fn iccond_report(speed: &SpeedDescriptor, samples: usize, seed: u64) -> Result<EstimateReport> {
    let sweep = iccond_sweep(speed, samples, seed)?;
    let mut report = EstimateReport::new("iccond", crate::matrix_calculus::ICCOND_TOL);
    report.bound_constant = sweep.worst_relative_eigenvalue;
    report.extra("samples", sweep.samples as f64);
    report.extra("violations", sweep.violations as f64);
    report.extra("worst_relative_eigenvalue", sweep.worst_relative_eigenvalue);
    report.passed = sweep.passed;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bowl::{solve_profile, SolverOptions};
    use approx::assert_relative_eq;
    use std::sync::OnceLock;

    fn mcf3() -> &'static Profile {
        static P: OnceLock<Profile> = OnceLock::new();
        P.get_or_init(|| {
            let s = SpeedDescriptor::normalized(SpeedKind::Mean, 3).unwrap();
            solve_profile_with(&s, SolverOptions::new(2e4, 1e-8)).unwrap()
        })
    }

    fn point(n: usize, kr: f64, ks: f64, f: f64) -> ProfilePoint {
        ProfilePoint {
            n,
            r: 1.0,
            u: 0.0,
            u_r: 0.0,
            u_rr: 0.0,
            s: 0.0,
            kappa_rad: kr,
            kappa_sph: ks,
            f,
            dkappa_rad_ds: 0.0,
            dkappa_sph_ds: 0.0,
            grad_a_sq: 0.0,
        }
    }

    #[test]
    fn cylindrical_quantity_examples() {
        let s = SpeedDescriptor::normalized(SpeedKind::Mean, 3).unwrap();
        let rho = 2.5;
        let cyl = point(3, 0.0, 1.0 / rho, 2.0 / rho);
        assert_eq!(cylindrical_quantity(&cyl, &s, CylindricalMode::Mcf).unwrap(), 0.0);
        assert!(cylindrical_quantity(&cyl, &s, CylindricalMode::Concave).unwrap().abs() < 1e-15);
        let sphere = point(3, 1.0 / rho, 1.0 / rho, 3.0 / rho);
        assert_relative_eq!(
            cylindrical_quantity(&sphere, &s, CylindricalMode::Mcf).unwrap(),
            -1.5 / (rho * rho),
            max_relative = 1e-14
        );
    }

    #[test]
    fn mcf_bowl_cylindrical_estimate() {
        let r = cylindrical_estimate_report(mcf3(), CylindricalMode::Mcf, 1e4).unwrap();
        assert!(r.passed, "{:?}", r.extras);
    }

    #[test]
    fn gradient_constant_and_lower_bound() {
        let g = gradient_ratio_and_c1(mcf3(), 1.0).unwrap();
        assert!(g.c1.is_finite() && g.c1 > 0.0);
        assert!(g.report.passed, "{:?}", g.report.extras);
        assert!(g.report.extras["tail_decade_variation"] < 0.1);
    }

    #[test]
    fn asymptotics_package() {
        for r in asymptotics_report(mcf3(), 1e4).unwrap() {
            assert!(r.passed, "{}: {:?}", r.lemma_id, r.extras);
        }
    }

    #[test]
    fn insufficient_height_is_reported() {
        let s = SpeedDescriptor::normalized(SpeedKind::Mean, 3).unwrap();
        let p = solve_profile(&s, 3, 500.0, 1e-8).unwrap();
        assert!(matches!(corollary_h_report(&p, 1e4), Err(LabError::OutOfRange { .. })));
    }

    #[test]
    fn blowdown_examples() {
        let p = mcf3();
        let s = blowdown_radius(p, 1e4, 0.0).unwrap();
        assert!(s.relative_deviation < BLOWDOWN_TOL);
        let s = blowdown_radius(p, 1e4, -1.0).unwrap();
        assert_relative_eq!(s.predicted_radius, 8f64.sqrt(), max_relative = 1e-15);
        let near_one = blowdown_radius(p, 1e4, 1.0 - 1e-6).unwrap();
        assert!(near_one.measured_radius < 1e-2);
        assert!(blowdown_radius(p, 1e4, 1.0).is_err());
        assert!(blowdown_report(p, &[1e4], &[-1.0, 0.0, 0.5, 0.9]).unwrap().passed);
    }

    #[test]
    fn linearized_cylinder_all_speeds() {
        for kind in SpeedKind::ALL {
            let s = SpeedDescriptor::normalized(kind, 3).unwrap();
            for t in [0.0, 0.5, 0.9, -3.0] {
                let c = cylinder_linearized_check(&s, 3, t).unwrap();
                assert!(c.passed, "{kind} t = {t}: {c:?}");
            }
        }
        let thm = SpeedDescriptor::normalized(SpeedKind::TwoHarmonicMean, 3).unwrap();
        assert_relative_eq!(cylinder_linearized_check(&thm, 3, 0.0).unwrap().a_norm_f, 0.5, max_relative = 1e-12);
        let raw = SpeedDescriptor::new(SpeedKind::TwoHarmonicMean, 3).unwrap();
        assert!(!cylinder_linearized_check(&raw, 3, 0.0).unwrap().passed);
    }

    #[test]
    fn three_point_is_exact_on_quadratics() {
        let f = |x: f64| 2.0 - x + 3.0 * x * x;
        let x = [0.1, 0.4, 1.3];
        let (d1, d2) = three_point(x, [f(x[0]), f(x[1]), f(x[2])]);
        assert_relative_eq!(d1, -1.0 + 6.0 * 0.4, max_relative = 1e-12);
        assert_relative_eq!(d2, 6.0, max_relative = 1e-12);
    }

    #[test]
    fn jacobi_residuals() {
        let s = SpeedDescriptor::normalized(SpeedKind::Mean, 3).unwrap();
        let p = solve_profile(&s, 3, 1e4, 1e-8).unwrap();
        let speed = with_refinement(&p, speed_jacobi_residual).unwrap();
        assert!(speed.passed, "{:?}", speed.extras);
        let rot = with_refinement(&p, |q| rotation_jacobi_residual(q, 0.0)).unwrap();
        assert!(rot.passed, "{:?}", rot.extras);
    }

    #[test]
    fn rotation_check_is_mcf_only() {
        let s = SpeedDescriptor::normalized(SpeedKind::TwoHarmonicMean, 3).unwrap();
        let p = solve_profile(&s, 3, 10.0, 1e-8).unwrap();
        assert!(rotation_jacobi_residual(&p, 0.0).is_err());
        assert!(speed_jacobi_residual(&p).unwrap().passed);
    }
}
