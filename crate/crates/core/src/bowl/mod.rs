//! Rotationally symmetric translators as graphs `x_{n+1} = u(|x|)`.
//!
//! With the upward unit normal, the translator equation for a speed `f`
//! reduces to
//!
//! ```text
//! f(κ_rad, κ_sph, …, κ_sph) = 1/√(1 + u_r²),
//! κ_rad = u_rr/(1 + u_r²)^{3/2},   κ_sph = u_r/(r√(1 + u_r²)),
//! ```
//!
//! which is solved for `κ_rad` at every radius (the left side is strictly
//! increasing in `κ_rad`) and integrated outward from a series start at
//! `r = ε`. The tip is normalized to `F = 1`.

mod integrator;
pub mod patch;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::speeds::SpeedDescriptor;
use integrator::{integrate, rk4, State, StepControl};

pub use patch::{grad_a_norm_oracle, CylinderPatch, EmbeddedPatch, RotationalGraphPatch};

/// Radius of the series start.
pub const SERIES_START: f64 = 1e-4;
/// Step size bounds of the adaptive integrator.
pub const MIN_STEP: f64 = 1e-8;
pub const MAX_STEP: f64 = 0.05;
/// Steps are also capped at this fraction of the radius, which resolves
/// the geometry near the tip for the finite-difference checks.
pub const RELATIVE_STEP: f64 = 0.05;
/// Geometric bracket expansions before the radial root solve gives up.
const BRACKET_EXPANSIONS: u32 = 20;

/// Header of the profile CSV.
pub const CSV_HEADER: &str = "r,u,u_r,s,kappa_rad,kappa_sph,F,grad_a_sq";

/// `κ₀` with `f(κ₀, …, κ₀) = 1`.
pub fn tip_curvature(speed: &SpeedDescriptor) -> Result<f64> {
    let ones = vec![1.0; speed.n()];
    speed.check_cone(&ones)?;
    Ok(1.0 / speed.value_unchecked(&ones))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop once the height reaches this value.
    pub h_max: f64,
    /// Local error tolerance (relative and absolute) per step.
    pub tol: f64,
    pub eps: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub relative_step: f64,
}

impl SolverOptions {
    pub fn new(h_max: f64, tol: f64) -> Self {
        Self {
            h_max,
            tol,
            eps: SERIES_START,
            min_step: MIN_STEP,
            max_step: MAX_STEP,
            relative_step: RELATIVE_STEP,
        }
    }

    /// Roughly halves every step: the step caps are halved and the
    /// tolerance divided by 2⁵ to match the fifth-order local error.
    pub fn refined(self) -> Self {
        Self {
            tol: self.tol / 32.0,
            max_step: self.max_step / 2.0,
            relative_step: self.relative_step / 2.0,
            ..self
        }
    }
}

/// Geometry of the translator at one radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub n: usize,
    pub r: f64,
    pub u: f64,
    pub u_r: f64,
    pub u_rr: f64,
    pub s: f64,
    pub kappa_rad: f64,
    pub kappa_sph: f64,
    #[serde(rename = "F")]
    pub f: f64,
    pub dkappa_rad_ds: f64,
    pub dkappa_sph_ds: f64,
    pub grad_a_sq: f64,
}

impl ProfilePoint {
    /// `√(1 + u_r²)`.
    pub fn w(&self) -> f64 {
        (1.0 + self.u_r * self.u_r).sqrt()
    }

    pub fn height(&self) -> f64 {
        self.u
    }

    /// Principal curvatures `(κ_rad, κ_sph, …, κ_sph)`.
    pub fn curvatures(&self) -> Vec<f64> {
        std::iter::once(self.kappa_rad)
            .chain(std::iter::repeat_n(self.kappa_sph, self.n - 1))
            .collect()
    }

    pub fn kappa_min(&self) -> f64 {
        if self.n == 1 {
            self.kappa_rad
        } else {
            self.kappa_rad.min(self.kappa_sph)
        }
    }

    pub fn kappa_max(&self) -> f64 {
        if self.n == 1 {
            self.kappa_rad
        } else {
            self.kappa_rad.max(self.kappa_sph)
        }
    }

    pub fn mean_curvature(&self) -> f64 {
        self.kappa_rad + (self.n - 1) as f64 * self.kappa_sph
    }

    /// `|A|² = κ_rad² + (n − 1)κ_sph²`.
    pub fn norm_a_sq(&self) -> f64 {
        self.kappa_rad * self.kappa_rad + (self.n - 1) as f64 * self.kappa_sph * self.kappa_sph
    }

    /// `⟨ν, e_{n+1}⟩` for the upward unit normal.
    pub fn normal_height_component(&self) -> f64 {
        1.0 / self.w()
    }

    /// `‖V‖ = ‖∇h‖ = u_r/√(1 + u_r²)`.
    pub fn tangential_speed(&self) -> f64 {
        self.u_r / self.w()
    }
}

/// Solves `f(x, κ_sph, …) = target` for the radial curvature `x`.
fn radial_curvature(speed: &SpeedDescriptor, kappa_sph: f64, target: f64, hint: f64) -> Option<f64> {
    let n = speed.n();
    let mut k = vec![kappa_sph; n];
    let mut eval = |x: f64| {
        k[0] = x;
        (speed.value_unchecked(&k) - target, speed.gradient_unchecked(&k)[0], speed.cone().contains_closed(&k))
    };

    let mut lo = 0.0;
    let (mut g_lo, _, inside) = eval(lo);
    if !inside || g_lo > 0.0 {
        // walk down towards the cone boundary
        let d = kappa_sph.abs().max(hint).max(f64::MIN_POSITIVE);
        let mut found = false;
        for e in 0..BRACKET_EXPANSIONS {
            let trial = -d * (1.0 - 0.5f64.powi(e as i32 + 1));
            let (g, _, inside) = eval(trial);
            if inside && g <= 0.0 {
                lo = trial;
                g_lo = g;
                found = true;
                break;
            }
        }
        if !found {
            return None;
        }
    }
    let mut hi = hint.max(f64::MIN_POSITIVE);
    let mut expansions = 0;
    loop {
        let (g, _, inside) = eval(hi);
        if inside && g >= 0.0 {
            break;
        }
        expansions += 1;
        if expansions > BRACKET_EXPANSIONS {
            return None;
        }
        hi *= 2.0;
    }
    if g_lo == 0.0 {
        return Some(lo);
    }
    // safeguarded Newton inside the bracket
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (g, dg, _) = eval(x);
        if g == 0.0 {
            return Some(x);
        }
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - g / dg;
        let next = if dg > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) || hi - lo <= 4.0 * f64::EPSILON * hi.abs() {
            return Some(next);
        }
        x = next;
    }
    Some(x)
}

struct Ode {
    speed: SpeedDescriptor,
    kappa0: f64,
}

impl Ode {
    fn curvatures(&self, r: f64, y: &State) -> Result<(f64, f64)> {
        let p = y[1];
        let w = (1.0 + p * p).sqrt();
        let kappa_sph = p / (r * w);
        let hint = 10.0 * self.kappa0 * (1.0 + p * p);
        radial_curvature(&self.speed, kappa_sph, 1.0 / w, hint)
            .map(|kr| (kr, kappa_sph))
            .ok_or(LabError::RootBracket { r, u: y[0], u_r: p })
    }

    fn rhs(&self, r: f64, y: &State) -> Result<State> {
        let p = y[1];
        let w2 = 1.0 + p * p;
        let (kappa_rad, _) = self.curvatures(r, y)?;
        Ok([p, kappa_rad * w2 * w2.sqrt(), w2.sqrt()])
    }

    fn point(&self, r: f64, y: &State) -> Result<ProfilePoint> {
        let n = self.speed.n();
        let (u, p, s) = (y[0], y[1], y[2]);
        let w = (1.0 + p * p).sqrt();
        let (kappa_rad, kappa_sph) = self.curvatures(r, y)?;
        let k: Vec<f64> = std::iter::once(kappa_rad)
            .chain(std::iter::repeat_n(kappa_sph, n - 1))
            .collect();
        let grad = self.speed.gradient_unchecked(&k);
        let sph_weight: f64 = grad[1..].iter().sum();
        // d/dr of the equation: f₁κ_rad' + (Σ_{i≥2} fᵢ)κ_sph' = −u_r κ_rad
        let dksph_dr = (kappa_rad - kappa_sph) / r;
        let dkrad_dr = if n == 1 {
            -p * kappa_rad / grad[0]
        } else {
            (-p * kappa_rad - sph_weight * dksph_dr) / grad[0]
        };
        let (dkrad_ds, dksph_ds) = (dkrad_dr / w, if n == 1 { 0.0 } else { dksph_dr / w });
        Ok(ProfilePoint {
            n,
            r,
            u,
            u_r: p,
            u_rr: kappa_rad * w * w * w,
            s,
            kappa_rad,
            kappa_sph: if n == 1 { 0.0 } else { kappa_sph },
            f: self.speed.value_unchecked(&k),
            dkappa_rad_ds: dkrad_ds,
            dkappa_sph_ds: dksph_ds,
            grad_a_sq: dkrad_ds * dkrad_ds + 3.0 * (n - 1) as f64 * dksph_ds * dksph_ds,
        })
    }

    /// `u_rrr` from the derivative of the reduced equation.
    fn third_derivative(pt: &ProfilePoint) -> f64 {
        let w = pt.w();
        pt.dkappa_rad_ds * w * w * w * w + 3.0 * pt.kappa_rad * w * pt.u_r * pt.u_rr
    }
}

/// A solved translator profile on an adaptive radial grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Profile {
    speed: SpeedDescriptor,
    options: SolverOptions,
    kappa0: f64,
    nodes: Vec<ProfilePoint>,
    u_rrr: Vec<f64>,
    residual_max: f64,
}

/// Metadata written next to the profile CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSidecar {
    pub speed: String,
    pub n: usize,
    pub scale: f64,
    pub tol: f64,
    pub residual_max: f64,
    pub eps: f64,
    pub h_max: f64,
    pub tip_curvature: f64,
    pub nodes: usize,
    pub r_max: f64,
}

/// Integrates the translator ODE for `speed` until the height reaches `h_max`.
pub fn solve_profile(speed: &SpeedDescriptor, n: usize, h_max: f64, tol: f64) -> Result<Profile> {
    if speed.n() != n {
        return Err(LabError::InvalidInput(format!(
            "speed `{}` is set up for n = {}, not {n}",
            speed.name(),
            speed.n()
        )));
    }
    solve_profile_with(speed, SolverOptions::new(h_max, tol))
}

pub fn solve_profile_with(speed: &SpeedDescriptor, options: SolverOptions) -> Result<Profile> {
    if !(options.h_max > 0.0 && options.h_max.is_finite()) {
        return Err(LabError::InvalidInput(format!("h_max = {} must be positive", options.h_max)));
    }
    if !(options.tol > 0.0 && options.tol.is_finite()) {
        return Err(LabError::InvalidInput(format!("tol = {} must be positive", options.tol)));
    }
    let kappa0 = tip_curvature(speed)?;
    let ode = Ode { speed: *speed, kappa0 };
    let eps = options.eps;
    let y0 = [0.5 * kappa0 * eps * eps, kappa0 * eps, eps];
    let mut nodes = Vec::new();
    integrate(
        |r, y| ode.rhs(r, y),
        eps,
        y0,
        eps,
        StepControl {
            tol: options.tol,
            min_step: options.min_step,
            max_step: options.max_step,
            relative_step: options.relative_step,
        },
        |_, y| y[0] >= options.h_max,
        |r, y| {
            nodes.push(ode.point(r, y)?);
            Ok(())
        },
    )?;
    let u_rrr = nodes.iter().map(Ode::third_derivative).collect();
    let residual_max = nodes
        .iter()
        .map(|p| (p.f - p.normal_height_component()).abs())
        .fold(0.0, f64::max);
    Ok(Profile {
        speed: *speed,
        options,
        kappa0,
        nodes,
        u_rrr,
        residual_max,
    })
}

/// Quintic Hermite interpolation from values and two derivatives at both ends.
fn quintic_hermite(t: f64, h: f64, a: [f64; 3], b: [f64; 3]) -> f64 {
    let (t2, t3) = (t * t, t * t * t);
    let (t4, t5) = (t3 * t, t3 * t2);
    let h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h10 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h20 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
    let h21 = 0.5 * t3 - t4 + 0.5 * t5;
    let h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h01 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    h00 * a[0] + h10 * h * a[1] + h20 * h * h * a[2] + h21 * h * h * b[2] + h11 * h * b[1] + h01 * b[0]
}

impl Profile {
    pub fn speed(&self) -> &SpeedDescriptor {
        &self.speed
    }

    pub fn n(&self) -> usize {
        self.speed.n()
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn eps(&self) -> f64 {
        self.options.eps
    }

    pub fn tol(&self) -> f64 {
        self.options.tol
    }

    pub fn tip_curvature(&self) -> f64 {
        self.kappa0
    }

    pub fn residual_max(&self) -> f64 {
        self.residual_max
    }

    pub fn nodes(&self) -> &[ProfilePoint] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        self.nodes.last().map_or(self.options.eps, |p| p.r)
    }

    pub fn height_max(&self) -> f64 {
        self.nodes.last().map_or(0.0, |p| p.u)
    }

    fn ode(&self) -> Ode {
        Ode {
            speed: self.speed,
            kappa0: self.kappa0,
        }
    }

    fn check_radius(&self, r: f64) -> Result<()> {
        let (lo, hi) = (self.eps(), self.r_max());
        if !(r >= lo && r <= hi) {
            return Err(LabError::OutOfRange {
                what: "radius",
                value: r,
                lo,
                hi,
            });
        }
        Ok(())
    }

    fn interval(&self, r: f64) -> usize {
        let i = self.nodes.partition_point(|p| p.r <= r);
        i.saturating_sub(1).min(self.nodes.len() - 2)
    }

    fn interpolate_state(&self, r: f64) -> State {
        let i = self.interval(r);
        let (a, b) = (&self.nodes[i], &self.nodes[i + 1]);
        let h = b.r - a.r;
        let t = (r - a.r) / h;
        let u = quintic_hermite(t, h, [a.u, a.u_r, a.u_rr], [b.u, b.u_r, b.u_rr]);
        let p = quintic_hermite(
            t,
            h,
            [a.u_r, a.u_rr, self.u_rrr[i]],
            [b.u_r, b.u_rr, self.u_rrr[i + 1]],
        );
        let ds = |q: &ProfilePoint| [q.s, q.w(), q.u_r * q.u_rr / q.w()];
        let s = quintic_hermite(t, h, ds(a), ds(b));
        [u, p, s]
    }

    /// Geometry at radius `r`, interpolated on the stored grid.
    pub fn geometry_at(&self, r: f64) -> Result<ProfilePoint> {
        self.check_radius(r)?;
        if self.nodes.len() < 2 {
            return Ok(self.nodes[0]);
        }
        let y = self.interpolate_state(r);
        self.ode().point(r, &y)
    }

    /// Geometry at `r` from a fresh RK4 integration starting at the nearest
    /// stored node; accurate to near round-off, used by the oracles.
    pub fn local_point(&self, r: f64) -> Result<ProfilePoint> {
        self.check_radius(r)?;
        let i = self.interval(r);
        let start = if (r - self.nodes[i].r).abs() <= (self.nodes[i + 1].r - r).abs() {
            &self.nodes[i]
        } else {
            &self.nodes[i + 1]
        };
        let ode = self.ode();
        let y0 = [start.u, start.u_r, start.s];
        let span = (r - start.r).abs();
        let steps = (span / (1e-3 * start.r.max(self.eps()))).ceil().max(1.0) as usize;
        let y = rk4(|t, y| ode.rhs(t, y), start.r, y0, r, steps)?;
        ode.point(r, &y)
    }

    /// Radius of the horizontal cross-section at height `h`.
    pub fn radius_at_height(&self, h: f64) -> Result<f64> {
        let (lo_h, hi_h) = (self.nodes[0].u, self.height_max());
        if !(h >= lo_h && h <= hi_h) {
            return Err(LabError::OutOfRange {
                what: "height",
                value: h,
                lo: lo_h,
                hi: hi_h,
            });
        }
        let j = self.nodes.partition_point(|p| p.u <= h);
        if j == 0 {
            return Ok(self.nodes[0].r);
        }
        if j == self.nodes.len() {
            return Ok(self.r_max());
        }
        let (mut lo, mut hi) = (self.nodes[j - 1].r, self.nodes[j].r);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.interpolate_state(mid)[0] < h {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn point_at_height(&self, h: f64) -> Result<ProfilePoint> {
        self.geometry_at(self.radius_at_height(h)?)
    }

    pub fn sidecar(&self) -> ProfileSidecar {
        ProfileSidecar {
            speed: self.speed.name().to_string(),
            n: self.n(),
            scale: self.speed.scale(),
            tol: self.tol(),
            residual_max: self.residual_max,
            eps: self.eps(),
            h_max: self.options.h_max,
            tip_curvature: self.kappa0,
            nodes: self.nodes.len(),
            r_max: self.r_max(),
        }
    }

    /// Writes the nodes as CSV with [`CSV_HEADER`], LF line endings and
    /// 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for p in &self.nodes {
            let row = [p.r, p.u, p.u_r, p.s, p.kappa_rad, p.kappa_sph, p.f, p.grad_a_sq];
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Residuals of `dκ_sph/ds = (ρ_s/ρ)(κ_rad − κ_sph)` against a centred
/// difference of `κ_sph` between locally re-integrated states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodazziReport {
    pub nodes_checked: usize,
    pub max_abs_residual: f64,
    /// Largest residual divided by `κ_max²` at the node.
    pub max_scaled_residual: f64,
    pub worst_radius: f64,
    pub passed: bool,
}

pub const CODAZZI_TOL: f64 = 1e-6;

pub fn codazzi_check(profile: &Profile) -> Result<CodazziReport> {
    if profile.n() < 2 {
        return Err(LabError::InvalidInput("no spherical curvature when n = 1".into()));
    }
    let nodes = profile.nodes();
    let mut report = CodazziReport {
        nodes_checked: 0,
        max_abs_residual: 0.0,
        max_scaled_residual: 0.0,
        worst_radius: f64::NAN,
        passed: false,
    };
    for p in &nodes[1..nodes.len() - 1] {
        // the stencil must stay inside [ε, r_max]
        let delta = (1e-3 * p.r).min(profile.r_max() - p.r).min(p.r - profile.eps());
        let plus = profile.local_point(p.r + delta)?;
        let minus = profile.local_point(p.r - delta)?;
        let fd = (plus.kappa_sph - minus.kappa_sph) / (2.0 * delta) / p.w();
        let formula = (p.kappa_rad - p.kappa_sph) / (p.r * p.w());
        let res = (fd - formula).abs();
        let scaled = res / (p.kappa_max() * p.kappa_max());
        report.nodes_checked += 1;
        report.max_abs_residual = report.max_abs_residual.max(res);
        if scaled > report.max_scaled_residual {
            report.max_scaled_residual = scaled;
            report.worst_radius = p.r;
        }
    }
    report.passed = report.nodes_checked > 0
        && report.max_abs_residual <= CODAZZI_TOL
        && report.max_scaled_residual <= CODAZZI_TOL;
    Ok(report)
}

/// The Grim Reaper `u = −log cos x`: returns `(u, u_x, curvature)`.
pub fn grim_reaper_oracle(x: f64) -> Result<(f64, f64, f64)> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    if x.is_nan() || x.abs() >= half_pi {
        return Err(LabError::OutOfRange {
            what: "x",
            value: x,
            lo: -half_pi,
            hi: half_pi,
        });
    }
    let c = x.cos();
    Ok((-c.ln(), x.tan(), c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speeds::SpeedKind;
    use approx::assert_relative_eq;

    fn mcf(n: usize) -> SpeedDescriptor {
        SpeedDescriptor::new(SpeedKind::Mean, n).unwrap()
    }

    #[test]
    fn tip_curvature_examples() {
        assert_relative_eq!(tip_curvature(&mcf(3)).unwrap(), 1.0 / 3.0);
        let thm = SpeedDescriptor::new(SpeedKind::TwoHarmonicMean, 3).unwrap();
        assert_relative_eq!(tip_curvature(&thm).unwrap(), 1.5, epsilon = 1e-14);
        for kind in SpeedKind::ALL {
            let s = SpeedDescriptor::normalized(kind, 3).unwrap();
            let k0 = tip_curvature(&s).unwrap();
            assert!((s.value_unchecked(&[k0; 3]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quintic_hermite_reproduces_quintics() {
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x.powi(3) + 0.25 * x.powi(5);
        let df = |x: f64| -2.0 + 1.5 * x * x + 1.25 * x.powi(4);
        let d2f = |x: f64| 3.0 * x + 5.0 * x.powi(3);
        let (a, b) = (0.3, 1.1);
        for k in 0..=10 {
            let x = a + (b - a) * k as f64 / 10.0;
            let v = quintic_hermite((x - a) / (b - a), b - a, [f(a), df(a), d2f(a)], [f(b), df(b), d2f(b)]);
            assert!((v - f(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn grim_reaper_examples() {
        assert_eq!(grim_reaper_oracle(0.0).unwrap(), (0.0, 0.0, 1.0));
        let (u, _, _) = grim_reaper_oracle(std::f64::consts::FRAC_PI_3).unwrap();
        assert_relative_eq!(u, 2f64.ln(), epsilon = 1e-15);
        assert!(grim_reaper_oracle(1.6).is_err());
        for k in 1..20 {
            let x = -1.5 + 0.15 * k as f64;
            let (_, ur, c) = grim_reaper_oracle(x).unwrap();
            // u_xx = sec²x = 1 + u_x²
            let h = 1e-5;
            let urr = (grim_reaper_oracle(x + h).unwrap().1 - grim_reaper_oracle(x - h).unwrap().1) / (2.0 * h);
            assert!((urr - (1.0 + ur * ur)).abs() < 1e-6 * (1.0 + ur * ur));
            assert!((c - 1.0 / (1.0 + ur * ur).sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn grim_reaper_from_shooting() {
        let p = solve_profile(&mcf(1), 1, 3.0, 1e-10).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..=1400 {
            let x = (k as f64 * 1e-3).max(p.eps());
            let (u, _, _) = grim_reaper_oracle(x).unwrap();
            worst = worst.max((p.geometry_at(x).unwrap().u - u).abs());
        }
        assert!(worst <= 1e-6, "sup error {worst}");
    }

    #[test]
    fn mcf_bowl_near_tip() {
        let p = solve_profile(&mcf(3), 3, 10.0, 1e-10).unwrap();
        for r in [0.01, 0.05, 0.1] {
            let g = p.geometry_at(r).unwrap();
            // u = r²/6 + O(r⁴)
            assert!((g.u - r * r / 6.0).abs() < 0.05 * r.powi(4), "r = {r}: {}", g.u);
        }
        let tip = p.nodes()[0];
        assert_relative_eq!(tip.kappa_rad, 1.0 / 3.0, max_relative = 1e-6);
        assert_relative_eq!(tip.kappa_sph, 1.0 / 3.0, max_relative = 1e-6);
        assert!(p.residual_max() <= 1e-10);
    }

    #[test]
    fn out_of_range_queries() {
        let p = solve_profile(&mcf(2), 2, 2.0, 1e-8).unwrap();
        assert!(p.geometry_at(0.0).is_err());
        assert!(p.geometry_at(p.r_max() * 2.0).is_err());
        assert!(p.radius_at_height(3.0).is_err());
        assert!(solve_profile(&mcf(2), 3, 2.0, 1e-8).is_err());
    }

    #[test]
    fn profile_invariants() {
        for kind in [SpeedKind::Mean, SpeedKind::TwoHarmonicMean, SpeedKind::SqrtScalar, SpeedKind::ScalarToMean] {
            let s = SpeedDescriptor::normalized(kind, 3).unwrap();
            let p = solve_profile(&s, 3, 100.0, 1e-8).unwrap();
            let nodes = p.nodes();
            assert!(p.residual_max() <= 1e-8, "{kind}");
            for w in nodes.windows(2) {
                assert!(w[1].f < w[0].f, "{kind}: F not decreasing at r = {}", w[1].r);
                assert!(w[1].u_r > 0.0);
            }
            assert!(nodes.iter().all(|q| q.kappa_rad > 0.0 && q.kappa_sph > 0.0), "{kind}");
        }
    }

    #[test]
    fn refinement_changes_little() {
        let s = mcf(3);
        let tol = 1e-8;
        let a = solve_profile(&s, 3, 50.0, tol).unwrap();
        let b = solve_profile(&s, 3, 50.0, tol / 2.0).unwrap();
        for r in [0.5, 2.0, 5.0, 10.0] {
            let du = (a.geometry_at(r).unwrap().u - b.geometry_at(r).unwrap().u).abs();
            assert!(du <= 4.0 * tol, "r = {r}: {du}");
        }
    }

    #[test]
    fn interpolation_agrees_with_local_integration() {
        let p = solve_profile(&mcf(3), 3, 100.0, 1e-9).unwrap();
        for r in [0.013, 0.4, 3.3, 11.7] {
            let a = p.geometry_at(r).unwrap();
            let b = p.local_point(r).unwrap();
            assert_relative_eq!(a.u, b.u, max_relative = 1e-8);
            assert_relative_eq!(a.kappa_rad, b.kappa_rad, max_relative = 1e-6);
        }
    }

    #[test]
    fn codazzi_on_bowls() {
        for kind in [SpeedKind::Mean, SpeedKind::TwoHarmonicMean] {
            let s = SpeedDescriptor::normalized(kind, 3).unwrap();
            for h in [100.0, 1e3] {
                let p = solve_profile(&s, 3, h, 1e-8).unwrap();
                let c = codazzi_check(&p).unwrap();
                assert!(c.passed, "{kind}, h = {h}: {c:?}");
            }
        }
    }

    #[test]
    fn csv_layout() {
        let p = solve_profile(&mcf(2), 2, 1.0, 1e-8).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(text.lines().count(), p.len() + 1);
        assert!(!text.contains('\r'));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 8);
        assert!(first[0].parse::<f64>().unwrap() == p.eps());
    }
}
