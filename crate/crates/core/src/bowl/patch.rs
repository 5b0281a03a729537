//! Brute-force `|∇A|²` from an embedded coordinate patch.
//!
//! A patch supplies the embedding together with its first and second
//! coordinate derivatives. The metric and second fundamental form are
//! differenced in every coordinate direction, the Christoffel symbols are
//! assembled from the metric derivatives, and the full tensor norm of
//! `∇_k h_ij` is contracted with the inverse metric.

use nalgebra::{DMatrix, DVector};

use super::Profile;
use crate::error::{LabError, Result};

/// Position and coordinate derivatives of an embedding `ℝⁿ → ℝⁿ⁺¹`.
#[derive(Debug, Clone)]
pub struct Jet {
    pub position: Vec<f64>,
    /// `d1[i]` is `∂_i X`.
    pub d1: Vec<Vec<f64>>,
    /// `d2[i][j]` is `∂_i ∂_j X`.
    pub d2: Vec<Vec<Vec<f64>>>,
}

pub trait EmbeddedPatch {
    /// Intrinsic dimension `n`.
    fn dim(&self) -> usize;
    /// Coordinates of the point where `|∇A|²` is evaluated.
    fn base(&self) -> Vec<f64>;
    fn jet(&self, x: &[f64]) -> Result<Jet>;
    /// Coordinate step for the outer differences.
    fn step(&self) -> f64;
}

struct Forms {
    g: DMatrix<f64>,
    h: DMatrix<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit normal to the tangent space, oriented along `reference` when given.
fn unit_normal(d1: &[Vec<f64>], reference: Option<&[f64]>) -> Result<Vec<f64>> {
    let n = d1.len();
    let m = n + 1;
    let t = DMatrix::from_fn(m, n, |a, i| d1[i][a]);
    let g_inv = (t.transpose() * &t)
        .try_inverse()
        .ok_or_else(|| LabError::Differencing("degenerate tangent space".into()))?;
    // the complement projector has rank one; take its largest column
    let proj = DMatrix::<f64>::identity(m, m) - &t * g_inv * t.transpose();
    let (col, norm) = (0..m)
        .map(|c| (c, proj.column(c).norm()))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    if norm < 1e-8 {
        return Err(LabError::Differencing("degenerate tangent space".into()));
    }
    let mut nu: DVector<f64> = proj.column(col) / norm;
    if let Some(r) = reference {
        if dot(nu.as_slice(), r) < 0.0 {
            nu = -nu;
        }
    }
    Ok(nu.as_slice().to_vec())
}

fn forms(jet: &Jet, normal: &[f64]) -> Forms {
    let n = jet.d1.len();
    Forms {
        g: DMatrix::from_fn(n, n, |i, j| dot(&jet.d1[i], &jet.d1[j])),
        h: DMatrix::from_fn(n, n, |i, j| dot(&jet.d2[i][j], normal)),
    }
}

/// `|∇A|²` at the patch base point.
pub fn covariant_gradient_norm_sq<P: EmbeddedPatch + ?Sized>(patch: &P) -> Result<f64> {
    let n = patch.dim();
    let x0 = patch.base();
    let delta = patch.step();
    let jet0 = patch.jet(&x0)?;
    let nu0 = unit_normal(&jet0.d1, None)?;
    let base = forms(&jet0, &nu0);

    let mut dg = Vec::with_capacity(n);
    let mut dh = Vec::with_capacity(n);
    for k in 0..n {
        let shifted = |sign: f64| -> Result<Forms> {
            let mut x = x0.clone();
            x[k] += sign * delta;
            let jet = patch.jet(&x)?;
            let nu = unit_normal(&jet.d1, Some(&nu0))?;
            Ok(forms(&jet, &nu))
        };
        let (plus, minus) = (shifted(1.0)?, shifted(-1.0)?);
        dg.push((plus.g - minus.g) / (2.0 * delta));
        dh.push((plus.h - minus.h) / (2.0 * delta));
    }

    let g_inv = base
        .g
        .clone()
        .try_inverse()
        .ok_or_else(|| LabError::Differencing("singular induced metric".into()))?;
    // Γ^l_{ij} = ½ g^{lm}(∂_i g_jm + ∂_j g_im − ∂_m g_ij)
    let mut christoffel = vec![DMatrix::<f64>::zeros(n, n); n];
    for (l, gamma) in christoffel.iter_mut().enumerate() {
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for m in 0..n {
                    acc += g_inv[(l, m)] * (dg[i][(j, m)] + dg[j][(i, m)] - dg[m][(i, j)]);
                }
                gamma[(i, j)] = 0.5 * acc;
            }
        }
    }
    // ∇_k h_ij = ∂_k h_ij − Γ^l_ki h_lj − Γ^l_kj h_il
    let mut nabla = vec![DMatrix::<f64>::zeros(n, n); n];
    for (k, nk) in nabla.iter_mut().enumerate() {
        for i in 0..n {
            for j in 0..n {
                let mut v = dh[k][(i, j)];
                for (l, gamma) in christoffel.iter().enumerate() {
                    v -= gamma[(k, i)] * base.h[(l, j)] + gamma[(k, j)] * base.h[(i, l)];
                }
                nk[(i, j)] = v;
            }
        }
    }
    // raise all three indices and contract
    let mut total = 0.0;
    for k in 0..n {
        for a in 0..n {
            let raised = &g_inv * (&nabla[a]) * &g_inv;
            let mut inner = 0.0;
            for i in 0..n {
                for j in 0..n {
                    inner += nabla[k][(i, j)] * raised[(i, j)];
                }
            }
            total += g_inv[(k, a)] * inner;
        }
    }
    Ok(total)
}

/// Radial height function `U(ρ)` with its first two derivatives.
pub trait RadialFunction {
    fn eval(&self, rho: f64) -> Result<(f64, f64, f64)>;
}

/// The graph `x ↦ (x, U(|x|))` near `x = (r₀, 0, …, 0)`.
pub struct RotationalGraphPatch<U> {
    pub n: usize,
    pub r0: f64,
    pub step: f64,
    pub radial: U,
}

impl<U: RadialFunction> EmbeddedPatch for RotationalGraphPatch<U> {
    fn dim(&self) -> usize {
        self.n
    }

    fn base(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        x[0] = self.r0;
        x
    }

    fn step(&self) -> f64 {
        self.step
    }

    fn jet(&self, x: &[f64]) -> Result<Jet> {
        let n = self.n;
        let rho = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (u, up, upp) = self.radial.eval(rho)?;
        let mut position = x.to_vec();
        position.push(u);
        let d1 = (0..n)
            .map(|i| {
                let mut v = vec![0.0; n + 1];
                v[i] = 1.0;
                v[n] = up * x[i] / rho;
                v
            })
            .collect();
        let d2 = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let mut v = vec![0.0; n + 1];
                        let xx = x[i] * x[j] / (rho * rho);
                        let delta = if i == j { 1.0 } else { 0.0 };
                        v[n] = upp * xx + up / rho * (delta - xx);
                        v
                    })
                    .collect()
            })
            .collect();
        Ok(Jet { position, d1, d2 })
    }
}

/// The lower cap of the sphere of radius `radius` touching the origin.
pub struct SphereCap {
    pub radius: f64,
}

impl RadialFunction for SphereCap {
    fn eval(&self, rho: f64) -> Result<(f64, f64, f64)> {
        let r2 = self.radius * self.radius;
        let q = r2 - rho * rho;
        if q <= 0.0 {
            return Err(LabError::Differencing("left the spherical cap".into()));
        }
        let root = q.sqrt();
        Ok((self.radius - root, rho / root, r2 / (q * root)))
    }
}

/// Radial data of a solved profile, re-integrated locally at each radius.
pub struct ProfileRadial<'a> {
    pub profile: &'a Profile,
}

impl RadialFunction for ProfileRadial<'_> {
    fn eval(&self, rho: f64) -> Result<(f64, f64, f64)> {
        let p = self.profile.local_point(rho)?;
        Ok((p.u, p.u_r, p.u_rr))
    }
}

/// The round cylinder `ℝ × S^{n−1}(radius)` in coordinates `(y, t)` with
/// `X = (√(radius² − |y|²), y, t)`.
pub struct CylinderPatch {
    pub n: usize,
    pub radius: f64,
    pub step: f64,
}

impl EmbeddedPatch for CylinderPatch {
    fn dim(&self) -> usize {
        self.n
    }

    fn base(&self) -> Vec<f64> {
        // off the symmetric point so that cross terms are exercised
        let mut x = vec![0.1 * self.radius; self.n];
        x[self.n - 1] = 0.3;
        x
    }

    fn step(&self) -> f64 {
        self.step
    }

    fn jet(&self, x: &[f64]) -> Result<Jet> {
        let n = self.n;
        let m = n - 1;
        let y = &x[..m];
        let q = self.radius * self.radius - dot(y, y);
        if q <= 0.0 {
            return Err(LabError::Differencing("left the cylinder chart".into()));
        }
        let g = q.sqrt();
        let mut position = vec![g];
        position.extend_from_slice(x);
        let d1 = (0..n)
            .map(|i| {
                let mut v = vec![0.0; n + 1];
                v[i + 1] = 1.0;
                if i < m {
                    v[0] = -y[i] / g;
                }
                v
            })
            .collect();
        let d2 = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let mut v = vec![0.0; n + 1];
                        if i < m && j < m {
                            let delta = if i == j { 1.0 } else { 0.0 };
                            v[0] = -delta / g - y[i] * y[j] / (g * g * g);
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        Ok(Jet { position, d1, d2 })
    }
}

/// `|∇A|²` at radius `r` of a solved profile, from an embedded patch.
pub fn grad_a_norm_oracle(profile: &Profile, r: f64) -> Result<f64> {
    if r < 10.0 * profile.eps() {
        return Err(LabError::Differencing(format!(
            "r = {r} is within 10ε of the tip"
        )));
    }
    profile.check_radius(r)?;
    let patch = RotationalGraphPatch {
        n: profile.n(),
        r0: r,
        step: 1e-3 * r,
        radial: ProfileRadial { profile },
    };
    let step_out = r + patch.step;
    if step_out > profile.r_max() {
        return Err(LabError::Differencing(format!("r = {r} too close to the end of the profile")));
    }
    covariant_gradient_norm_sq(&patch)
}
