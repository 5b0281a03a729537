//! Derivatives of `F(A) = f(eig A)` on symmetric matrices and the
//! inverse-concavity quadratic form at boundary points of the positive cone.
//!
//! In an eigenframe of `Z` with eigenvalues `κ`, for a direction `B`:
//!
//! ```text
//! DF(Z)[B]    = Σᵢ fⁱ Bᵢᵢ
//! D²F(Z)[B,B] = Σᵢⱼ fⁱʲ BᵢᵢBⱼⱼ + Σ_{i≠j} (fⁱ − fʲ)/(κᵢ − κⱼ) Bᵢⱼ²
//! ```
//!
//! with the divided difference replaced by `fⁱⁱ − fⁱʲ` when the eigenvalues
//! coalesce.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::sampling::{index_rng, par_map_indexed, unit_direction};
use crate::speeds::{SpeedDescriptor, CONE_TOL};

/// Symmetry tolerance for [`SymmetricMatrix`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative eigenvalue gap below which the divided difference is replaced by its limit.
pub const DIVIDED_DIFFERENCE_GAP: f64 = 1e-6;
/// Nonnegativity slack for the inverse-concavity form, relative to `F`.
pub const ICCOND_TOL: f64 = 1e-8;
/// Additional slack relative to the largest sum of absolute term values,
/// covering cancellation when the form vanishes identically on a subspace.
pub const ICCOND_ROUNDOFF: f64 = 1e-12;

/// A real symmetric `n × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(LabError::InvalidInput(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(LabError::InvalidInput("matrix has non-finite entries".into()));
        }
        let scale = m.amax().max(1.0);
        if (&m - m.transpose()).amax() > SYMMETRY_TOL * scale {
            return Err(LabError::InvalidInput("matrix is not symmetric".into()));
        }
        Ok(Self((&m + m.transpose()) * 0.5))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Eigenvalues in ascending order with matching eigenvector columns.
    pub fn eigen(&self) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let eig = SymmetricEigen::try_new(self.0.clone(), f64::EPSILON, 10_000)
            .ok_or_else(|| LabError::EigenFailure("Jacobi iteration did not converge".into()))?;
        let mut order: Vec<usize> = (0..self.n()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(self.n(), self.n(), |r, c| eig.eigenvectors[(r, order[c])]);
        Ok((values, vectors))
    }
}

/// Value, first and second directional derivatives of `F` at `Z` along `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDerivatives {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

fn divided_differences(speed: &SpeedDescriptor, kappa: &[f64]) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = kappa.len();
    let grad = speed.gradient_unchecked(kappa);
    let hess = speed.hessian_unchecked(kappa);
    let norm = kappa.iter().map(|x| x * x).sum::<f64>().sqrt();
    let gap = DIVIDED_DIFFERENCE_GAP * (1.0 + norm);
    let dd = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else if (kappa[i] - kappa[j]).abs() < gap {
            hess[(i, i)] - hess[(i, j)]
        } else {
            (grad[i] - grad[j]) / (kappa[i] - kappa[j])
        }
    });
    (grad, hess, dd)
}

/// `(F(Z), DF(Z)[B], D²F(Z)[B, B])` evaluated in an eigenframe of `Z`.
pub fn matrix_gradient_hessian_form(
    speed: &SpeedDescriptor,
    z: &SymmetricMatrix,
    b: &SymmetricMatrix,
) -> Result<SpectralDerivatives> {
    if z.n() != speed.n() || b.n() != speed.n() {
        return Err(LabError::InvalidInput(format!(
            "matrices must be {n}x{n} for speed `{}`",
            speed.name(),
            n = speed.n()
        )));
    }
    let (kappa, frame) = z.eigen()?;
    speed.check_cone(&kappa)?;
    let bt = frame.transpose() * b.as_matrix() * &frame;
    let (grad, hess, dd) = divided_differences(speed, &kappa);
    let (first, second) = eigenframe_derivatives(&grad, &hess, &dd, &bt);
    Ok(SpectralDerivatives {
        value: speed.value_unchecked(&kappa),
        first,
        second,
    })
}

/// First and second derivative along `b`, already expressed in the eigenframe.
fn eigenframe_derivatives(grad: &[f64], hess: &DMatrix<f64>, dd: &DMatrix<f64>, b: &DMatrix<f64>) -> (f64, f64) {
    let n = grad.len();
    let mut first = 0.0;
    let mut second = 0.0;
    for i in 0..n {
        first += grad[i] * b[(i, i)];
        for j in 0..n {
            second += hess[(i, j)] * b[(i, i)] * b[(j, j)];
            if i != j {
                second += dd[(i, j)] * b[(i, j)] * b[(i, j)];
            }
        }
    }
    (first, second)
}

/// Spectrum of the inverse-concavity form at one face point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFormReport {
    pub speed: String,
    pub n: usize,
    pub z_face: Vec<f64>,
    /// Dimension of the space of symmetric `(n−1)×(n−1)` matrices.
    pub dim_form: usize,
    pub min_eigenvalue: f64,
    /// Unit-norm (Frobenius) minimizer of the form.
    pub witness_direction: Vec<Vec<f64>>,
    /// `F(Z)` at the face point.
    pub speed_value: f64,
    /// Largest sum of absolute term values over the basis directions.
    pub term_scale: f64,
    /// Allowed slack below zero: `1e-8·F(Z) + 1e-12·term_scale`.
    pub tolerance: f64,
    pub passed: bool,
}

/// Orthonormal basis of `Sym(m)`: `Eᵢᵢ`, then `(Eᵢⱼ + Eⱼᵢ)/√2` for `i < j`.
pub fn sym_basis(m: usize) -> Vec<DMatrix<f64>> {
    let mut basis = Vec::with_capacity(m * (m + 1) / 2);
    for i in 0..m {
        let mut e = DMatrix::zeros(m, m);
        e[(i, i)] = 1.0;
        basis.push(e);
    }
    let w = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..m {
        for j in i + 1..m {
            let mut e = DMatrix::zeros(m, m);
            e[(i, j)] = w;
            e[(j, i)] = w;
            basis.push(e);
        }
    }
    basis
}

/// The inverse-concavity form at `Z = diag(0, z₂, …, zₙ)`.
///
/// For `B` symmetric `(n−1)×(n−1)`, extended by a zero first row and column,
/// `q(B) = D²F[B,B] + 2 Σ_{p,q>1} fᵖ Bₚq²/z_q − 2 (DF[B])²/F`. It equals
/// `−F²·D²F*[Z⁻¹BZ⁻¹]` for `F*(W) = 1/F(W⁻¹)`, so it is nonnegative
/// precisely when the dual speed is concave.
#[derive(Debug, Clone)]
pub struct InverseConcavityForm {
    kappa: Vec<f64>,
    grad: Vec<f64>,
    hess: DMatrix<f64>,
    dd: DMatrix<f64>,
    value: f64,
}

impl InverseConcavityForm {
    pub fn new(speed: &SpeedDescriptor, z_face: &[f64]) -> Result<Self> {
        let n = speed.n();
        if n < 2 || z_face.len() != n - 1 {
            return Err(LabError::InvalidInput(format!(
                "face point needs n - 1 = {} entries, got {}",
                n.saturating_sub(1),
                z_face.len()
            )));
        }
        if let Some(bad) = z_face.iter().find(|z| !(z.is_finite() && **z > 0.0)) {
            return Err(LabError::InvalidInput(format!("face entry {bad} is not positive")));
        }
        let kappa: Vec<f64> = std::iter::once(0.0).chain(z_face.iter().copied()).collect();
        speed.check_closed_cone(&kappa)?;
        let (grad, hess, dd) = divided_differences(speed, &kappa);
        let value = speed.value_unchecked(&kappa);
        if value <= CONE_TOL {
            return Err(LabError::ConeViolation {
                cone: speed.cone().name(),
                condition: format!("speed vanishes at the face point {kappa:?}"),
            });
        }
        Ok(Self {
            kappa,
            grad,
            hess,
            dd,
            value,
        })
    }

    pub fn speed_value(&self) -> f64 {
        self.value
    }

    /// `q(B)` for a symmetric `(n−1)×(n−1)` matrix `B`.
    pub fn evaluate(&self, b: &DMatrix<f64>) -> f64 {
        self.evaluate_with_scale(b).0
    }

    /// `q(B)` together with the sum of the absolute values of its terms.
    pub fn evaluate_with_scale(&self, b: &DMatrix<f64>) -> (f64, f64) {
        let n = self.kappa.len();
        let mut full = DMatrix::zeros(n, n);
        full.view_mut((1, 1), (n - 1, n - 1)).copy_from(b);
        let (first, second) = eigenframe_derivatives(&self.grad, &self.hess, &self.dd, &full);
        let abs_b = full.abs();
        let abs_grad: Vec<f64> = self.grad.iter().map(|g| g.abs()).collect();
        let (abs_first, abs_second) = eigenframe_derivatives(&abs_grad, &self.hess.abs(), &self.dd.abs(), &abs_b);
        let mut r_term = 0.0;
        let mut abs_r = 0.0;
        for p in 1..n {
            for q in 1..n {
                let t = self.grad[p] * full[(p, q)] * full[(p, q)] / self.kappa[q];
                r_term += t;
                abs_r += t.abs();
            }
        }
        let value = second + 2.0 * r_term - 2.0 * first * first / self.value;
        let scale = abs_second + 2.0 * abs_r + 2.0 * abs_first * abs_first / self.value;
        (value, scale)
    }

    /// Matrix of the form in the orthonormal basis [`sym_basis`].
    pub fn gram(&self) -> DMatrix<f64> {
        self.gram_with_scale().0
    }

    /// The Gram matrix and the largest term scale met while assembling it.
    pub fn gram_with_scale(&self) -> (DMatrix<f64>, f64) {
        let basis = sym_basis(self.kappa.len() - 1);
        let k = basis.len();
        let mut g = DMatrix::zeros(k, k);
        let mut scale: f64 = 0.0;
        for a in 0..k {
            let (v, s) = self.evaluate_with_scale(&basis[a]);
            g[(a, a)] = v;
            scale = scale.max(s);
            for c in a + 1..k {
                let (plus, sp) = self.evaluate_with_scale(&(&basis[a] + &basis[c]));
                let (minus, sm) = self.evaluate_with_scale(&(&basis[a] - &basis[c]));
                g[(a, c)] = 0.25 * (plus - minus);
                g[(c, a)] = g[(a, c)];
                scale = scale.max(0.25 * (sp + sm));
            }
        }
        (g, scale)
    }
}

/// Minimum eigenvalue of the inverse-concavity form at `diag(0, z_face)`.
pub fn iccond_min_eigenvalue(speed: &SpeedDescriptor, z_face: &[f64]) -> Result<QuadraticFormReport> {
    let form = InverseConcavityForm::new(speed, z_face)?;
    let (gram, term_scale) = form.gram_with_scale();
    let eig = SymmetricEigen::try_new(gram, f64::EPSILON, 10_000)
        .ok_or_else(|| LabError::EigenFailure("form spectrum did not converge".into()))?;
    let (idx, min_eigenvalue) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("form has dimension >= 1");
    let m = z_face.len();
    let basis = sym_basis(m);
    let mut witness = DMatrix::zeros(m, m);
    for (a, e) in basis.iter().enumerate() {
        witness += e * eig.eigenvectors[(a, idx)];
    }
    let tolerance = ICCOND_TOL * form.speed_value() + ICCOND_ROUNDOFF * term_scale;
    Ok(QuadraticFormReport {
        speed: speed.name().to_string(),
        n: speed.n(),
        z_face: z_face.to_vec(),
        dim_form: basis.len(),
        min_eigenvalue,
        witness_direction: (0..m).map(|r| witness.row(r).iter().copied().collect()).collect(),
        speed_value: form.speed_value(),
        term_scale,
        tolerance,
        passed: min_eigenvalue >= -tolerance,
    })
}

/// Summary of [`iccond_min_eigenvalue`] over random face points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccondSweep {
    pub speed: String,
    pub n: usize,
    pub samples: usize,
    pub violations: usize,
    /// Smallest `min_eigenvalue / F` encountered.
    pub worst_relative_eigenvalue: f64,
    pub worst: Option<QuadraticFormReport>,
    pub passed: bool,
}

/// Evaluates the form at `sample_count` face points `z` drawn as
/// log-uniform radius times a uniform direction in the positive orthant.
pub fn iccond_sweep(speed: &SpeedDescriptor, sample_count: usize, rng_seed: u64) -> Result<IccondSweep> {
    if sample_count == 0 {
        return Err(LabError::InvalidInput("sample_count must be >= 1".into()));
    }
    let m = speed.n().saturating_sub(1);
    let reports = par_map_indexed(sample_count, |i| {
        let mut rng = index_rng(rng_seed, i as u64);
        let dir: Vec<f64> = unit_direction(&mut rng, m).into_iter().map(f64::abs).collect();
        let radius = crate::sampling::log_uniform(&mut rng, 1e-2, 1e2);
        let z: Vec<f64> = dir.iter().map(|d| (d * radius).max(1e-6 * radius)).collect();
        iccond_min_eigenvalue(speed, &z)
    });
    let mut violations = 0;
    let mut worst: Option<QuadraticFormReport> = None;
    let mut worst_rel = f64::INFINITY;
    for r in reports {
        let r = r?;
        if !r.passed {
            violations += 1;
        }
        let rel = r.min_eigenvalue / r.speed_value;
        if rel < worst_rel {
            worst_rel = rel;
            worst = Some(r);
        }
    }
    Ok(IccondSweep {
        speed: speed.name().to_string(),
        n: speed.n(),
        samples: sample_count,
        violations,
        worst_relative_eigenvalue: worst_rel,
        worst,
        passed: violations == 0,
    })
}
