//! Divergences and energy functionals on grid densities, and the closed-form
//! geodesic-convexity criteria for the KL and chi-squared functionals.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    christoffel, curvature_matrices, ConvexityReport, DomainBox, MetricField, PotentialField,
    SampleStrategy,
};
use crate::grid::GridDensity;
use crate::linalg;
use crate::model::BayesModel;

/// Extended real value: finite or the +infinity sentinel.
///
/// Divergences propagate this sentinel explicitly rather than relying on
/// floating-point overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::Infinite => None,
        }
    }

    /// Finite value, or panic; for tests and callers that have already
    /// checked finiteness.
    pub fn expect_finite(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::Infinite => panic!("unexpected infinite functional value"),
        }
    }

    pub fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::Infinite,
        }
    }
}

impl From<f64> for ExtReal {
    fn from(v: f64) -> Self {
        if v.is_finite() {
            ExtReal::Finite(v)
        } else {
            ExtReal::Infinite
        }
    }
}

impl std::fmt::Display for ExtReal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Infinite => write!(f, "inf"),
        }
    }
}

/// Mass of `nu1` sitting where `nu2` vanishes, beyond which absolute
/// continuity is declared violated.
const SINGULAR_MASS_TOL: f64 = 1e-12;

fn divergence_with(
    nu1: &GridDensity,
    nu2: &GridDensity,
    integrand: impl Fn(f64) -> f64,
) -> Result<ExtReal> {
    nu1.grid().check_same(nu2.grid())?;
    let grid = nu1.grid();
    let mut total = 0.0;
    let mut stray_mass = 0.0;
    for i in 0..grid.len() {
        let w = grid.quad_weight(i);
        let a = nu1.values()[i];
        let b = nu2.values()[i];
        if b > 0.0 {
            if a > 0.0 {
                total += w * b * integrand(a / b);
            } else {
                // 0 log 0 = 0 and (0/b - 1)^2 b contributes integrand(0).
                total += w * b * integrand(0.0);
            }
        } else {
            stray_mass += w * a;
        }
    }
    if stray_mass > SINGULAR_MASS_TOL {
        return Ok(ExtReal::Infinite);
    }
    Ok(ExtReal::from(total))
}

/// Kullback-Leibler divergence `D_KL(nu1 || nu2)` by trapezoid quadrature.
pub fn kl_divergence(nu1: &GridDensity, nu2: &GridDensity) -> Result<ExtReal> {
    divergence_with(nu1, nu2, |r| if r > 0.0 { r * r.ln() } else { 0.0 })
}

/// Chi-squared divergence `D_chi2(nu1 || nu2)` by trapezoid quadrature.
pub fn chi2_divergence(nu1: &GridDensity, nu2: &GridDensity) -> Result<ExtReal> {
    divergence_with(nu1, nu2, |r| (r - 1.0) * (r - 1.0))
}

/// Expectation of a pointwise function of position under `nu`.
fn expectation(nu: &GridDensity, f: impl Fn(&[f64]) -> f64) -> ExtReal {
    let grid = nu.grid();
    let mut total = 0.0;
    for i in 0..grid.len() {
        let a = nu.values()[i];
        if a > 0.0 {
            let v = f(&grid.node(i));
            if !v.is_finite() {
                return ExtReal::Infinite;
            }
            total += grid.quad_weight(i) * a * v;
        }
    }
    ExtReal::from(total)
}

/// KL variational energy `J_KL(nu) = D_KL(nu || pi) + integral phi d nu`.
pub fn j_kl(nu: &GridDensity, model: &BayesModel) -> Result<ExtReal> {
    let prior = model.prior_density(nu.grid())?;
    let dkl = kl_divergence(nu, &prior)?;
    let pot = expectation(nu, |x| model.neg_log_likelihood().value(x));
    Ok(dkl.add(pot))
}

/// Chi-squared variational energy
/// `J_chi2(nu) = D_chi2(nu || pi) + integral (exp(phi) - 1) d nu`.
pub fn j_chi2(nu: &GridDensity, model: &BayesModel) -> Result<ExtReal> {
    let prior = model.prior_density(nu.grid())?;
    let dchi = chi2_divergence(nu, &prior)?;
    let pot = expectation(nu, |x| (model.neg_log_likelihood().value(x)).exp() - 1.0);
    Ok(dchi.add(pot))
}

/// Dirichlet energy `integral <Ginv grad f, grad f> d mu` of a grid function.
///
/// Gradients are central differences in the interior and one-sided at the
/// boundary.
pub fn dirichlet_energy(
    f: &[f64],
    mu: &GridDensity,
    metric: &MetricField,
) -> Result<f64> {
    let grid = mu.grid();
    if f.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "function has {} values, grid has {}",
            f.len(),
            grid.len()
        )));
    }
    if metric.dim() != grid.dim() {
        return Err(Error::InvalidInput(
            "metric dimension does not match grid".into(),
        ));
    }
    let (nx, ny) = grid.shape();
    let dx = grid.dx();
    let dy = grid.dy();
    let diff_x = |ix: usize, iy: usize| -> f64 {
        let at = |i: usize| f[grid.index(i, iy)];
        if ix == 0 {
            (at(1) - at(0)) / dx
        } else if ix == nx - 1 {
            (at(nx - 1) - at(nx - 2)) / dx
        } else {
            (at(ix + 1) - at(ix - 1)) / (2.0 * dx)
        }
    };
    let mut total = 0.0;
    for idx in 0..grid.len() {
        let (ix, iy) = if grid.dim() == 1 {
            (idx, 0)
        } else {
            (idx / ny, idx % ny)
        };
        let mut gradient = vec![diff_x(ix, iy)];
        if grid.dim() == 2 {
            let at = |j: usize| f[grid.index(ix, j)];
            let gy = if iy == 0 {
                (at(1) - at(0)) / dy
            } else if iy == ny - 1 {
                (at(ny - 1) - at(ny - 2)) / dy
            } else {
                (at(iy + 1) - at(iy - 1)) / (2.0 * dy)
            };
            gradient.push(gy);
        }
        let x = grid.node(idx);
        let g = metric.at(&x)?;
        let gv = nalgebra::DVector::from_vec(gradient);
        let ginv_grad = linalg::solve_spd(&g, &gv, &x)?;
        total += grid.quad_weight(idx) * mu.values()[idx] * ginv_grad.dot(&gv);
    }
    Ok(total)
}

/// Sharp geodesic-convexity constant of the KL functional for a model.
///
/// Delegates to [`lambda_g`](crate::geometry::lambda_g) with the Lebesgue
/// potential of the posterior, `F = Psi + phi - log sqrt(det G)`; the
/// volume-form correction vanishes for constant metrics.
pub fn kl_convexity_constant(
    model: &BayesModel,
    domain: &DomainBox,
    sampler: SampleStrategy,
) -> Result<ConvexityReport> {
    let mut f = model.prior_potential().add(model.neg_log_likelihood())?;
    // The volume-form correction -log sqrt(det G) is constant for constant
    // metrics; skipping it there keeps analytic derivatives exact.
    if !model.metric().is_constant() {
        let metric = model.metric().clone();
        let log_vol = PotentialField::from_value(
            model.dim(),
            Arc::new(move |x: &[f64]| match metric.at(x) {
                Ok(g) => -0.5 * g.determinant().ln(),
                Err(_) => f64::NAN,
            }),
        );
        f = f.add(&log_vol)?;
    }
    crate::geometry::lambda_g(&f, model.metric(), domain, sampler)
}

/// Outcome of the two chi-squared convexity conditions.
#[derive(Debug, Clone)]
pub struct Chi2ConvexityReport {
    /// Whether the prior-side curvature condition holds on the sampled box.
    pub condition1: bool,
    /// Sampled infimum of the prior-side quadratic form (the margin).
    pub margin: f64,
    /// Geodesic-convexity constant of the likelihood potential alone.
    pub lambda: f64,
}

/// Check the chi-squared convexity conditions on a sampled box:
/// condition 1 is `Ric + Hess_g Psi + (m+1)^{-1} <grad Psi, v>^2 >= 0` over
/// unit `g`-vectors; the returned `lambda` is the metric-Hessian eigenvalue
/// infimum of `phi` alone (no Ricci term).
pub fn chi2_convexity_check(
    model: &BayesModel,
    domain: &DomainBox,
    sampler: SampleStrategy,
) -> Result<Chi2ConvexityReport> {
    let metric = model.metric();
    let m = model.dim() as f64;
    let points = sampler.points(domain);
    if points.is_empty() {
        return Err(Error::InvalidDomain("sampler produced no points".into()));
    }
    let evals: Vec<Result<(f64, f64)>> = points
        .par_iter()
        .map(|x| {
            let g = metric.at(x)?;
            let gis = linalg::inv_sqrt_spd(&g, x)?;
            let gamma = christoffel(metric, x)?;
            let (_b, ricci) = curvature_matrices(metric, x)?;

            let psi = model.prior_potential();
            let grad_psi = psi.gradient(x)?;
            let hess_psi = psi.hessian(x)? - gamma.contract_gradient(&grad_psi);
            let rank_one = &grad_psi * grad_psi.transpose() / (m + 1.0);
            let m1 = linalg::symmetrize(&(&gis * (ricci + hess_psi + rank_one) * &gis));
            let (cond_eig, _) = linalg::min_eig_pair(&m1);

            let phi = model.neg_log_likelihood();
            let grad_phi = phi.gradient(x)?;
            let hess_phi = phi.hessian(x)? - gamma.contract_gradient(&grad_phi);
            let m2 = linalg::symmetrize(&(&gis * hess_phi * &gis));
            let (lambda_eig, _) = linalg::min_eig_pair(&m2);
            Ok((cond_eig, lambda_eig))
        })
        .collect();
    let mut margin = f64::INFINITY;
    let mut lambda = f64::INFINITY;
    for e in evals {
        let (c, l) = e?;
        margin = margin.min(c);
        lambda = lambda.min(l);
    }
    Ok(Chi2ConvexityReport {
        condition1: margin >= 0.0,
        margin,
        lambda,
    })
}

/// Convenience: smallest eigenvalue of a symmetric matrix (used by tests and
/// the graph module's full-space convexity checks).
pub fn min_symmetric_eig(a: &DMatrix<f64>) -> f64 {
    linalg::min_eig_pair(a).0
}
