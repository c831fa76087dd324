//! Sharp geodesic-convexity constants for metric-preconditioned flows.
//!
//! For a target density proportional to `exp(-F)` on R^m and a metric field
//! `G`, the sharp convexity constant is
//!
//! ```text
//! lambda_G = inf_x  Lambda_min( G^{-1/2} (B + Hess F - C) G^{-1/2} )
//! ```
//!
//! with `B` from [`curvature_matrices`] and `C_ij = Gamma^l_ij dF/dx_l`. The
//! infimum over all of R^m is approximated over a user-supplied box; the
//! report records the attaining point so boundary attainment (a sign that the
//! true infimum may be lower) is visible to callers.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::curvature::{christoffel, curvature_matrices};
use crate::geometry::fields::{fd_step, DomainBox, MetricField, PotentialField, SampleStrategy};
use crate::linalg;

/// Result of a sampled convexity-constant computation.
#[derive(Debug, Clone)]
pub struct ConvexityReport {
    /// Sampled infimum of the local smallest eigenvalue.
    pub lambda: f64,
    /// Point attaining the infimum.
    pub argmin_point: Vec<f64>,
    /// Unit eigenvector attaining the smallest eigenvalue at that point.
    pub argmin_direction: Vec<f64>,
    /// Number of sampled points.
    pub sample_count: usize,
    /// Domain over which the infimum was taken.
    pub domain: DomainBox,
}

impl ConvexityReport {
    /// True when the attaining point lies on the boundary of the sampled box
    /// (within `tol` per axis), signalling the infimum may not be interior.
    pub fn attained_on_boundary(&self, tol: f64) -> bool {
        self.argmin_point
            .iter()
            .zip(self.domain.lo().iter().zip(self.domain.hi()))
            .any(|(x, (lo, hi))| (x - lo).abs() <= tol || (x - hi).abs() <= tol)
    }
}

fn local_min_eig(
    potential: &PotentialField,
    metric: &MetricField,
    x: &[f64],
) -> Result<(f64, DVector<f64>)> {
    let g = metric.at(x)?;
    let gis = linalg::inv_sqrt_spd(&g, x)?;
    let (b, _r) = curvature_matrices(metric, x)?;
    let gamma = christoffel(metric, x)?;
    let grad = potential.gradient(x)?;
    let hess = potential.hessian(x)?;
    let c = gamma.contract_gradient(&grad);
    let core = b + hess - c;
    let sym = linalg::symmetrize(&(&gis * core * &gis));
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericDomain(format!(
            "convexity matrix non-finite at {x:?}"
        )));
    }
    Ok(linalg::min_eig_pair(&sym))
}

/// Sampled sharp convexity constant of the KL functional for the target
/// `exp(-F) dx` under the metric `G`.
pub fn lambda_g(
    potential: &PotentialField,
    metric: &MetricField,
    domain: &DomainBox,
    sampler: SampleStrategy,
) -> Result<ConvexityReport> {
    if domain.dim() != metric.dim() {
        return Err(Error::InvalidDomain(format!(
            "domain dim {} does not match metric dim {}",
            domain.dim(),
            metric.dim()
        )));
    }
    let points = sampler.points(domain);
    if points.is_empty() {
        return Err(Error::InvalidDomain("sampler produced no points".into()));
    }
    // Parallel evaluation, ordered reduction: results are collected in point
    // order so the argmin is independent of scheduling.
    let evals: Vec<Result<(f64, DVector<f64>)>> = points
        .par_iter()
        .map(|x| local_min_eig(potential, metric, x))
        .collect();
    let mut best: Option<(f64, usize, DVector<f64>)> = None;
    for (idx, ev) in evals.into_iter().enumerate() {
        let (val, vec) = ev?;
        let replace = match &best {
            None => true,
            Some((b, _, _)) => val < *b,
        };
        if replace {
            best = Some((val, idx, vec));
        }
    }
    let (lambda, idx, direction) = best.expect("nonempty samples");
    Ok(ConvexityReport {
        lambda,
        argmin_point: points[idx].clone(),
        argmin_direction: direction.iter().copied().collect(),
        sample_count: points.len(),
        domain: domain.clone(),
    })
}

/// Sampled estimate of `Lip(G^{-1} grad F)` over the domain: the supremum of
/// the operator norm of the Jacobian of `x -> G(x)^{-1} grad F(x)`.
///
/// A sampled supremum lower-bounds the true Lipschitz constant; the value is
/// used as a normalization convention, not a certificate.
pub fn drift_lipschitz(
    potential: &PotentialField,
    metric: &MetricField,
    domain: &DomainBox,
    sampler: SampleStrategy,
) -> Result<f64> {
    if domain.dim() != metric.dim() {
        return Err(Error::InvalidDomain(format!(
            "domain dim {} does not match metric dim {}",
            domain.dim(),
            metric.dim()
        )));
    }
    let m = metric.dim();
    let drift = |x: &[f64]| -> Result<DVector<f64>> {
        let g = metric.at(x)?;
        let grad = potential.gradient(x)?;
        linalg::solve_spd(&g, &grad, x)
    };
    let points = sampler.points(domain);
    if points.is_empty() {
        return Err(Error::InvalidDomain("sampler produced no points".into()));
    }
    let norms: Vec<Result<f64>> = points
        .par_iter()
        .map(|x| {
            let h = fd_step(metric.fd_base(), x);
            let mut jac = nalgebra::DMatrix::zeros(m, m);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            for k in 0..m {
                xp[k] = x[k] + h;
                xm[k] = x[k] - h;
                let dp = drift(&xp)?;
                let dm = drift(&xm)?;
                for i in 0..m {
                    jac[(i, k)] = (dp[i] - dm[i]) / (2.0 * h);
                }
                xp[k] = x[k];
                xm[k] = x[k];
            }
            Ok(linalg::op_norm(&jac))
        })
        .collect();
    let mut sup = 0.0f64;
    for n in norms {
        sup = sup.max(n?);
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use nalgebra::{DMatrix, DVector};

    use super::*;
    use crate::geometry::fields::quadratic_potential;

    fn gauss_example(eps: f64) -> (PotentialField, MetricField, MetricField) {
        let sigma_inv = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0 / eps]);
        let f = quadratic_potential(sigma_inv.clone(), DVector::zeros(2));
        let g_star = MetricField::constant(sigma_inv).unwrap();
        let g_e = MetricField::constant(DMatrix::from_diagonal_element(2, 2, 1.0 / eps)).unwrap();
        (f, g_star, g_e)
    }

    #[test]
    fn gaussian_optimal_metric_gives_unit_constant() {
        let (f, g_star, g_e) = gauss_example(0.1);
        let domain = DomainBox::symmetric(2, 3.0).unwrap();
        let sampler = SampleStrategy::Grid { per_axis: 5 };
        let star = lambda_g(&f, &g_star, &domain, sampler).unwrap();
        assert!((star.lambda - 1.0).abs() < 1e-10, "lambda {}", star.lambda);
        let e = lambda_g(&f, &g_e, &domain, sampler).unwrap();
        assert!((e.lambda - 0.1).abs() < 1e-10, "lambda {}", e.lambda);
    }

    #[test]
    fn euclidean_quadratic_unit_constant() {
        let f = quadratic_potential(DMatrix::identity(2, 2), DVector::zeros(2));
        let g = MetricField::euclidean(2);
        let domain = DomainBox::symmetric(2, 2.0).unwrap();
        let rep = lambda_g(&f, &g, &domain, SampleStrategy::Grid { per_axis: 4 }).unwrap();
        assert!((rep.lambda - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rescaling_law_quarter() {
        let f = quadratic_potential(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0]),
            DVector::zeros(2),
        );
        let g = crate::geometry::fixtures::diag_poly_metric();
        let g4 = g.scaled(4.0).unwrap();
        let domain = DomainBox::symmetric(2, 1.5).unwrap();
        let sampler = SampleStrategy::Grid { per_axis: 7 };
        let a = lambda_g(&f, &g, &domain, sampler).unwrap();
        let b = lambda_g(&f, &g4, &domain, sampler).unwrap();
        assert!(
            (4.0 * b.lambda - a.lambda).abs() <= 1e-10 * a.lambda.abs().max(1.0),
            "a {} vs 4b {}",
            a.lambda,
            4.0 * b.lambda
        );
    }

    #[test]
    fn drift_lipschitz_gaussian_values() {
        let (f, g_star, g_e) = gauss_example(0.1);
        let domain = DomainBox::symmetric(2, 2.0).unwrap();
        let sampler = SampleStrategy::Grid { per_axis: 4 };
        let a = drift_lipschitz(&f, &g_star, &domain, sampler).unwrap();
        let b = drift_lipschitz(&f, &g_e, &domain, sampler).unwrap();
        assert!((a - 1.0).abs() < 1e-6, "lip {a}");
        assert!((b - 1.0).abs() < 1e-6, "lip {b}");
        let zero = PotentialField::zero(2);
        let c = drift_lipschitz(&zero, &g_star, &domain, sampler).unwrap();
        assert!(c.abs() < 1e-10);
    }

    #[test]
    fn euclidean_specialization_min_hessian_eig() {
        // Double-well prior on [-2, 2]: inf of 3x^2 - 1 is -1.
        let f = PotentialField::analytic(
            1,
            Arc::new(|x: &[f64]| 0.25 * (x[0] * x[0] - 1.0).powi(2)),
            Arc::new(|x: &[f64]| DVector::from_vec(vec![x[0] * (x[0] * x[0] - 1.0)])),
            Arc::new(|x: &[f64]| DMatrix::from_element(1, 1, 3.0 * x[0] * x[0] - 1.0)),
        );
        let g = MetricField::euclidean(1);
        let domain = DomainBox::new(vec![-2.0], vec![2.0]).unwrap();
        let rep = lambda_g(&f, &g, &domain, SampleStrategy::Grid { per_axis: 401 }).unwrap();
        assert!((rep.lambda + 1.0).abs() < 1e-10);
        assert!(rep.argmin_point[0].abs() < 1e-8);
        assert!(!rep.attained_on_boundary(1e-9));
    }

    #[test]
    fn boundary_attainment_is_flagged() {
        // Concave quartic: smallest Hessian eigenvalue decreases outward.
        let f = PotentialField::from_value(1, Arc::new(|x: &[f64]| -x[0].powi(4)));
        let g = MetricField::euclidean(1);
        let domain = DomainBox::new(vec![-1.0], vec![1.0]).unwrap();
        let rep = lambda_g(&f, &g, &domain, SampleStrategy::Grid { per_axis: 41 }).unwrap();
        assert!(rep.attained_on_boundary(1e-12));
    }

    #[test]
    fn degenerate_domain_rejected() {
        assert!(DomainBox::new(vec![1.0, 0.0], vec![1.0, 1.0]).is_err());
    }
}
