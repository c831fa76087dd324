//! Bayesian model: prior potential, negative log-likelihood, metric, domain.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::geometry::{DomainBox, MetricField, PotentialField};
use crate::grid::{Grid, GridDensity};

/// Prior `pi = exp(-Psi) vol_g` and posterior `mu ~ exp(-phi) pi` on a box.
///
/// Grid-dependent quantities (normalizations, grid densities) are computed by
/// trapezoid quadrature on whichever grid the caller supplies, and the
/// log-partition value is cached per grid. All densities handed out are with
/// respect to Lebesgue measure and normalized on their grid, so identities
/// like `D_KL(nu || mu) = J_KL(nu) + log Z` hold to quadrature roundoff.
pub struct BayesModel {
    prior_potential: PotentialField,
    neg_log_likelihood: PotentialField,
    metric: MetricField,
    domain: DomainBox,
    log_z_cache: Mutex<HashMap<GridKey, f64>>,
}

#[derive(PartialEq, Eq, Hash, Clone)]
struct GridKey(Vec<u64>);

fn grid_key(grid: &Grid) -> GridKey {
    let mut bits = Vec::new();
    match grid {
        Grid::One { nx, xmin, xmax } => {
            bits.push(1);
            bits.push(*nx as u64);
            bits.push(xmin.to_bits());
            bits.push(xmax.to_bits());
        }
        Grid::Two {
            nx,
            ny,
            xmin,
            xmax,
            ymin,
            ymax,
        } => {
            bits.push(2);
            bits.push(*nx as u64);
            bits.push(*ny as u64);
            bits.push(xmin.to_bits());
            bits.push(xmax.to_bits());
            bits.push(ymin.to_bits());
            bits.push(ymax.to_bits());
        }
    }
    GridKey(bits)
}

impl BayesModel {
    pub fn new(
        prior_potential: PotentialField,
        neg_log_likelihood: PotentialField,
        metric: MetricField,
        domain: DomainBox,
    ) -> Result<Self> {
        let dim = metric.dim();
        if prior_potential.dim() != dim || neg_log_likelihood.dim() != dim || domain.dim() != dim
        {
            return Err(Error::InvalidInput(
                "model components must share one dimension".into(),
            ));
        }
        Ok(BayesModel {
            prior_potential,
            neg_log_likelihood,
            metric,
            domain,
            log_z_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn prior_potential(&self) -> &PotentialField {
        &self.prior_potential
    }

    pub fn neg_log_likelihood(&self) -> &PotentialField {
        &self.neg_log_likelihood
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    /// Combined potential `Psi + phi` at a point.
    pub fn combined_potential(&self, x: &[f64]) -> f64 {
        self.prior_potential.value(x) + self.neg_log_likelihood.value(x)
    }

    /// `sqrt(det G(x))`, the volume-form weight against Lebesgue measure.
    pub fn vol_weight(&self, x: &[f64]) -> Result<f64> {
        let g = self.metric.at(x)?;
        let det = g.determinant();
        if !(det > 0.0) {
            return Err(Error::SingularMetric {
                point: x.to_vec(),
                detail: format!("determinant {det}"),
            });
        }
        Ok(det.sqrt())
    }

    /// Unnormalized prior Lebesgue density `exp(-Psi) sqrt(det G)`.
    pub fn prior_weight(&self, x: &[f64]) -> Result<f64> {
        Ok((-self.prior_potential.value(x)).exp() * self.vol_weight(x)?)
    }

    /// Unnormalized posterior Lebesgue density `exp(-Psi - phi) sqrt(det G)`.
    pub fn posterior_weight(&self, x: &[f64]) -> Result<f64> {
        Ok((-self.combined_potential(x)).exp() * self.vol_weight(x)?)
    }

    /// Normalized prior density on a grid.
    pub fn prior_density(&self, grid: &Grid) -> Result<GridDensity> {
        let values: Result<Vec<f64>> = (0..grid.len())
            .map(|i| self.prior_weight(&grid.node(i)))
            .collect();
        GridDensity::new(grid.clone(), values?)
    }

    /// Normalized posterior density on a grid.
    pub fn posterior_density(&self, grid: &Grid) -> Result<GridDensity> {
        let values: Result<Vec<f64>> = (0..grid.len())
            .map(|i| self.posterior_weight(&grid.node(i)))
            .collect();
        GridDensity::new(grid.clone(), values?)
    }

    /// `log Z = log integral exp(-phi) d pi` by quadrature on `grid`, with
    /// the prior normalized on the same grid. Cached per grid; concurrent
    /// computations race benignly to the same value.
    pub fn log_z(&self, grid: &Grid) -> Result<f64> {
        let key = grid_key(grid);
        if let Some(v) = self.log_z_cache.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let prior = self.prior_density(grid)?;
        let mut z = 0.0;
        for i in 0..grid.len() {
            let x = grid.node(i);
            z += grid.quad_weight(i)
                * prior.values()[i]
                * (-self.neg_log_likelihood.value(&x)).exp();
        }
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::NumericDomain(format!(
                "partition function quadrature gave {z}"
            )));
        }
        let log_z = z.ln();
        self.log_z_cache.lock().unwrap().insert(key, log_z);
        Ok(log_z)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::MetricField;

    fn gaussian_model() -> BayesModel {
        // Psi = x^2/2, phi = x (linear tilt), Euclidean metric.
        let psi = PotentialField::from_value(1, Arc::new(|x: &[f64]| 0.5 * x[0] * x[0]));
        let phi = PotentialField::from_value(1, Arc::new(|x: &[f64]| x[0]));
        BayesModel::new(
            psi,
            phi,
            MetricField::euclidean(1),
            DomainBox::symmetric(1, 10.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn log_z_matches_gaussian_closed_form() {
        // integral exp(-x) dN(0,1) = exp(1/2).
        let m = gaussian_model();
        let grid = Grid::line(4001, -10.0, 10.0).unwrap();
        let lz = m.log_z(&grid).unwrap();
        assert!((lz - 0.5).abs() < 1e-8, "log Z {lz}");
        // Cache hit returns the identical value.
        assert_eq!(lz, m.log_z(&grid).unwrap());
    }

    #[test]
    fn posterior_density_is_shifted_gaussian() {
        let m = gaussian_model();
        let grid = Grid::line(4001, -10.0, 10.0).unwrap();
        let post = m.posterior_density(&grid).unwrap();
        assert!((post.mean()[0] + 1.0).abs() < 1e-8);
        assert!((post.variance()[0] - 1.0).abs() < 1e-6);
    }
}
