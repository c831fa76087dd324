//! Named builders for metrics, potentials, and models, so configuration
//! files can construct them from string keys plus numeric parameters.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{quadratic_potential, DomainBox, MetricField, PotentialField};
use crate::model::BayesModel;

/// Metric family selected by `kind` plus parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSpec {
    pub kind: String,
    #[serde(default)]
    pub dim: Option<usize>,
    /// Row-major square matrix for `constant`.
    #[serde(default)]
    pub matrix: Option<Vec<f64>>,
    /// Conformal exponent coefficient for `conformal`.
    #[serde(default)]
    pub c: Option<f64>,
    /// Optional positive prefactor applied to the metric.
    #[serde(default)]
    pub scale: Option<f64>,
}

impl MetricSpec {
    pub fn named(kind: &str) -> Self {
        MetricSpec {
            kind: kind.into(),
            dim: None,
            matrix: None,
            c: None,
            scale: None,
        }
    }

    pub fn constant(matrix: Vec<f64>) -> Self {
        MetricSpec {
            kind: "constant".into(),
            dim: None,
            matrix: Some(matrix),
            c: None,
            scale: None,
        }
    }
}

fn square_matrix(data: &[f64]) -> Result<DMatrix<f64>> {
    let n = (data.len() as f64).sqrt().round() as usize;
    if n * n != data.len() || n == 0 {
        return Err(Error::InvalidInput(format!(
            "matrix parameter must hold a square matrix, got {} entries",
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(n, n, data))
}

/// Build a metric field from its catalog entry.
pub fn build_metric(spec: &MetricSpec) -> Result<MetricField> {
    let metric = match spec.kind.as_str() {
        "euclidean" => {
            let dim = spec.dim.unwrap_or(1);
            MetricField::euclidean(dim)
        }
        "constant" => {
            let data = spec
                .matrix
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("constant metric needs `matrix`".into()))?;
            MetricField::constant(square_matrix(data)?)?
        }
        "diag_poly" => MetricField::analytic(
            2,
            Arc::new(|x: &[f64]| {
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, x[0] * x[0] + 1.0])
            }),
            Arc::new(|x: &[f64]| {
                vec![
                    DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0 * x[0]]),
                    DMatrix::zeros(2, 2),
                ]
            }),
        ),
        "conformal" => {
            let c = spec.c.unwrap_or(1.0);
            MetricField::analytic(
                2,
                Arc::new(move |x: &[f64]| {
                    let s = (2.0 * c * x[0]).exp();
                    DMatrix::from_row_slice(2, 2, &[s, 0.0, 0.0, s])
                }),
                Arc::new(move |x: &[f64]| {
                    let s = (2.0 * c * x[0]).exp();
                    vec![
                        DMatrix::from_row_slice(2, 2, &[2.0 * c * s, 0.0, 0.0, 2.0 * c * s]),
                        DMatrix::zeros(2, 2),
                    ]
                }),
            )
        }
        other => return Err(Error::UnknownCatalogKey(format!("metric `{other}`"))),
    };
    match spec.scale {
        Some(a) => metric.scaled(a),
        None => Ok(metric),
    }
}

/// Potential family selected by `kind` plus parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: String,
    #[serde(default)]
    pub dim: Option<usize>,
    /// Variance for `quadratic` (1d `x^2 / (2 sigma2)`).
    #[serde(default)]
    pub sigma2: Option<f64>,
    /// Row-major covariance for `gauss_quadratic`.
    #[serde(default)]
    pub sigma: Option<Vec<f64>>,
    #[serde(default)]
    pub mean: Option<Vec<f64>>,
    /// Slope vector for `linear`.
    #[serde(default)]
    pub b: Option<Vec<f64>>,
}

impl PotentialSpec {
    pub fn named(kind: &str) -> Self {
        PotentialSpec {
            kind: kind.into(),
            dim: None,
            sigma2: None,
            sigma: None,
            mean: None,
            b: None,
        }
    }
}

/// Build a potential field from its catalog entry.
pub fn build_potential(spec: &PotentialSpec) -> Result<PotentialField> {
    match spec.kind.as_str() {
        "zero" => Ok(PotentialField::zero(spec.dim.unwrap_or(1))),
        "quadratic" => {
            let sigma2 = spec.sigma2.unwrap_or(1.0);
            if !(sigma2 > 0.0) {
                return Err(Error::InvalidInput("sigma2 must be positive".into()));
            }
            Ok(quadratic_potential(
                DMatrix::from_element(1, 1, 1.0 / sigma2),
                DVector::zeros(1),
            ))
        }
        "gauss_quadratic" => {
            let data = spec.sigma.as_ref().ok_or_else(|| {
                Error::InvalidInput("gauss_quadratic needs `sigma` (covariance)".into())
            })?;
            let sigma = square_matrix(data)?;
            let n = sigma.nrows();
            let sigma_inv = crate::linalg::solve_spd_inverse(&sigma, &vec![0.0; n])?;
            let mean = match &spec.mean {
                Some(m) => {
                    if m.len() != n {
                        return Err(Error::InvalidInput("mean length mismatch".into()));
                    }
                    DVector::from_column_slice(m)
                }
                None => DVector::zeros(n),
            };
            Ok(quadratic_potential(sigma_inv, mean))
        }
        "double_well" => Ok(PotentialField::analytic(
            1,
            Arc::new(|x: &[f64]| 0.25 * (x[0] * x[0] - 1.0).powi(2)),
            Arc::new(|x: &[f64]| DVector::from_vec(vec![x[0] * (x[0] * x[0] - 1.0)])),
            Arc::new(|x: &[f64]| DMatrix::from_element(1, 1, 3.0 * x[0] * x[0] - 1.0)),
        )
        .with_gradient_inplace(Arc::new(|x: &[f64], out: &mut [f64]| {
            out[0] = x[0] * (x[0] * x[0] - 1.0);
        }))),
        "linear" => {
            let b = spec
                .b
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("linear potential needs `b`".into()))?
                .clone();
            let dim = b.len();
            let b1 = b.clone();
            let b2 = b.clone();
            let b3 = b.clone();
            Ok(PotentialField::analytic(
                dim,
                Arc::new(move |x: &[f64]| x.iter().zip(&b1).map(|(a, c)| a * c).sum()),
                Arc::new(move |_: &[f64]| DVector::from_column_slice(&b2)),
                Arc::new(move |_: &[f64]| DMatrix::zeros(dim, dim)),
            )
            .with_gradient_inplace(Arc::new(move |_x: &[f64], out: &mut [f64]| {
                out.copy_from_slice(&b3);
            })))
        }
        other => Err(Error::UnknownCatalogKey(format!("potential `{other}`"))),
    }
}

/// Model family: prior, likelihood, metric, and domain as one unit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: String,
    #[serde(default)]
    pub sigma2: Option<f64>,
    /// Likelihood tilt slope for `gauss_tilt`.
    #[serde(default)]
    pub b: Option<f64>,
    /// Half-width of the domain box.
    #[serde(default)]
    pub half_width: Option<f64>,
    /// Per-axis variances for `gauss2d`.
    #[serde(default)]
    pub sigma2_xy: Option<[f64; 2]>,
}

impl ModelSpec {
    pub fn named(kind: &str) -> Self {
        ModelSpec {
            kind: kind.into(),
            sigma2: None,
            b: None,
            half_width: None,
            sigma2_xy: None,
        }
    }
}

/// Build a model from its catalog entry.
pub fn build_model(spec: &ModelSpec) -> Result<BayesModel> {
    match spec.kind.as_str() {
        // Ornstein-Uhlenbeck: Gaussian prior, no likelihood.
        "ou" => {
            let sigma2 = spec.sigma2.unwrap_or(1.0);
            if !(sigma2 > 0.0) {
                return Err(Error::InvalidInput("sigma2 must be positive".into()));
            }
            let half = spec.half_width.unwrap_or(8.0 * sigma2.sqrt().max(1.0));
            BayesModel::new(
                quadratic_potential(DMatrix::from_element(1, 1, 1.0 / sigma2), DVector::zeros(1)),
                PotentialField::zero(1),
                MetricField::euclidean(1),
                DomainBox::symmetric(1, half)?,
            )
        }
        "double_well" => {
            let half = spec.half_width.unwrap_or(3.0);
            BayesModel::new(
                build_potential(&PotentialSpec::named("double_well"))?,
                PotentialField::zero(1),
                MetricField::euclidean(1),
                DomainBox::symmetric(1, half)?,
            )
        }
        "flat" => {
            let half = spec.half_width.unwrap_or(3.0);
            BayesModel::new(
                PotentialField::zero(1),
                PotentialField::zero(1),
                MetricField::euclidean(1),
                DomainBox::symmetric(1, half)?,
            )
        }
        // Gaussian prior with a linear likelihood tilt.
        "gauss_tilt" => {
            let sigma2 = spec.sigma2.unwrap_or(1.0);
            let b = spec.b.unwrap_or(0.5);
            let half = spec.half_width.unwrap_or(10.0);
            BayesModel::new(
                quadratic_potential(DMatrix::from_element(1, 1, 1.0 / sigma2), DVector::zeros(1)),
                build_potential(&PotentialSpec {
                    kind: "linear".into(),
                    dim: None,
                    sigma2: None,
                    sigma: None,
                    mean: None,
                    b: Some(vec![b]),
                })?,
                MetricField::euclidean(1),
                DomainBox::symmetric(1, half)?,
            )
        }
        "gauss2d" => {
            let [sx2, sy2] = spec.sigma2_xy.unwrap_or([1.0, 1.0]);
            if !(sx2 > 0.0 && sy2 > 0.0) {
                return Err(Error::InvalidInput("variances must be positive".into()));
            }
            let half = spec.half_width.unwrap_or(6.0 * sx2.max(sy2).sqrt());
            BayesModel::new(
                quadratic_potential(
                    DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / sx2, 1.0 / sy2])),
                    DVector::zeros(2),
                ),
                PotentialField::zero(2),
                MetricField::euclidean(2),
                DomainBox::symmetric(2, half)?,
            )
        }
        other => Err(Error::UnknownCatalogKey(format!("model `{other}`"))),
    }
}

/// Catalog listing for the CLI: `(section, key, parameters)`.
pub fn listing() -> Vec<(&'static str, &'static str, &'static str)> {
    vec![
        ("metric", "euclidean", "dim"),
        ("metric", "constant", "matrix (row-major SPD)"),
        ("metric", "diag_poly", "diag(1, x1^2 + 1) on R^2"),
        ("metric", "conformal", "c: exp(2 c x1) I_2"),
        ("potential", "zero", "dim"),
        ("potential", "quadratic", "sigma2: x^2 / (2 sigma2)"),
        ("potential", "gauss_quadratic", "sigma (covariance), mean"),
        ("potential", "double_well", "(x^2 - 1)^2 / 4"),
        ("potential", "linear", "b (slope vector)"),
        ("model", "ou", "sigma2, half_width"),
        ("model", "double_well", "half_width"),
        ("model", "flat", "half_width"),
        ("model", "gauss_tilt", "sigma2, b, half_width"),
        ("model", "gauss2d", "sigma2_xy, half_width"),
    ]
}
