//! Christoffel symbols, curvature matrices, and metric Hessians.
//!
//! All quantities are expressed in the global Euclidean chart of R^m. The
//! Christoffel symbols of the Levi-Civita connection are
//!
//! ```text
//! Gamma^l_ij = 1/2 (d_j G_ki + d_i G_kj - d_k G_ij) Ginv_lk
//! ```
//!
//! (sum over k). Curvature quantities that need derivatives of the symbols
//! differentiate the symbol field itself by central differences, so analytic
//! metrics only have to supply first derivatives of `G`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::fields::{fd_step, MetricField, PotentialField};
use crate::linalg;

/// Christoffel symbols at a point, symmetric in the lower index pair.
#[derive(Debug, Clone)]
pub struct ChristoffelSymbols {
    dim: usize,
    point: Vec<f64>,
    /// Flat storage indexed as `[l][i][j]`.
    gamma: Vec<f64>,
}

impl ChristoffelSymbols {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    /// `Gamma^l_{ij}`.
    pub fn get(&self, l: usize, i: usize, j: usize) -> f64 {
        self.gamma[(l * self.dim + i) * self.dim + j]
    }

    /// Contraction `A(I)_ij = Gamma^l_ij dI/dx_l` for a gradient vector.
    pub fn contract_gradient(&self, grad: &DVector<f64>) -> DMatrix<f64> {
        let m = self.dim;
        let mut out = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let mut s = 0.0;
                for l in 0..m {
                    s += self.get(l, i, j) * grad[l];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.gamma.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// Christoffel symbols of `metric` at `x`.
pub fn christoffel(metric: &MetricField, x: &[f64]) -> Result<ChristoffelSymbols> {
    let m = metric.dim();
    if x.len() != m {
        return Err(Error::InvalidInput(format!(
            "point dim {} does not match metric dim {}",
            x.len(),
            m
        )));
    }
    let g = metric.at(x)?;
    let ginv = linalg::solve_spd_inverse(&g, x)?;
    let dg = metric.derivatives(x)?;
    let mut gamma = vec![0.0; m * m * m];
    for l in 0..m {
        for i in 0..m {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..m {
                    s += 0.5
                        * (dg[j][(k, i)] + dg[i][(k, j)] - dg[k][(i, j)])
                        * ginv[(l, k)];
                }
                gamma[(l * m + i) * m + j] = s;
                gamma[(l * m + j) * m + i] = s;
            }
        }
    }
    let out = ChristoffelSymbols {
        dim: m,
        point: x.to_vec(),
        gamma,
    };
    if out.gamma.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericDomain(format!(
            "Christoffel symbols non-finite at {x:?}"
        )));
    }
    Ok(out)
}

/// Derivatives `d Gamma / d x_d` of the symbol field by central differences.
fn christoffel_derivatives(
    metric: &MetricField,
    x: &[f64],
) -> Result<Vec<ChristoffelSymbols>> {
    let m = metric.dim();
    let h = fd_step(metric.fd_base(), x);
    let mut out = Vec::with_capacity(m);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for d in 0..m {
        xp[d] = x[d] + h;
        xm[d] = x[d] - h;
        let gp = christoffel(metric, &xp)?;
        let gm = christoffel(metric, &xm)?;
        let gamma: Vec<f64> = gp
            .gamma
            .iter()
            .zip(&gm.gamma)
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        out.push(ChristoffelSymbols {
            dim: m,
            point: x.to_vec(),
            gamma,
        });
        xp[d] = x[d];
        xm[d] = x[d];
    }
    Ok(out)
}

/// The matrices `B` and `R` of the convexity formula:
///
/// ```text
/// B_ij = d_l Gamma^l_ij - Gamma^k_il Gamma^l_jk
/// R_ij = d_l Gamma^l_ij - d_j Gamma^l_il + Gamma^l_ij Gamma^k_kl - Gamma^k_il Gamma^l_jk
/// ```
///
/// `R` is the Ricci tensor in matrix form and is symmetrized on output.
pub fn curvature_matrices(
    metric: &MetricField,
    x: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = metric.dim();
    let gamma = christoffel(metric, x)?;
    let dgamma = christoffel_derivatives(metric, x)?;

    let mut b = DMatrix::zeros(m, m);
    let mut r = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut div_term = 0.0;
            for l in 0..m {
                div_term += dgamma[l].get(l, i, j);
            }
            let mut quad = 0.0;
            for k in 0..m {
                for l in 0..m {
                    quad += gamma.get(k, i, l) * gamma.get(l, j, k);
                }
            }
            b[(i, j)] = div_term - quad;

            let mut trace_deriv = 0.0;
            for l in 0..m {
                trace_deriv += dgamma[j].get(l, i, l);
            }
            let mut trace_quad = 0.0;
            for l in 0..m {
                let mut contracted = 0.0;
                for k in 0..m {
                    contracted += gamma.get(k, k, l);
                }
                trace_quad += gamma.get(l, i, j) * contracted;
            }
            r[(i, j)] = div_term - trace_deriv + trace_quad - quad;
        }
    }
    let r = linalg::symmetrize(&r);
    Ok((b, r))
}

/// Metric Hessian of a potential as a matrix: `Hess I - A(I)` where
/// `A(I)_ij = Gamma^l_ij dI/dx_l`.
pub fn hess_g(
    potential: &PotentialField,
    metric: &MetricField,
    x: &[f64],
) -> Result<DMatrix<f64>> {
    if potential.dim() != metric.dim() {
        return Err(Error::InvalidInput(format!(
            "potential dim {} does not match metric dim {}",
            potential.dim(),
            metric.dim()
        )));
    }
    let gamma = christoffel(metric, x)?;
    let hess = potential.hessian(x)?;
    let grad = potential.gradient(x)?;
    Ok(hess - gamma.contract_gradient(&grad))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::fields::quadratic_potential;

    use crate::geometry::fixtures::diag_poly_metric;

    /// Conformal metric exp(2 u(x)) I_2 for u given by value and gradient.
    fn conformal_metric(
        u: impl Fn(&[f64]) -> f64 + Send + Sync + Copy + 'static,
        du: impl Fn(&[f64]) -> [f64; 2] + Send + Sync + Copy + 'static,
    ) -> MetricField {
        MetricField::analytic(
            2,
            Arc::new(move |x: &[f64]| {
                let s = (2.0 * u(x)).exp();
                DMatrix::from_row_slice(2, 2, &[s, 0.0, 0.0, s])
            }),
            Arc::new(move |x: &[f64]| {
                let s = (2.0 * u(x)).exp();
                let g = du(x);
                (0..2)
                    .map(|k| {
                        let c = 2.0 * g[k] * s;
                        DMatrix::from_row_slice(2, 2, &[c, 0.0, 0.0, c])
                    })
                    .collect()
            }),
        )
    }

    #[test]
    fn constant_metric_symbols_vanish() {
        let g = MetricField::constant(DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]))
            .unwrap();
        let sym = christoffel(&g, &[0.3, -0.7]).unwrap();
        assert_eq!(sym.max_abs(), 0.0);
        let (b, r) = curvature_matrices(&g, &[0.3, -0.7]).unwrap();
        assert!(b.iter().all(|v| *v == 0.0));
        assert!(r.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn diag_poly_symbols_match_hand_values() {
        let g = diag_poly_metric();
        let sym = christoffel(&g, &[1.0, 0.0]).unwrap();
        assert!((sym.get(1, 0, 1) - 0.5).abs() < 1e-12);
        assert!((sym.get(1, 1, 0) - 0.5).abs() < 1e-12);
        assert!((sym.get(0, 1, 1) + 1.0).abs() < 1e-12);
        // All other entries vanish.
        for l in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let named = (l == 1 && i == 0 && j == 1)
                        || (l == 1 && i == 1 && j == 0)
                        || (l == 0 && i == 1 && j == 1);
                    if !named {
                        assert!(sym.get(l, i, j).abs() < 1e-12, "({l},{i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn symbols_invariant_under_metric_rescaling() {
        let g = diag_poly_metric();
        let g3 = g.scaled(3.0).unwrap();
        let x = [0.8, -0.4];
        let a = christoffel(&g, &x).unwrap();
        let b = christoffel(&g3, &x).unwrap();
        for l in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert!((a.get(l, i, j) - b.get(l, i, j)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fd_and_analytic_symbols_agree() {
        let g = diag_poly_metric();
        let gfd = MetricField::finite_difference(
            2,
            Arc::new(|x: &[f64]| {
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, x[0] * x[0] + 1.0])
            }),
        );
        let x = [1.3, 0.2];
        let a = christoffel(&g, &x).unwrap();
        let b = christoffel(&gfd, &x).unwrap();
        for l in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert!((a.get(l, i, j) - b.get(l, i, j)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn flat_conformal_plane_has_zero_ricci() {
        // u = x1: exp(2 x1) (dx^2 + dy^2) is flat.
        let g = conformal_metric(|x| x[0], |_| [1.0, 0.0]);
        let (_, r) = curvature_matrices(&g, &[0.0, 0.0]).unwrap();
        for v in r.iter() {
            assert!(v.abs() < 1e-8, "ricci entry {v}");
        }
    }

    #[test]
    fn conformal_ricci_matches_laplacian_formula() {
        // For exp(2u) I in 2d the Ricci matrix is -(lap u) I; with
        // u = c |x|^2 / 2 this is -2c I everywhere.
        let c = 0.7;
        let g = conformal_metric(
            move |x| 0.5 * c * (x[0] * x[0] + x[1] * x[1]),
            move |x| [c * x[0], c * x[1]],
        );
        for p in [[0.0, 0.0], [0.4, -0.3]] {
            let (_, r) = curvature_matrices(&g, &p).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let expect = if i == j { -2.0 * c } else { 0.0 };
                    assert!((r[(i, j)] - expect).abs() < 1e-6, "entry {i}{j}: {}", r[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn ricci_is_symmetric() {
        let g = diag_poly_metric();
        let (_, r) = curvature_matrices(&g, &[0.9, 1.1]).unwrap();
        assert!(crate::linalg::asymmetry(&r) < 1e-10);
    }

    #[test]
    fn hess_g_reduces_to_hessian_for_constant_metric() {
        let g = MetricField::constant(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 7.0]))
            .unwrap();
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let pot = quadratic_potential(s.clone(), nalgebra::DVector::zeros(2));
        let h = hess_g(&pot, &g, &[0.5, -0.5]).unwrap();
        assert!((h - s).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn hess_g_constant_potential_vanishes() {
        let g = diag_poly_metric();
        let pot = PotentialField::zero(2);
        let h = hess_g(&pot, &g, &[1.0, 2.0]).unwrap();
        assert!(h.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn hess_g_linear_potential_example() {
        // G = diag(1, x1^2+1), I = x2 at (1, 0): Hess I = 0 and
        // A(I)_12 = Gamma^2_12 = 1/2, so hess_g = [[0,-1/2],[-1/2,0]].
        let g = diag_poly_metric();
        let pot = PotentialField::analytic(
            2,
            Arc::new(|x: &[f64]| x[1]),
            Arc::new(|_: &[f64]| nalgebra::DVector::from_vec(vec![0.0, 1.0])),
            Arc::new(|_: &[f64]| DMatrix::zeros(2, 2)),
        );
        let h = hess_g(&pot, &g, &[1.0, 0.0]).unwrap();
        assert!((h[(0, 0)]).abs() < 1e-12);
        assert!((h[(1, 1)]).abs() < 1e-12);
        assert!((h[(0, 1)] + 0.5).abs() < 1e-12);
        assert!((h[(1, 0)] + 0.5).abs() < 1e-12);
    }
}
