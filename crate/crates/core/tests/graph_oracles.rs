//! Independent oracles for the graph models: a Newton solver cross-checks the
//! MAP descent, dense quadrature on a 3-node graph checks chain equilibrium
//! and label probabilities, spectral synthesis checks prior variances, and
//! the preconditioned convexity bound is verified on random graphs through
//! both the full-space Hessian and the 2d spectral projection.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;

use bayesflow::geometry::{lambda_g, DomainBox, MetricField, PotentialField, SampleStrategy};
use bayesflow::graph::{
    map_estimate, posterior_label_summary, run_chain, GraphModel, Kernel, Likelihood, MapOptions,
};
use bayesflow::linalg;
use bayesflow::special::probit_integral_ratio;

fn path_graph(n: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        w[(i, i + 1)] = 1.0;
        w[(i + 1, i)] = 1.0;
    }
    w
}

fn random_connected_graph(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    loop {
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_range(0.0..1.0) < 0.45 {
                    let v = rng.gen_range(0.3..1.5);
                    w[(i, j)] = v;
                    w[(j, i)] = v;
                }
            }
        }
        if GraphModel::new(w.clone(), 1.0, &[], 1.0, None)
            .map(|m| m.is_connected())
            .unwrap_or(false)
        {
            return w;
        }
    }
}

/// Diagonal of the probit likelihood Hessian (analytic second derivative).
fn probit_hessian_diag(model: &GraphModel, u: &DVector<f64>) -> DVector<f64> {
    let mut h = DVector::zeros(model.n());
    let gamma = model.gamma();
    for (&j, &y) in model.labeled().iter().zip(model.labels()) {
        let w = y * u[j];
        let r = probit_integral_ratio(w, gamma);
        h[j] = r * r + (w / (gamma * gamma)) * r;
    }
    h
}

/// Independent Newton solver for the probit MAP in the U-eigenbasis.
fn newton_map_oracle(model: &GraphModel) -> DVector<f64> {
    let n = model.n();
    let basis: Vec<DVector<f64>> = (1..n).map(|k| model.eigenvector(k)).collect();
    let mut coeffs = DVector::zeros(n - 1);
    for _ in 0..100 {
        let mut u = DVector::zeros(n);
        for (k, v) in basis.iter().enumerate() {
            u.axpy(coeffs[k], v, 1.0);
        }
        let (_, grad) = model.posterior_energy(Likelihood::Probit, &u).unwrap();
        let mut grad_c = DVector::zeros(n - 1);
        for (k, v) in basis.iter().enumerate() {
            grad_c[k] = v.dot(&grad);
        }
        if grad_c.norm() < 1e-12 {
            break;
        }
        let hdiag = probit_hessian_diag(model, &u);
        let mut hess = DMatrix::zeros(n - 1, n - 1);
        for a in 0..n - 1 {
            for b in 0..n - 1 {
                let mut s = 0.0;
                for i in 0..n {
                    s += basis[a][i] * hdiag[i] * basis[b][i];
                }
                if a == b {
                    s += model.eigenvalues()[a + 1].powf(model.alpha());
                }
                hess[(a, b)] = s;
            }
        }
        let step = hess.lu().solve(&grad_c).expect("newton solve");
        coeffs -= step;
    }
    let mut u = DVector::zeros(n);
    for (k, v) in basis.iter().enumerate() {
        u.axpy(coeffs[k], v, 1.0);
    }
    u
}

#[test]
fn map_descent_matches_newton_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for trial in 0..4 {
        let n = 5 + trial;
        let w = random_connected_graph(&mut rng, n);
        let model = GraphModel::new(w, 1.0, &[(0, 1.0), (n - 1, -1.0)], 0.7, None).unwrap();
        let map = map_estimate(
            &model,
            Likelihood::Probit,
            &DVector::zeros(n),
            &MapOptions::default(),
        )
        .unwrap();
        let newton = newton_map_oracle(&model);
        assert!(
            (&map.u - &newton).amax() < 1e-6,
            "trial {trial}: descent {:?} vs newton {:?}",
            map.u,
            newton
        );
    }
}

/// Posterior statistics over the 2d U-coordinates of a 3-node graph by
/// trapezoid quadrature (streaming accumulation; nodes with u_i exactly zero
/// contribute half their weight to the positive-sign probability).
struct QuadraturePosterior {
    means: Vec<f64>,
    vars: Vec<f64>,
    probs: Vec<f64>,
}

impl QuadraturePosterior {
    fn new(model: &GraphModel, likelihood: Likelihood, half: f64, n_grid: usize) -> Self {
        let basis = [model.eigenvector(1), model.eigenvector(2)];
        let n = model.n();
        let h = 2.0 * half / (n_grid as f64 - 1.0);
        let mut total = 0.0;
        let mut sum1 = vec![0.0; n];
        let mut sum2 = vec![0.0; n];
        let mut pos = vec![0.0; n];
        let mut u = DVector::zeros(n);
        for ia in 0..n_grid {
            for ib in 0..n_grid {
                let a = -half + h * ia as f64;
                let b = -half + h * ib as f64;
                for i in 0..n {
                    u[i] = a * basis[0][i] + b * basis[1][i];
                }
                let (energy, _) = model.posterior_energy(likelihood, &u).unwrap();
                let wq = if ia == 0 || ia == n_grid - 1 { 0.5 } else { 1.0 }
                    * if ib == 0 || ib == n_grid - 1 { 0.5 } else { 1.0 };
                let w = wq * (-energy).exp();
                total += w;
                let zero_tol = 1e-12 * (a.abs() + b.abs());
                for i in 0..n {
                    sum1[i] += w * u[i];
                    sum2[i] += w * u[i] * u[i];
                    if u[i] > zero_tol {
                        pos[i] += w;
                    } else if u[i] >= -zero_tol {
                        pos[i] += 0.5 * w;
                    }
                }
            }
        }
        let means: Vec<f64> = sum1.iter().map(|v| v / total).collect();
        let vars: Vec<f64> = sum2
            .iter()
            .zip(&means)
            .map(|(s2, m)| s2 / total - m * m)
            .collect();
        let probs: Vec<f64> = pos.iter().map(|v| v / total).collect();
        QuadraturePosterior { means, vars, probs }
    }

    fn mean(&self, i: usize) -> f64 {
        self.means[i]
    }

    fn var(&self, i: usize) -> f64 {
        self.vars[i]
    }

    fn prob_positive(&self, i: usize) -> f64 {
        self.probs[i]
    }
}

fn batch_mean_se(values: &[f64], batches: usize) -> (f64, f64) {
    let per = values.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| values[b * per..(b + 1) * per].iter().sum::<f64>() / per as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>()
        / (batches as f64 - 1.0);
    (grand, (var / batches as f64).sqrt())
}

#[test]
fn chain_equilibrium_matches_quadrature_on_three_nodes() {
    let model = GraphModel::new(path_graph(3), 1.0, &[(0, 1.0)], 0.5, None).unwrap();
    let quad = QuadraturePosterior::new(&model, Likelihood::Probit, 6.0, 201);
    let samples = run_chain(
        &model,
        Likelihood::Probit,
        &DVector::zeros(3),
        5e-3,
        100_000,
        5_000,
        1,
        2024,
    )
    .unwrap();
    for node in 0..3 {
        let trace: Vec<f64> = samples.iter().map(|u| u[node]).collect();
        let (mean, se_mean) = batch_mean_se(&trace, 50);
        let qm = quad.mean(node);
        assert!(
            (mean - qm).abs() <= 3.0 * se_mean.max(1e-4) + 0.01,
            "node {node} mean: chain {mean} vs quadrature {qm} (se {se_mean})"
        );
        let sq: Vec<f64> = trace.iter().map(|v| (v - qm) * (v - qm)).collect();
        let (var, se_var) = batch_mean_se(&sq, 50);
        let qv = quad.var(node);
        assert!(
            (var - qv).abs() <= 3.0 * se_var.max(1e-4) + 0.02 * qv,
            "node {node} var: chain {var} vs quadrature {qv} (se {se_var})"
        );
    }
}

#[test]
fn strongly_labeled_node_recovers_its_label() {
    // gamma = 0.01 pins the labeled node's sign; quadrature certifies the
    // probability and the chain agrees.
    let model = GraphModel::new(path_graph(3), 1.0, &[(1, 1.0)], 0.01, None).unwrap();
    let quad = QuadraturePosterior::new(&model, Likelihood::Probit, 4.0, 4001);
    let p_quad = quad.prob_positive(1);
    assert!(p_quad >= 0.99, "quadrature probability {p_quad}");
    let samples = run_chain(
        &model,
        Likelihood::Probit,
        &DVector::zeros(3),
        2e-3,
        60_000,
        10_000,
        5,
        7,
    )
    .unwrap();
    let summary = posterior_label_summary(&samples).unwrap();
    assert!(
        summary.prob_plus[1] >= 0.99,
        "chain probability {}",
        summary.prob_plus[1]
    );
}

#[test]
fn symmetric_unlabeled_node_is_undecided() {
    // Path 0-1-2 with labels +1 and -1 at the ends: the middle node is
    // exchangeable under the flip symmetry, so P(+1) = 1/2.
    let model = GraphModel::new(path_graph(3), 1.0, &[(0, 1.0), (2, -1.0)], 0.5, None).unwrap();
    let quad = QuadraturePosterior::new(&model, Likelihood::Probit, 6.0, 201);
    assert!((quad.prob_positive(1) - 0.5).abs() < 1e-8);
    let samples = run_chain(
        &model,
        Likelihood::Probit,
        &DVector::zeros(3),
        5e-3,
        80_000,
        5_000,
        1,
        99,
    )
    .unwrap();
    let summary = posterior_label_summary(&samples).unwrap();
    let indicator: Vec<f64> = samples
        .iter()
        .map(|u| if u[1] > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let (_, se) = batch_mean_se(&indicator, 50);
    assert!(
        (summary.prob_plus[1] - 0.5).abs() <= 3.0 * se.max(1e-3),
        "probability {} (se {se})",
        summary.prob_plus[1]
    );
}

#[test]
fn prior_chain_mode_variances_match_spectrum() {
    // With no likelihood the chain is a per-mode OU process with stationary
    // variance lambda_k^{-alpha} (times the discrete-step correction).
    let alpha = 1.0;
    let model = GraphModel::new(path_graph(6), alpha, &[], 1.0, None).unwrap();
    let dt = 5e-3;
    let samples = run_chain(
        &model,
        Likelihood::Probit,
        &DVector::zeros(6),
        dt,
        200_000,
        20_000,
        1,
        5150,
    )
    .unwrap();
    for k in 1..6 {
        let v = model.eigenvector(k);
        let coeffs: Vec<f64> = samples.iter().map(|u| v.dot(u)).collect();
        let sq: Vec<f64> = coeffs.iter().map(|c| c * c).collect();
        let (var, se) = batch_mean_se(&sq, 50);
        let expect = model.eigenvalues()[k].powf(-alpha) / (1.0 - dt / 2.0);
        assert!(
            (var - expect).abs() <= 3.0 * se + 0.02 * expect,
            "mode {k}: {var} vs {expect} (se {se})"
        );
    }
}

#[test]
fn prior_spectral_synthesis_variances() {
    let alpha = 0.8;
    let model = GraphModel::new(path_graph(5), alpha, &[], 1.0, None).unwrap();
    let n_samples = 20_000;
    let mut acc = vec![0.0f64; 5];
    for i in 0..n_samples {
        let u = model.prior_sample(77, i as u64).unwrap();
        for k in 1..5 {
            let c = model.eigenvector(k).dot(&u);
            acc[k] += c * c;
        }
    }
    for k in 1..5 {
        let var = acc[k] / n_samples as f64;
        let expect = model.eigenvalues()[k].powf(-alpha);
        let sigma = expect * (2.0 / n_samples as f64).sqrt();
        assert!(
            (var - expect).abs() <= 3.0 * sigma,
            "mode {k}: {var} vs {expect}"
        );
    }
}

#[test]
fn preconditioned_convexity_bound_on_random_graphs() {
    // lambda_G >= 1 for G = L^alpha with the probit likelihood, checked on 5
    // random connected graphs through (a) the full-space Hessian eigenvalue
    // over sampled points and (b) the 2d spectral projection through the
    // geometry module. The metric is constant, so no sampling gap enters.
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    for trial in 0..5 {
        let n = 6 + trial;
        let w = random_connected_graph(&mut rng, n);
        let alpha = [0.5, 1.0, 1.5][trial % 3];
        let model = Arc::new(
            GraphModel::new(w, alpha, &[(0, 1.0), (n / 2, -1.0)], 0.6, None).unwrap(),
        );

        // (a) Full space: coordinates on the U-eigenbasis.
        let basis: Vec<DVector<f64>> = (1..n).map(|k| model.eigenvector(k)).collect();
        let lam_alpha: Vec<f64> = (1..n)
            .map(|k| model.eigenvalues()[k].powf(alpha))
            .collect();
        for _ in 0..60 {
            let coeffs: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-2.5..2.5)).collect();
            let mut u = DVector::zeros(n);
            for (k, v) in basis.iter().enumerate() {
                u.axpy(coeffs[k], v, 1.0);
            }
            let hdiag = probit_hessian_diag(&model, &u);
            let mut mat = DMatrix::zeros(n - 1, n - 1);
            for a in 0..n - 1 {
                for b in 0..n - 1 {
                    let mut s = 0.0;
                    for i in 0..n {
                        s += basis[a][i] * hdiag[i] * basis[b][i];
                    }
                    if a == b {
                        s += lam_alpha[a];
                    }
                    // Precondition: G^{-1/2} H G^{-1/2} with G = diag(lam^alpha).
                    mat[(a, b)] = s / (lam_alpha[a] * lam_alpha[b]).sqrt();
                }
            }
            let (min_eig, _) = linalg::min_eig_pair(&mat);
            assert!(
                min_eig >= 1.0 - 1e-6,
                "trial {trial}: full-space eigenvalue {min_eig}"
            );
        }

        // (b) 2d spectral projection through metric_geometry.
        let m2 = Arc::clone(&model);
        let m3 = Arc::clone(&model);
        let basis2 = [model.eigenvector(1), model.eigenvector(2)];
        let b2 = basis2.clone();
        let b3 = basis2.clone();
        let lam2 = [lam_alpha[0], lam_alpha[1]];
        let embed = move |x: &[f64], basis: &[DVector<f64>; 2]| {
            let mut u = DVector::zeros(basis[0].len());
            u.axpy(x[0], &basis[0], 1.0);
            u.axpy(x[1], &basis[1], 1.0);
            u
        };
        let e1 = embed.clone();
        let e2 = embed.clone();
        let f = PotentialField::analytic(
            2,
            Arc::new(move |x: &[f64]| {
                let u = e1(x, &b2);
                0.5 * (lam2[0] * x[0] * x[0] + lam2[1] * x[1] * x[1])
                    + m2.phi(Likelihood::Probit, &u).unwrap().0
            }),
            Arc::new(move |x: &[f64]| {
                let u = e2(x, &b3);
                let (_, g) = m3.phi(Likelihood::Probit, &u).unwrap();
                DVector::from_vec(vec![
                    lam2[0] * x[0] + b3[0].dot(&g),
                    lam2[1] * x[1] + b3[1].dot(&g),
                ])
            }),
            {
                let m4 = Arc::clone(&model);
                let b4 = basis2.clone();
                Arc::new(move |x: &[f64]| {
                    let mut u = DVector::zeros(b4[0].len());
                    u.axpy(x[0], &b4[0], 1.0);
                    u.axpy(x[1], &b4[1], 1.0);
                    let hdiag = probit_hessian_diag(&m4, &u);
                    let mut h = DMatrix::zeros(2, 2);
                    for a in 0..2 {
                        for b in 0..2 {
                            let mut s = 0.0;
                            for i in 0..b4[0].len() {
                                s += b4[a][i] * hdiag[i] * b4[b][i];
                            }
                            if a == b {
                                s += lam2[a];
                            }
                            h[(a, b)] = s;
                        }
                    }
                    h
                })
            },
        );
        let metric = MetricField::constant(DMatrix::from_diagonal(&DVector::from_vec(vec![
            lam2[0], lam2[1],
        ])))
        .unwrap();
        let rep = lambda_g(
            &f,
            &metric,
            &DomainBox::symmetric(2, 3.0).unwrap(),
            SampleStrategy::Grid { per_axis: 9 },
        )
        .unwrap();
        assert!(
            rep.lambda >= 1.0 - 1e-6,
            "trial {trial}: projected lambda_G {}",
            rep.lambda
        );
    }
}

#[test]
fn kernel_graph_end_to_end_map() {
    // Two point clusters in the plane; the sign of the MAP separates them.
    let mut pts = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..6 {
        pts.push(vec![rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)]);
    }
    for _ in 0..6 {
        pts.push(vec![3.0 + rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)]);
    }
    // Radius large enough to connect across clusters.
    let model = GraphModel::from_points(
        &pts,
        Kernel::Triangular,
        4.0,
        1.0,
        &[(0, 1.0), (6, -1.0)],
        0.4,
        None,
    )
    .unwrap();
    assert!(model.is_connected());
    let map = map_estimate(
        &model,
        Likelihood::Probit,
        &DVector::zeros(12),
        &MapOptions::default(),
    )
    .unwrap();
    for i in 0..6 {
        assert!(map.u[i] > 0.0, "cluster A node {i}: {}", map.u[i]);
    }
    for i in 6..12 {
        assert!(map.u[i] < 0.0, "cluster B node {i}: {}", map.u[i]);
    }
}
