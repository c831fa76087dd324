//! Discretized weighted Laplacians, spectral gaps, Poincare checks, and the
//! Ginzburg-Landau convex-envelope bound.
//!
//! The operator is assembled in divergence form from face weights
//! `mu_face * Ginv` (geometric mean of the nodal density at faces), giving a
//! pair `(K, M)`: `K` a graph Laplacian carrying the Dirichlet form
//! `D(f) = f' K f ~ integral <Ginv grad f, grad f> d mu`, and `M` the diagonal
//! of nodal mu-masses. The operator `A = Minv K` annihilates constants
//! exactly, is self-adjoint in the mu-inner product, and is PSD; the spectral
//! gap is the smallest generalized eigenvalue of `K f = lambda M f` on the
//! mu-mean-zero subspace. Nodes with zero density are dropped from the active
//! set, so disconnected supports decouple exactly.

use rand::Rng as _;
use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg;
use crate::model::BayesModel;

/// Sparse symmetric operator pair `(K, M)` on the active nodes of a grid.
pub struct WeightedLaplacianOperator {
    grid: Grid,
    /// Grid index of each active node (sorted ascending).
    active: Vec<usize>,
    /// Map grid index -> active index.
    index_of: Vec<Option<usize>>,
    /// mu-mass per active node; sums to 1.
    mass: Vec<f64>,
    /// Edges `(a, b, conductance)` in active indices, a < b.
    edges: Vec<(usize, usize, f64)>,
    /// Diagonal of `K` (sum of incident conductances).
    diag: Vec<f64>,
}

impl WeightedLaplacianOperator {
    /// Assemble from a model's posterior on a grid. The metric must be
    /// diagonal on grids (cross-derivative stencils are out of scope).
    pub fn assemble(model: &BayesModel, grid: &Grid) -> Result<Self> {
        let mut mu = Vec::with_capacity(grid.len());
        let mut ginv_x = Vec::with_capacity(grid.len());
        let mut ginv_y = Vec::with_capacity(grid.len());
        let mut bad_nodes = Vec::new();
        for i in 0..grid.len() {
            let x = grid.node(i);
            let v = model.combined_potential(&x);
            if !v.is_finite() {
                bad_nodes.push(i);
                mu.push(0.0);
                ginv_x.push(1.0);
                ginv_y.push(1.0);
                continue;
            }
            let g = model.metric().at(&x)?;
            let dim = grid.dim();
            let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for r in 0..dim {
                for c in 0..dim {
                    if r != c && g[(r, c)].abs() > 1e-14 * scale.max(1.0) {
                        return Err(Error::UnsupportedDimension {
                            got: dim,
                            detail: "grid operators require a diagonal metric".into(),
                        });
                    }
                }
            }
            let det: f64 = (0..dim).map(|d| g[(d, d)]).product();
            if !(det > 0.0) {
                return Err(Error::SingularMetric {
                    point: x.clone(),
                    detail: format!("diagonal product {det}"),
                });
            }
            mu.push((-v).exp() * det.sqrt());
            ginv_x.push(1.0 / g[(0, 0)]);
            ginv_y.push(if dim == 2 { 1.0 / g[(1, 1)] } else { 0.0 });
        }
        if !bad_nodes.is_empty() {
            return Err(Error::Assembly { nodes: bad_nodes });
        }
        Self::from_node_weights(grid.clone(), &mu, &ginv_x, &ginv_y)
    }

    /// Assemble from explicit nonnegative node weights (unnormalized Lebesgue
    /// density) and per-node diagonal inverse-metric entries. `ginv_y` is
    /// ignored on 1d grids.
    pub fn from_node_weights(
        grid: Grid,
        mu_unnormalized: &[f64],
        ginv_x: &[f64],
        ginv_y: &[f64],
    ) -> Result<Self> {
        let n = grid.len();
        if mu_unnormalized.len() != n || ginv_x.len() != n || (grid.dim() == 2 && ginv_y.len() != n)
        {
            return Err(Error::GridMismatch(
                "node weight arrays must match the grid size".into(),
            ));
        }
        let total: f64 = (0..n)
            .map(|i| grid.quad_weight(i) * mu_unnormalized[i])
            .sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::NumericDomain(format!(
                "density mass {total} is not positive and finite"
            )));
        }
        let mu: Vec<f64> = mu_unnormalized.iter().map(|v| v / total).collect();

        let mut active = Vec::new();
        let mut index_of = vec![None; n];
        for i in 0..n {
            if mu[i] > 0.0 {
                index_of[i] = Some(active.len());
                active.push(i);
            }
        }
        let mass: Vec<f64> = active
            .iter()
            .map(|&i| grid.quad_weight(i) * mu[i])
            .collect();

        let (nx, ny) = grid.shape();
        let dx = grid.dx();
        let dy = grid.dy();
        let axis_w = |i: usize, n: usize, d: f64| -> f64 {
            if i == 0 || i == n - 1 {
                0.5 * d
            } else {
                d
            }
        };
        let mut edges = Vec::new();
        {
            let mut push_edge = |i: usize, j: usize, k: f64| {
                if let (Some(a), Some(b)) = (index_of[i], index_of[j]) {
                    if k > 0.0 {
                        edges.push((a, b, k));
                    }
                }
            };
            match grid.dim() {
                1 => {
                    for i in 0..n - 1 {
                        let w = (mu[i] * mu[i + 1]).sqrt() * 0.5 * (ginv_x[i] + ginv_x[i + 1]);
                        push_edge(i, i + 1, w / dx);
                    }
                }
                2 => {
                    for ix in 0..nx {
                        for iy in 0..ny {
                            let i = grid.index(ix, iy);
                            if ix + 1 < nx {
                                let j = grid.index(ix + 1, iy);
                                let w = (mu[i] * mu[j]).sqrt() * 0.5 * (ginv_x[i] + ginv_x[j]);
                                push_edge(i, j, axis_w(iy, ny, dy) * w / dx);
                            }
                            if iy + 1 < ny {
                                let j = grid.index(ix, iy + 1);
                                let w = (mu[i] * mu[j]).sqrt() * 0.5 * (ginv_y[i] + ginv_y[j]);
                                push_edge(i, j, axis_w(ix, nx, dx) * w / dy);
                            }
                        }
                    }
                }
                d => {
                    return Err(Error::UnsupportedDimension {
                        got: d,
                        detail: "grid operators are 1d or 2d".into(),
                    })
                }
            }
        }
        let mut diag = vec![0.0; active.len()];
        for (a, b, k) in &edges {
            diag[*a] += *k;
            diag[*b] += *k;
        }
        Ok(WeightedLaplacianOperator {
            grid,
            active,
            index_of,
            mass,
            edges,
            diag,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    pub fn is_fully_active(&self) -> bool {
        self.active.len() == self.grid.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn active_index(&self, grid_idx: usize) -> Option<usize> {
        self.index_of[grid_idx]
    }

    /// Restrict a full-grid vector to the active nodes.
    pub fn restrict(&self, full: &[f64]) -> Result<Vec<f64>> {
        if full.len() != self.grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                self.grid.len(),
                full.len()
            )));
        }
        Ok(self.active.iter().map(|&i| full[i]).collect())
    }

    /// Extend an active-node vector to the full grid, zeros elsewhere.
    pub fn extend(&self, active_vals: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (a, &i) in self.active.iter().enumerate() {
            out[i] = active_vals[a];
        }
        out
    }

    /// `K f` on active vectors.
    pub fn apply_k(&self, f: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.diag[i] * f[i];
        }
        for &(a, b, k) in &self.edges {
            out[a] -= k * f[b];
            out[b] -= k * f[a];
        }
    }

    /// Dirichlet form `f' K f = sum_f k (f_a - f_b)^2`.
    pub fn dirichlet_form(&self, f: &[f64]) -> f64 {
        self.edges
            .iter()
            .map(|&(a, b, k)| k * (f[a] - f[b]) * (f[a] - f[b]))
            .sum()
    }

    pub fn mu_inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter()
            .zip(g)
            .zip(&self.mass)
            .map(|((a, b), m)| a * b * m)
            .sum()
    }

    pub fn mu_mean(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.mass).map(|(a, m)| a * m).sum()
    }

    pub fn mu_norm(&self, f: &[f64]) -> f64 {
        self.mu_inner(f, f).sqrt()
    }

    pub fn project_mean_zero(&self, f: &mut [f64]) {
        let mean = self.mu_mean(f);
        for v in f.iter_mut() {
            *v -= mean;
        }
    }

    /// Solve `(M + c K) x = b` for `c >= 0`: direct tridiagonal solve in 1d,
    /// conjugate gradients in 2d.
    pub fn solve_m_plus_ck(&self, c: f64, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.active.len();
        if self.grid.dim() == 1 {
            let mut lower = vec![0.0; n.saturating_sub(1)];
            let mut upper = vec![0.0; n.saturating_sub(1)];
            let diag: Vec<f64> = (0..n).map(|i| self.mass[i] + c * self.diag[i]).collect();
            for &(a, bidx, k) in &self.edges {
                let lo = a.min(bidx);
                debug_assert_eq!(a.max(bidx), lo + 1);
                lower[lo] = -c * k;
                upper[lo] = -c * k;
            }
            linalg::solve_tridiagonal(&lower, &diag, &upper, b)
        } else {
            let apply = |x: &[f64], y: &mut [f64]| {
                self.apply_k(x, y);
                for i in 0..n {
                    y[i] = self.mass[i] * x[i] + c * y[i];
                }
            };
            linalg::conjugate_gradient(apply, b, b, 1e-13, 40 * n)
        }
    }

    /// Max over active nodes of `K_ii / m_i`; a proxy for the largest
    /// generalized eigenvalue (within a factor of 2).
    pub fn diag_over_mass_max(&self) -> f64 {
        self.diag
            .iter()
            .zip(&self.mass)
            .map(|(d, m)| d / m)
            .fold(0.0f64, f64::max)
    }
}

/// Eigenpair for the smallest non-trivial eigenvalue.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralResult {
    pub lambda2: f64,
    /// Eigenfunction on the full grid (zeros at inactive nodes), mu-mean
    /// zero, unit mu-norm.
    #[serde(skip)]
    pub eigenfunction: Vec<f64>,
    pub residual: f64,
    pub n_iter: usize,
}

/// Smallest non-trivial eigenvalue of `K f = lambda M f` by inverse iteration
/// with explicit deflation of constants.
pub fn spectral_gap(op: &WeightedLaplacianOperator) -> Result<SpectralResult> {
    spectral_gap_with(op, 1e-9, 2000, 7)
}

pub fn spectral_gap_with(
    op: &WeightedLaplacianOperator,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<SpectralResult> {
    let n = op.n_active();
    if n < 2 {
        return Err(Error::InvalidInput(
            "spectral gap needs at least two active nodes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    op.project_mean_zero(&mut f);
    let norm = op.mu_norm(&f);
    for v in f.iter_mut() {
        *v /= norm;
    }
    let mut lambda = op.dirichlet_form(&f);
    let mut kf = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut n_iter = 0;
    // Absolute eigenvalue floor: below this fraction of the operator scale,
    // lambda2 is numerically zero and the residual is judged against the
    // floor instead.
    let lambda_floor = (op.diag_over_mass_max() * 1e-6).max(1e-300);
    for it in 0..max_iter {
        n_iter = it + 1;
        // Small relative shift keeps (K + sigma M) invertible on constants
        // while barely perturbing the target eigenvalue.
        let sigma = (1e-3 * lambda.abs()).max(1e-12 * op.diag_over_mass_max()).max(1e-300);
        // Solve (K + sigma M) g = M f  via  (M + (1/sigma) K) x = M f.
        let rhs: Vec<f64> = (0..n).map(|i| op.masses()[i] * f[i]).collect();
        let x = op.solve_m_plus_ck(1.0 / sigma, &rhs)?;
        let mut g: Vec<f64> = x.iter().map(|v| v / sigma).collect();
        op.project_mean_zero(&mut g);
        let norm = op.mu_norm(&g);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Convergence {
                residual,
                iterations: n_iter,
            });
        }
        for v in g.iter_mut() {
            *v /= norm;
        }
        lambda = op.dirichlet_form(&g);
        op.apply_k(&g, &mut kf);
        let mut r2 = 0.0;
        for i in 0..n {
            let d = kf[i] - lambda * op.masses()[i] * g[i];
            r2 += d * d / op.masses()[i];
        }
        residual = r2.sqrt();
        f = g;
        if residual <= tol * lambda.abs().max(lambda_floor) {
            break;
        }
    }
    if residual > 10.0 * tol * lambda.abs().max(lambda_floor) {
        return Err(Error::Convergence {
            residual,
            iterations: n_iter,
        });
    }
    Ok(SpectralResult {
        lambda2: lambda,
        eigenfunction: op.extend(&f),
        residual,
        n_iter,
    })
}

/// Dense cross-validation path: full symmetric eigendecomposition of
/// `M^{-1/2} K M^{-1/2}`, second-smallest eigenvalue. Limited to small
/// operators.
pub fn spectral_gap_dense(op: &WeightedLaplacianOperator) -> Result<f64> {
    let n = op.n_active();
    if n > 2100 {
        return Err(Error::InvalidInput(format!(
            "dense path limited to 2100 unknowns, got {n}"
        )));
    }
    let mut s = nalgebra::DMatrix::zeros(n, n);
    for i in 0..n {
        s[(i, i)] = op.diag[i];
    }
    for &(a, b, k) in &op.edges {
        s[(a, b)] -= k;
        s[(b, a)] -= k;
    }
    let half: Vec<f64> = op.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] *= half[i] * half[j];
        }
    }
    let (vals, _) = linalg::sym_eigen_sorted(&s);
    Ok(vals[1])
}

/// Report of the Poincare / geodesic-convexity checks.
#[derive(Debug, Clone, Serialize)]
pub struct PoincareCheckReport {
    pub poincare_ok: bool,
    /// Worst slack of `D(f) + tol - lambda2 |f|^2` over mean-zero trials.
    pub poincare_worst_slack: f64,
    pub parallelogram_ok: bool,
    pub parallelogram_worst: f64,
    pub convexity_ok: bool,
    pub convexity_worst_slack: f64,
}

/// Verify, for the discrete operator:
/// (a) the Poincare inequality `lambda2 |f|_mu^2 <= D(f) + 1e-8` for each
///     mean-zero trial;
/// (b) the parallelogram identity of the Dirichlet form at t in
///     {0.25, 0.5, 0.75} within 1e-10;
/// (c) the `2 lambda2`-geodesic-convexity inequality along linear
///     interpolation of mass-one pairs.
pub fn poincare_convexity_check(
    op: &WeightedLaplacianOperator,
    lambda2: f64,
    mean_zero_trials: &[Vec<f64>],
    mass_one_pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<PoincareCheckReport> {
    let mut poincare_worst = f64::INFINITY;
    for f in mean_zero_trials {
        let f = op.restrict(f)?;
        let norm = op.mu_norm(&f);
        if op.mu_mean(&f).abs() > 1e-8 * norm.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "poincare trial has mu-mean {:e}, expected zero",
                op.mu_mean(&f)
            )));
        }
        let slack = op.dirichlet_form(&f) + 1e-8 - lambda2 * norm * norm;
        poincare_worst = poincare_worst.min(slack);
    }

    let mut para_worst = 0.0f64;
    let mut conv_worst = f64::INFINITY;
    for (f0_full, f1_full) in mass_one_pairs {
        let f0 = op.restrict(f0_full)?;
        let f1 = op.restrict(f1_full)?;
        let d0 = op.dirichlet_form(&f0);
        let d1 = op.dirichlet_form(&f1);
        let diff: Vec<f64> = f0.iter().zip(&f1).map(|(a, b)| a - b).collect();
        let dd = op.dirichlet_form(&diff);
        let ndiff2 = op.mu_inner(&diff, &diff);
        for t in [0.25, 0.5, 0.75] {
            let mix: Vec<f64> = f0
                .iter()
                .zip(&f1)
                .map(|(a, b)| t * a + (1.0 - t) * b)
                .collect();
            let dmix = op.dirichlet_form(&mix);
            let lhs = dmix + t * (1.0 - t) * dd;
            let rhs = t * d0 + (1.0 - t) * d1;
            para_worst = para_worst.max((lhs - rhs).abs());
            let slack = rhs + 1e-8 - (dmix + lambda2 * t * (1.0 - t) * ndiff2);
            conv_worst = conv_worst.min(slack);
        }
    }
    Ok(PoincareCheckReport {
        poincare_ok: poincare_worst >= 0.0,
        poincare_worst_slack: poincare_worst,
        parallelogram_ok: para_worst <= 1e-10,
        parallelogram_worst: para_worst,
        convexity_ok: conv_worst >= 0.0,
        convexity_worst_slack: conv_worst,
    })
}

/// Greatest convex minorant of uniformly spaced samples (lower convex hull by
/// monotone chain), returned at the same sample points.
pub fn convex_envelope_1d(w: &[f64]) -> Result<Vec<f64>> {
    let n = w.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "convex envelope needs at least two samples".into(),
        ));
    }
    let mut hull: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // Pop b when it lies on or above the chord a-i.
            let cross =
                (b - a) as f64 * (w[i] - w[a]) - (i - a) as f64 * (w[b] - w[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut out = vec![0.0; n];
    for seg in hull.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        for i in a..=b {
            let t = (i - a) as f64 / (b - a) as f64;
            out[i] = w[a] + t * (w[b] - w[a]);
        }
    }
    Ok(out)
}

/// Guaranteed Poincare lower bound for the Ginzburg-Landau posterior:
/// `exp(-k / epsilon) * lambda_min_L^alpha`.
pub fn gl_poincare_bound(k: u32, epsilon: f64, lambda_min_l: f64, alpha: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !(lambda_min_l > 0.0) || !(alpha > 0.0) {
        return Err(Error::InvalidInput(
            "gl bound needs positive epsilon, lambda_min_L, alpha".into(),
        ));
    }
    Ok((-(k as f64) / epsilon).exp() * lambda_min_l.powf(alpha))
}
