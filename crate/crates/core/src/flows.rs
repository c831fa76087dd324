//! Grid solvers for the gradient-flow PDEs: the Fokker-Planck equation of the
//! KL/Dirichlet flow, the mu-weighted heat equation for relative densities,
//! and the pi-weighted porous-medium equation of the chi-squared flow; plus
//! decay curves and the 1d quantile Wasserstein distance.
//!
//! All schemes are conservative finite-volume stencils with no-flux
//! boundaries, so the relevant discrete mass is preserved to roundoff. The
//! Fokker-Planck stencil is exponentially fitted: fluxes are differences of
//! `theta * exp(V)` with face weight `exp(-V_face)`, which makes the sampled
//! density `exp(-V)` the exact discrete stationary state.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{chi2_divergence, kl_divergence};
use crate::grid::{Grid, GridDensity};
use crate::linalg;
use crate::model::BayesModel;
use crate::spectral::WeightedLaplacianOperator;

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scheme {
    ExplicitEuler,
    SemiImplicit,
}

/// Evolving grid state; `values` live in the representation of the flow that
/// owns the state (theta, rho, or rho-tilde).
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    values: Vec<f64>,
}

impl FlowState {
    pub fn new(t: f64, values: Vec<f64>) -> Self {
        FlowState { t, values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

const NEGATIVITY_TOL: f64 = 1e-12;

fn clamp_nonnegative(values: &mut [f64], scale: f64) -> Result<()> {
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v < -NEGATIVITY_TOL * scale.max(1.0) {
                return Err(Error::Scheme(format!(
                    "density went negative: {v:e} (scale {scale:e})"
                )));
            }
            *v = 0.0;
        }
    }
    Ok(())
}

fn diag_constant_metric(model: &BayesModel, grid: &Grid) -> Result<Vec<f64>> {
    if !model.metric().is_constant() {
        return Err(Error::InvalidInput(
            "this flow requires a constant metric; use the weighted-Laplacian form".into(),
        ));
    }
    let origin = vec![0.0; model.dim()];
    let g = model.metric().at(&origin)?;
    let dim = grid.dim();
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for r in 0..dim {
        for c in 0..dim {
            if r != c && g[(r, c)].abs() > 1e-14 * scale.max(1.0) {
                return Err(Error::UnsupportedDimension {
                    got: dim,
                    detail: "grid flows require a diagonal metric".into(),
                });
            }
        }
    }
    Ok((0..dim).map(|d| 1.0 / g[(d, d)]).collect())
}

/// Conservative drift-diffusion stepper for the density `theta` (stored
/// against Lebesgue measure) of the KL flow:
/// `d theta / dt = div(Ginv (grad theta + theta grad(Psi + phi)))`.
pub struct FokkerPlanckFlow {
    grid: Grid,
    exp_v: Vec<f64>,
    /// Edges `(i, j, k)` with conductance `k = area * ginv * exp(-V_face) / spacing^2`.
    edges: Vec<(usize, usize, f64)>,
    diag: Vec<f64>,
    qw: Vec<f64>,
    dt: f64,
    scheme: Scheme,
    dt_max_explicit: f64,
}

impl FokkerPlanckFlow {
    pub fn new(model: &BayesModel, grid: &Grid, dt: f64, scheme: Scheme) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput("dt must be positive".into()));
        }
        let ginv = diag_constant_metric(model, grid)?;
        let n = grid.len();
        let v: Vec<f64> = (0..n).map(|i| model.combined_potential(&grid.node(i))).collect();
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Assembly { nodes: vec![i] });
        }
        let exp_v: Vec<f64> = v.iter().map(|x| x.exp()).collect();
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
        match grid.dim() {
            1 => {
                for i in 0..n - 1 {
                    let w = ginv[0] * (-(0.5 * (v[i] + v[i + 1]))).exp();
                    edges.push((i, i + 1, w / dx));
                }
            }
            2 => {
                for ix in 0..nx {
                    for iy in 0..ny {
                        let i = grid.index(ix, iy);
                        if ix + 1 < nx {
                            let j = grid.index(ix + 1, iy);
                            let w = ginv[0] * (-(0.5 * (v[i] + v[j]))).exp();
                            edges.push((i, j, axis_w(iy, ny, dy) * w / dx));
                        }
                        if iy + 1 < ny {
                            let j = grid.index(ix, iy + 1);
                            let w = ginv[1] * (-(0.5 * (v[i] + v[j]))).exp();
                            edges.push((i, j, axis_w(ix, nx, dx) * w / dy));
                        }
                    }
                }
            }
            d => {
                return Err(Error::UnsupportedDimension {
                    got: d,
                    detail: "flows are 1d or 2d".into(),
                })
            }
        }
        let qw = grid.quad_weights();
        let mut diag = vec![0.0; n];
        for &(i, j, k) in &edges {
            diag[i] += k;
            diag[j] += k;
        }
        let dt_max_explicit = (0..n)
            .map(|i| qw[i] / (diag[i] * exp_v[i]))
            .fold(f64::INFINITY, f64::min);
        Ok(FokkerPlanckFlow {
            grid: grid.clone(),
            exp_v,
            edges,
            diag,
            qw,
            dt,
            scheme,
            dt_max_explicit,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Exact discrete stationary density (normalized `exp(-V)`).
    pub fn stationary_density(&self) -> Result<GridDensity> {
        let vals: Vec<f64> = self.exp_v.iter().map(|e| 1.0 / e).collect();
        GridDensity::new(self.grid.clone(), vals)
    }

    pub fn state_from_density(&self, density: &GridDensity) -> Result<FlowState> {
        self.grid.check_same(density.grid())?;
        Ok(FlowState::new(0.0, density.values().to_vec()))
    }

    pub fn density(&self, state: &FlowState) -> Result<GridDensity> {
        GridDensity::new(self.grid.clone(), state.values.clone())
    }

    /// Mass of theta in the discrete (quadrature) sense.
    pub fn mass(&self, state: &FlowState) -> f64 {
        self.grid.integrate(&state.values)
    }

    pub fn step(&self, state: &mut FlowState) -> Result<()> {
        let n = self.grid.len();
        match self.scheme {
            Scheme::ExplicitEuler => {
                if self.dt > self.dt_max_explicit {
                    return Err(Error::Stability {
                        dt: self.dt,
                        dt_max: self.dt_max_explicit,
                    });
                }
                let u: Vec<f64> = (0..n).map(|i| state.values[i] * self.exp_v[i]).collect();
                let mut acc = vec![0.0; n];
                for &(i, j, k) in &self.edges {
                    let flux = k * (u[j] - u[i]);
                    acc[i] += flux;
                    acc[j] -= flux;
                }
                for i in 0..n {
                    state.values[i] += self.dt * acc[i] / self.qw[i];
                }
            }
            Scheme::SemiImplicit => {
                // (diag(q exp(-V)) + dt Ktilde) u_new = q theta_old.
                let rhs: Vec<f64> = (0..n).map(|i| self.qw[i] * state.values[i]).collect();
                let u = self.solve_implicit(&rhs)?;
                for i in 0..n {
                    state.values[i] = u[i] / self.exp_v[i];
                }
            }
        }
        let scale = state.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        clamp_nonnegative(&mut state.values, scale)?;
        state.t += self.dt;
        Ok(())
    }

    fn solve_implicit(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.grid.len();
        let dvals: Vec<f64> = (0..n)
            .map(|i| self.qw[i] / self.exp_v[i] + self.dt * self.diag[i])
            .collect();
        if self.grid.dim() == 1 {
            let mut lower = vec![0.0; n - 1];
            let mut upper = vec![0.0; n - 1];
            for &(i, j, k) in &self.edges {
                let lo = i.min(j);
                debug_assert_eq!(i.max(j), lo + 1);
                lower[lo] = -self.dt * k;
                upper[lo] = -self.dt * k;
            }
            linalg::solve_tridiagonal(&lower, &dvals, &upper, rhs)
        } else {
            let apply = |x: &[f64], y: &mut [f64]| {
                for i in 0..n {
                    y[i] = dvals[i] * x[i];
                }
                for &(i, j, k) in &self.edges {
                    y[i] -= self.dt * k * x[j];
                    y[j] -= self.dt * k * x[i];
                }
            };
            linalg::conjugate_gradient(apply, rhs, rhs, 1e-13, 40 * n)
        }
    }
}

/// Heat flow of the relative density `rho = d mu_t / d mu` under the
/// mu-weighted Laplacian; shares its stencil with the spectral module.
pub struct WeightedLaplacianFlow {
    op: WeightedLaplacianOperator,
    dt: f64,
    scheme: Scheme,
}

impl WeightedLaplacianFlow {
    pub fn new(model: &BayesModel, grid: &Grid, dt: f64, scheme: Scheme) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput("dt must be positive".into()));
        }
        let op = WeightedLaplacianOperator::assemble(model, grid)?;
        if !op.is_fully_active() {
            return Err(Error::Scheme(
                "weighted flow requires a strictly positive stationary density".into(),
            ));
        }
        Ok(WeightedLaplacianFlow { op, dt, scheme })
    }

    pub fn from_operator(op: WeightedLaplacianOperator, dt: f64, scheme: Scheme) -> Self {
        WeightedLaplacianFlow { op, dt, scheme }
    }

    pub fn operator(&self) -> &WeightedLaplacianOperator {
        &self.op
    }

    pub fn grid(&self) -> &Grid {
        self.op.grid()
    }

    /// mu-weighted integral of rho (the conserved mass).
    pub fn mu_mass(&self, state: &FlowState) -> f64 {
        self.op.mu_mean(&state.values)
    }

    /// mu-weighted L2 distance of rho from the constant 1.
    pub fn l2_distance_to_one(&self, state: &FlowState) -> f64 {
        let diff: Vec<f64> = state.values.iter().map(|v| v - 1.0).collect();
        self.op.mu_norm(&diff)
    }

    /// Convert an absolute density to the relative state rho = density / mu.
    pub fn state_from_density(&self, density: &GridDensity) -> Result<FlowState> {
        self.grid().check_same(density.grid())?;
        let grid = self.grid();
        let n = grid.len();
        let mut rho = vec![0.0; n];
        for i in 0..n {
            let a = self.op.active_index(i).expect("fully active");
            let mu_leb = self.op.masses()[a] / grid.quad_weight(i);
            rho[i] = density.values()[i] / mu_leb;
        }
        Ok(FlowState::new(0.0, rho))
    }

    /// Convert the relative state back to a normalized Lebesgue density.
    pub fn density(&self, state: &FlowState) -> Result<GridDensity> {
        let grid = self.grid().clone();
        let n = grid.len();
        let mut vals = vec![0.0; n];
        for i in 0..n {
            let a = self.op.active_index(i).expect("fully active");
            let mu_leb = self.op.masses()[a] / grid.quad_weight(i);
            vals[i] = state.values[i] * mu_leb;
        }
        GridDensity::new(grid, vals)
    }

    pub fn step(&self, state: &mut FlowState) -> Result<()> {
        let n = self.op.n_active();
        match self.scheme {
            Scheme::ExplicitEuler => {
                let dt_max = 1.0 / self.op.diag_over_mass_max();
                if self.dt > dt_max {
                    return Err(Error::Stability {
                        dt: self.dt,
                        dt_max,
                    });
                }
                let mut kf = vec![0.0; n];
                self.op.apply_k(&state.values, &mut kf);
                for i in 0..n {
                    state.values[i] -= self.dt * kf[i] / self.op.masses()[i];
                }
            }
            Scheme::SemiImplicit => {
                let rhs: Vec<f64> = (0..n)
                    .map(|i| self.op.masses()[i] * state.values[i])
                    .collect();
                state.values = self.op.solve_m_plus_ck(self.dt, &rhs)?;
            }
        }
        let scale = state.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        clamp_nonnegative(&mut state.values, scale)?;
        state.t += self.dt;
        Ok(())
    }
}

/// Conservative explicit stepper for the pi-weighted porous-medium equation
/// of the chi-squared flow,
/// `d rho~ / dt = (1/pi) div(pi Ginv (grad(rho~^2) + rho~ grad phi))`,
/// evolving `rho~ = d mu_t / d pi` with automatic CFL-limited steps.
pub struct PorousMediumFlow {
    grid: Grid,
    /// pi-masses per node (normalized prior times quadrature weight).
    p: Vec<f64>,
    /// Edges `(i, j, base)` with `base = area * pi_face * ginv_face / spacing`.
    edges: Vec<(usize, usize, f64, f64)>, // (i, j, base/spacing, dphi=phi_j-phi_i)
    min_spacing2: f64,
    max_ginv: f64,
}

impl PorousMediumFlow {
    pub fn new(model: &BayesModel, grid: &Grid) -> Result<Self> {
        let ginv = diag_constant_metric(model, grid)?;
        let n = grid.len();
        let prior = model.prior_density(grid)?;
        let pi = prior.values();
        let phi: Vec<f64> = (0..n)
            .map(|i| model.neg_log_likelihood().value(&grid.node(i)))
            .collect();
        if let Some(i) = phi.iter().position(|x| !x.is_finite()) {
            return Err(Error::Assembly { nodes: vec![i] });
        }
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
        match grid.dim() {
            1 => {
                for i in 0..n - 1 {
                    let w = ginv[0] * (pi[i] * pi[i + 1]).sqrt();
                    edges.push((i, i + 1, w / dx, phi[i + 1] - phi[i]));
                }
            }
            2 => {
                for ix in 0..nx {
                    for iy in 0..ny {
                        let i = grid.index(ix, iy);
                        if ix + 1 < nx {
                            let j = grid.index(ix + 1, iy);
                            let w = ginv[0] * (pi[i] * pi[j]).sqrt();
                            edges.push((i, j, axis_w(iy, ny, dy) * w / dx, phi[j] - phi[i]));
                        }
                        if iy + 1 < ny {
                            let j = grid.index(ix, iy + 1);
                            let w = ginv[1] * (pi[i] * pi[j]).sqrt();
                            edges.push((i, j, axis_w(ix, nx, dx) * w / dy, phi[j] - phi[i]));
                        }
                    }
                }
            }
            d => {
                return Err(Error::UnsupportedDimension {
                    got: d,
                    detail: "flows are 1d or 2d".into(),
                })
            }
        }
        let p: Vec<f64> = (0..n).map(|i| grid.quad_weight(i) * pi[i]).collect();
        let min_spacing2 = if grid.dim() == 1 {
            dx * dx
        } else {
            (dx * dx).min(dy * dy)
        };
        let max_ginv = ginv.iter().fold(0.0f64, |a, v| a.max(*v));
        Ok(PorousMediumFlow {
            grid: grid.clone(),
            p,
            edges,
            min_spacing2,
            max_ginv,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// pi-mass of rho~ (the conserved quantity).
    pub fn pi_mass(&self, state: &FlowState) -> f64 {
        state.values.iter().zip(&self.p).map(|(r, p)| r * p).sum()
    }

    /// Convert an absolute density to rho~ = density / pi.
    pub fn state_from_density(&self, density: &GridDensity) -> Result<FlowState> {
        self.grid.check_same(density.grid())?;
        let n = self.grid.len();
        let mut rt = vec![0.0; n];
        for i in 0..n {
            let pi_leb = self.p[i] / self.grid.quad_weight(i);
            if pi_leb <= 0.0 && density.values()[i] > 0.0 {
                return Err(Error::Scheme(
                    "initial density charges a region of zero prior mass".into(),
                ));
            }
            rt[i] = if pi_leb > 0.0 {
                density.values()[i] / pi_leb
            } else {
                0.0
            };
        }
        Ok(FlowState::new(0.0, rt))
    }

    /// Convert rho~ back to a normalized Lebesgue density of mu_t.
    pub fn density(&self, state: &FlowState) -> Result<GridDensity> {
        let n = self.grid.len();
        let mut vals = vec![0.0; n];
        for i in 0..n {
            let pi_leb = self.p[i] / self.grid.quad_weight(i);
            vals[i] = state.values[i] * pi_leb;
        }
        GridDensity::new(self.grid.clone(), vals)
    }

    /// Chi-squared divergence of the current state from the prior,
    /// `integral (rho~ - 1)^2 d pi`.
    pub fn chi2_to_prior(&self, state: &FlowState) -> f64 {
        state
            .values
            .iter()
            .zip(&self.p)
            .map(|(r, p)| p * (r - 1.0) * (r - 1.0))
            .sum()
    }

    /// Largest stable explicit step for the current state.
    pub fn cfl_dt(&self, state: &FlowState) -> f64 {
        let sup_rho = state.values.iter().fold(0.0f64, |a, v| a.max(*v));
        let d = self.grid.dim() as f64;
        let diff = self.min_spacing2 / (4.0 * d * (2.0 * sup_rho).max(1e-12) * self.max_ginv);
        // Advection limit from the likelihood drift.
        let max_drift = self
            .edges
            .iter()
            .map(|&(_, _, base, dphi)| (base * dphi).abs())
            .fold(0.0f64, f64::max);
        let p_min = self.p.iter().copied().fold(f64::INFINITY, f64::min);
        let adv = if max_drift > 0.0 {
            p_min / (4.0 * d * max_drift)
        } else {
            f64::INFINITY
        };
        diff.min(adv)
    }

    /// One explicit step of size `min(max_dt, cfl)`; returns the dt taken.
    pub fn step(&self, state: &mut FlowState, max_dt: f64) -> Result<f64> {
        if !(max_dt > 0.0) {
            return Err(Error::InvalidInput("dt must be positive".into()));
        }
        let dt = max_dt.min(self.cfl_dt(state));
        let r = &state.values;
        let n = r.len();
        let mut acc = vec![0.0; n];
        for &(i, j, base, dphi) in &self.edges {
            let face = (0.5 * (r[i] + r[j])).max(0.0);
            // (rho_j^2 - rho_i^2) = 2 * face * (rho_j - rho_i) exactly.
            let flux = base * ((r[j] * r[j] - r[i] * r[i]) + face * dphi);
            acc[i] += flux;
            acc[j] -= flux;
        }
        for i in 0..n {
            state.values[i] += dt * acc[i] / self.p[i];
        }
        let scale = state.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        clamp_nonnegative(&mut state.values, scale)?;
        state.t += dt;
        Ok(dt)
    }

    /// Support radius: half the extent of `{rho~ > threshold * max rho~}`
    /// around its center (1d only).
    pub fn support_radius(&self, state: &FlowState, rel_threshold: f64) -> Result<f64> {
        let Grid::One { .. } = self.grid else {
            return Err(Error::UnsupportedDimension {
                got: self.grid.dim(),
                detail: "support radius is 1d".into(),
            });
        };
        let max = state.values.iter().fold(0.0f64, |a, v| a.max(*v));
        let thr = rel_threshold * max;
        let mut lo = None;
        let mut hi = None;
        for i in 0..self.grid.len() {
            if state.values[i] > thr {
                if lo.is_none() {
                    lo = Some(i);
                }
                hi = Some(i);
            }
        }
        match (lo, hi) {
            (Some(a), Some(b)) => Ok(0.5 * (self.grid.x(b) - self.grid.x(a))),
            _ => Err(Error::Scheme("state has no support above threshold".into())),
        }
    }
}

/// Quadratic-cost Wasserstein distance between 1d densities via quantile
/// coupling at 2048 midpoint quantile nodes.
pub fn wasserstein_1d(nu1: &GridDensity, nu2: &GridDensity) -> Result<f64> {
    if nu1.grid().dim() != 1 || nu2.grid().dim() != 1 {
        return Err(Error::UnsupportedDimension {
            got: nu1.grid().dim().max(nu2.grid().dim()),
            detail: "quantile Wasserstein is 1d".into(),
        });
    }
    const NODES: usize = 2048;
    let c1 = nu1.cdf_1d()?;
    let c2 = nu2.cdf_1d()?;
    let mut total = 0.0;
    for k in 0..NODES {
        let s = (k as f64 + 0.5) / NODES as f64;
        let q1 = crate::grid::invert_cdf(&c1, nu1.grid(), s);
        let q2 = crate::grid::invert_cdf(&c2, nu2.grid(), s);
        total += (q1 - q2) * (q1 - q2);
    }
    Ok((total / NODES as f64).sqrt())
}

/// Which flow drives a decay curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FlowKind {
    KlFokkerPlanck,
    Chi2PorousMedium,
}

/// Which functional is recorded along the flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DecayFunctional {
    Kl,
    Chi2,
    L2,
    W2,
}

/// Functional values recorded along a flow, with a least-squares exponential
/// rate fitted on a time window.
#[derive(Debug, Clone, Serialize)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub fitted_rate: f64,
    pub window: (f64, f64),
}

impl DecayCurve {
    /// Least-squares slope of `log(value)` over the window; values that are
    /// not strictly positive are excluded from the fit.
    pub fn fit_rate(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<f64> {
        let pts: Vec<(f64, f64)> = times
            .iter()
            .zip(values)
            .filter(|(t, v)| **t >= window.0 && **t <= window.1 && **v > 0.0)
            .map(|(t, v)| (*t, v.ln()))
            .collect();
        if pts.len() < 3 {
            return Err(Error::Fit(format!(
                "{} usable points in window [{}, {}]; need at least 3",
                pts.len(),
                window.0,
                window.1
            )));
        }
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|(t, _)| t).sum();
        let sy: f64 = pts.iter().map(|(_, y)| y).sum();
        let sxx: f64 = pts.iter().map(|(t, _)| t * t).sum();
        let sxy: f64 = pts.iter().map(|(t, y)| t * y).sum();
        let denom = n * sxx - sx * sx;
        if denom.abs() < 1e-300 {
            return Err(Error::Fit("degenerate time window".into()));
        }
        Ok((n * sxy - sx * sy) / denom)
    }

    /// CSV rows `t,value` with 17 significant digits, plus a trailing
    /// comment line with the fitted rate and window.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "t,value")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{:.16e},{:.16e}", t, v)?;
        }
        writeln!(
            w,
            "# fitted_rate={:.16e} window=[{:.16e},{:.16e}]",
            self.fitted_rate, self.window.0, self.window.1
        )?;
        Ok(())
    }
}

/// Evolve a model's flow from an initial density and record a functional.
///
/// The KL flow uses the semi-implicit Fokker-Planck stepper; the chi-squared
/// flow uses the explicit porous-medium stepper with automatic CFL steps. The
/// reference state for divergence-type functionals is the flow's own discrete
/// stationary density; for the porous-medium flow this requires a pure-prior
/// model (`phi = 0`), whose stationary state is the prior itself.
#[allow(clippy::too_many_arguments)]
pub fn decay_curve(
    model: &BayesModel,
    grid: &Grid,
    initial: &GridDensity,
    flow: FlowKind,
    functional: DecayFunctional,
    dt: f64,
    t_end: f64,
    record_every: f64,
    window: (f64, f64),
) -> Result<DecayCurve> {
    if functional == DecayFunctional::W2 && grid.dim() != 1 {
        return Err(Error::UnsupportedDimension {
            got: grid.dim(),
            detail: "W2 decay curves are 1d".into(),
        });
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    match flow {
        FlowKind::KlFokkerPlanck => {
            let fp = FokkerPlanckFlow::new(model, grid, dt, Scheme::SemiImplicit)?;
            let stationary = fp.stationary_density()?;
            let mut state = fp.state_from_density(initial)?;
            let mut next_record = 0.0;
            loop {
                if state.t + 1e-12 >= next_record {
                    let dens = fp.density(&state)?;
                    times.push(state.t);
                    values.push(eval_functional(functional, &dens, &stationary)?);
                    next_record += record_every;
                }
                if state.t >= t_end {
                    break;
                }
                fp.step(&mut state)?;
            }
        }
        FlowKind::Chi2PorousMedium => {
            let max_phi = (0..grid.len())
                .map(|i| model.neg_log_likelihood().value(&grid.node(i)).abs())
                .fold(0.0f64, f64::max);
            if max_phi > 1e-12 {
                return Err(Error::InvalidInput(
                    "chi-squared decay curves require a pure-prior model (phi = 0), whose \
                     discrete stationary state is the prior"
                        .into(),
                ));
            }
            let pm = PorousMediumFlow::new(model, grid)?;
            let stationary = model.prior_density(grid)?;
            let mut state = pm.state_from_density(initial)?;
            let mut next_record = 0.0;
            loop {
                if state.t + 1e-12 >= next_record {
                    let dens = pm.density(&state)?;
                    times.push(state.t);
                    values.push(eval_functional(functional, &dens, &stationary)?);
                    next_record += record_every;
                }
                if state.t >= t_end {
                    break;
                }
                let remaining = (next_record - state.t).min(t_end - state.t).max(1e-15);
                pm.step(&mut state, remaining.min(dt))?;
            }
        }
    }
    let fitted_rate = DecayCurve::fit_rate(&times, &values, window)?;
    Ok(DecayCurve {
        times,
        values,
        fitted_rate,
        window,
    })
}

fn eval_functional(
    functional: DecayFunctional,
    current: &GridDensity,
    stationary: &GridDensity,
) -> Result<f64> {
    Ok(match functional {
        DecayFunctional::Kl => kl_divergence(current, stationary)?
            .finite()
            .unwrap_or(f64::INFINITY),
        DecayFunctional::Chi2 => chi2_divergence(current, stationary)?
            .finite()
            .unwrap_or(f64::INFINITY),
        DecayFunctional::L2 => {
            let grid = current.grid();
            let mut acc = 0.0;
            for i in 0..grid.len() {
                let m = stationary.values()[i];
                if m > 0.0 {
                    let rho = current.values()[i] / m;
                    acc += grid.quad_weight(i) * m * (rho - 1.0) * (rho - 1.0);
                }
            }
            acc.sqrt()
        }
        DecayFunctional::W2 => wasserstein_1d(current, stationary)?,
    })
}
