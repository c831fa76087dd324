//! Particle simulation of the Langevin and chi-squared diffusions with
//! reproducible counter-based randomness.
//!
//! Every particle-step draws its Gaussian increments from a dedicated
//! `ChaCha8` stream keyed by `(seed, particle, step)`, so trajectories are
//! independent of ensemble size, iteration order, and thread count. The
//! chi-squared process shares its drift/noise kernel with the Langevin step:
//! with coefficient `rho = 1` the two are bitwise identical.

use nalgebra::DMatrix;
use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridDensity};
use crate::linalg;
use crate::model::BayesModel;

/// Dedicated RNG for one `(seed, particle, step)` cell of the simulation.
pub fn particle_rng(seed: u64, particle: u64, step: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&particle.to_le_bytes());
    key[16..24].copy_from_slice(&step.to_le_bytes());
    key[24..32].copy_from_slice(&0x6266_7377_6b6c_7261u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Positions of `n` particles in `dim` coordinates, flat row-major storage.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    dim: usize,
    positions: Vec<f64>,
    pub t: f64,
    pub step_count: u64,
    pub seed: u64,
    /// Coordinate-1 value of particle 0 recorded after every step.
    trace0: Vec<f64>,
}

impl ParticleEnsemble {
    pub fn from_positions(dim: usize, positions: Vec<f64>, seed: u64) -> Result<Self> {
        if dim == 0 || positions.is_empty() || positions.len() % dim != 0 {
            return Err(Error::InvalidInput(
                "positions must be a nonempty multiple of dim".into(),
            ));
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("positions must be finite".into()));
        }
        Ok(ParticleEnsemble {
            dim,
            positions,
            t: 0.0,
            step_count: 0,
            seed,
            trace0: Vec::new(),
        })
    }

    /// All particles at a single point.
    pub fn at_point(point: &[f64], n: usize, seed: u64) -> Result<Self> {
        let mut positions = Vec::with_capacity(n * point.len());
        for _ in 0..n {
            positions.extend_from_slice(point);
        }
        Self::from_positions(point.len(), positions, seed)
    }

    /// Draw particles from a 1d density by inverse-CDF sampling. Stratified
    /// mode spaces the quantile levels evenly; random mode draws them from
    /// the seeded stream.
    pub fn from_inverse_cdf(
        density: &GridDensity,
        n: usize,
        seed: u64,
        stratified: bool,
    ) -> Result<Self> {
        if density.grid().dim() != 1 {
            return Err(Error::UnsupportedDimension {
                got: density.grid().dim(),
                detail: "inverse-CDF sampling is 1d".into(),
            });
        }
        let cdf = density.cdf_1d()?;
        let mut positions = Vec::with_capacity(n);
        for i in 0..n {
            let s = if stratified {
                (i as f64 + 0.5) / n as f64
            } else {
                use rand::Rng as _;
                let mut rng = particle_rng(seed, i as u64, u64::MAX);
                rng.gen_range(0.0..1.0)
            };
            positions.push(crate::grid::invert_cdf(&cdf, density.grid(), s));
        }
        Self::from_positions(1, positions, seed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn trace0(&self) -> &[f64] {
        &self.trace0
    }

    fn record_trace(&mut self) {
        self.trace0.push(self.positions[0]);
    }
}

/// Particle dimensions are capped so the step kernel can use stack buffers.
pub const MAX_PARTICLE_DIM: usize = 8;

/// Precomputed constant-metric quantities for the diffusion kernels.
pub struct LangevinStepper {
    dim: usize,
    /// Row-major `Ginv` and `Ginv^{1/2}`.
    ginv: Vec<f64>,
    ginv_sqrt: Vec<f64>,
}

impl LangevinStepper {
    pub fn new(model: &BayesModel) -> Result<Self> {
        if !model.metric().is_constant() {
            return Err(Error::InvalidInput(
                "particle samplers require a constant metric".into(),
            ));
        }
        let dim = model.dim();
        if dim > MAX_PARTICLE_DIM {
            return Err(Error::UnsupportedDimension {
                got: dim,
                detail: format!("particle samplers support up to {MAX_PARTICLE_DIM} dimensions"),
            });
        }
        let origin = vec![0.0; dim];
        let g = model.metric().at(&origin)?;
        let ginv_m = linalg::solve_spd_inverse(&g, &origin)?;
        let ginv_sqrt_m = linalg::inv_sqrt_spd(&g, &origin)?;
        let flatten = |m: &DMatrix<f64>| -> Vec<f64> {
            (0..dim)
                .flat_map(|i| (0..dim).map(move |j| (i, j)))
                .map(|(i, j)| m[(i, j)])
                .collect()
        };
        Ok(LangevinStepper {
            dim,
            ginv: flatten(&ginv_m),
            ginv_sqrt: flatten(&ginv_sqrt_m),
        })
    }

    /// Shared Euler-Maruyama kernel:
    /// `x <- x - (rho Ginv grad Psi + Ginv grad phi) dt + sqrt(2 dt rho) Ginv^{1/2} xi`.
    #[allow(clippy::too_many_arguments)]
    fn kernel(
        &self,
        x: &mut [f64],
        rho: f64,
        grad_psi: &[f64],
        grad_phi: &[f64],
        dt: f64,
        rng: &mut ChaCha8Rng,
        index: usize,
    ) -> Result<()> {
        let m = self.dim;
        let mut xi = [0.0f64; MAX_PARTICLE_DIM];
        for k in xi.iter_mut().take(m) {
            *k = StandardNormal.sample(rng);
        }
        let amp = (2.0 * dt * rho).sqrt();
        let mut delta = [0.0f64; MAX_PARTICLE_DIM];
        for k in 0..m {
            let row = &self.ginv[k * m..(k + 1) * m];
            let row_sqrt = &self.ginv_sqrt[k * m..(k + 1) * m];
            let mut dpsi = 0.0;
            let mut dphi = 0.0;
            let mut noise = 0.0;
            for j in 0..m {
                dpsi += row[j] * grad_psi[j];
                dphi += row[j] * grad_phi[j];
                noise += row_sqrt[j] * xi[j];
            }
            delta[k] = -(rho * dpsi + dphi) * dt + amp * noise;
        }
        for k in 0..m {
            x[k] += delta[k];
            if !x[k].is_finite() {
                return Err(Error::Divergence {
                    index,
                    position: x.to_vec(),
                });
            }
        }
        Ok(())
    }
}

/// One Euler-Maruyama step of the Langevin diffusion for every particle.
pub fn langevin_step(
    ensemble: &mut ParticleEnsemble,
    model: &BayesModel,
    stepper: &LangevinStepper,
    dt: f64,
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("dt must be positive".into()));
    }
    let dim = ensemble.dim;
    let seed = ensemble.seed;
    let step = ensemble.step_count;
    let psi = model.prior_potential();
    let phi = model.neg_log_likelihood();
    let result: Result<()> = ensemble
        .positions
        .par_chunks_mut(dim)
        .enumerate()
        .try_for_each(|(i, x)| {
            let mut rng = particle_rng(seed, i as u64, step);
            let mut gp = [0.0f64; MAX_PARTICLE_DIM];
            let mut gf = [0.0f64; MAX_PARTICLE_DIM];
            psi.gradient_into(x, &mut gp[..dim])?;
            phi.gradient_into(x, &mut gf[..dim])?;
            stepper.kernel(x, 1.0, &gp[..dim], &gf[..dim], dt, &mut rng, i)
        });
    result?;
    ensemble.t += dt;
    ensemble.step_count += 1;
    ensemble.record_trace();
    Ok(())
}

/// Behaviour when a particle leaves the density grid of the chi-squared
/// process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutOfDomainPolicy {
    Reflect,
    Halt,
}

/// Time-indexed snapshots of the porous-medium solution used as the
/// coefficient field of the chi-squared diffusion.
pub struct RhoTimeline {
    times: Vec<f64>,
    snapshots: Vec<GridDensityField>,
}

/// Raw (not probability-normalized) field values on a grid with bilinear
/// interpolation; stores rho-tilde itself.
pub struct GridDensityField {
    grid: Grid,
    values: Vec<f64>,
}

impl GridDensityField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(GridDensityField { grid, values })
    }

    /// Bilinear interpolation clipped at zero; `None` when outside the grid.
    pub fn interpolate(&self, x: &[f64]) -> Option<f64> {
        match &self.grid {
            Grid::One { nx, xmin, xmax } => {
                if x[0] < *xmin || x[0] > *xmax {
                    return None;
                }
                let dx = self.grid.dx();
                let fi = ((x[0] - xmin) / dx).clamp(0.0, (*nx - 1) as f64);
                let i0 = (fi.floor() as usize).min(nx - 2);
                let t = fi - i0 as f64;
                let v = self.values[i0] * (1.0 - t) + self.values[i0 + 1] * t;
                Some(v.max(0.0))
            }
            Grid::Two {
                nx,
                ny,
                xmin,
                xmax,
                ymin,
                ymax,
            } => {
                if x[0] < *xmin || x[0] > *xmax || x[1] < *ymin || x[1] > *ymax {
                    return None;
                }
                let dx = self.grid.dx();
                let dy = self.grid.dy();
                let fi = ((x[0] - xmin) / dx).clamp(0.0, (*nx - 1) as f64);
                let fj = ((x[1] - ymin) / dy).clamp(0.0, (*ny - 1) as f64);
                let i0 = (fi.floor() as usize).min(nx - 2);
                let j0 = (fj.floor() as usize).min(ny - 2);
                let tx = fi - i0 as f64;
                let ty = fj - j0 as f64;
                let at = |i: usize, j: usize| self.values[self.grid.index(i, j)];
                let v = at(i0, j0) * (1.0 - tx) * (1.0 - ty)
                    + at(i0 + 1, j0) * tx * (1.0 - ty)
                    + at(i0, j0 + 1) * (1.0 - tx) * ty
                    + at(i0 + 1, j0 + 1) * tx * ty;
                Some(v.max(0.0))
            }
        }
    }

    fn reflect_into(&self, x: &mut [f64]) {
        let clamp_reflect = |v: f64, lo: f64, hi: f64| -> f64 {
            let mut v = v;
            let width = hi - lo;
            // One reflection suffices for small steps; loop for safety.
            for _ in 0..8 {
                if v < lo {
                    v = lo + (lo - v);
                } else if v > hi {
                    v = hi - (v - hi);
                } else {
                    return v;
                }
            }
            v.clamp(lo, lo + width)
        };
        match &self.grid {
            Grid::One { xmin, xmax, .. } => {
                x[0] = clamp_reflect(x[0], *xmin, *xmax);
            }
            Grid::Two {
                xmin,
                xmax,
                ymin,
                ymax,
                ..
            } => {
                x[0] = clamp_reflect(x[0], *xmin, *xmax);
                x[1] = clamp_reflect(x[1], *ymin, *ymax);
            }
        }
    }
}

impl RhoTimeline {
    pub fn new(times: Vec<f64>, snapshots: Vec<GridDensityField>) -> Result<Self> {
        if times.is_empty() || times.len() != snapshots.len() {
            return Err(Error::InvalidInput(
                "timeline needs matching nonempty times and snapshots".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "timeline times must be strictly increasing".into(),
            ));
        }
        Ok(RhoTimeline { times, snapshots })
    }

    pub fn covers(&self, t: f64) -> bool {
        t >= self.times[0] - 1e-9 && t <= *self.times.last().unwrap() + 1e-9
    }

    /// Snapshot nearest in time.
    pub fn nearest(&self, t: f64) -> &GridDensityField {
        let idx = match self
            .times
            .binary_search_by(|probe| probe.total_cmp(&t))
        {
            Ok(i) => i,
            Err(i) => {
                if i == 0 {
                    0
                } else if i >= self.times.len() {
                    self.times.len() - 1
                } else if (t - self.times[i - 1]).abs() <= (self.times[i] - t).abs() {
                    i - 1
                } else {
                    i
                }
            }
        };
        &self.snapshots[idx]
    }
}

/// One Euler-Maruyama step of the chi-squared (porous-medium) diffusion with
/// a pre-solved coefficient field rho-tilde.
pub fn chi2_step(
    ensemble: &mut ParticleEnsemble,
    model: &BayesModel,
    stepper: &LangevinStepper,
    rho_tilde: &RhoTimeline,
    dt: f64,
    policy: OutOfDomainPolicy,
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("dt must be positive".into()));
    }
    if !rho_tilde.covers(ensemble.t) {
        return Err(Error::InvalidInput(format!(
            "rho-tilde timeline does not cover t = {}",
            ensemble.t
        )));
    }
    let field = rho_tilde.nearest(ensemble.t);
    let dim = ensemble.dim;
    let seed = ensemble.seed;
    let step = ensemble.step_count;
    let psi = model.prior_potential();
    let phi = model.neg_log_likelihood();
    let result: Result<()> = ensemble
        .positions
        .par_chunks_mut(dim)
        .enumerate()
        .try_for_each(|(i, x)| {
            let rho = match field.interpolate(x) {
                Some(r) => r,
                None => match policy {
                    OutOfDomainPolicy::Halt => {
                        return Err(Error::OutOfDomain {
                            index: i,
                            position: x.to_vec(),
                        })
                    }
                    OutOfDomainPolicy::Reflect => {
                        field.reflect_into(x);
                        field.interpolate(x).unwrap_or(0.0)
                    }
                },
            };
            let mut rng = particle_rng(seed, i as u64, step);
            let mut gp = [0.0f64; MAX_PARTICLE_DIM];
            let mut gf = [0.0f64; MAX_PARTICLE_DIM];
            psi.gradient_into(x, &mut gp[..dim])?;
            phi.gradient_into(x, &mut gf[..dim])?;
            stepper.kernel(x, rho, &gp[..dim], &gf[..dim], dt, &mut rng, i)?;
            if matches!(policy, OutOfDomainPolicy::Reflect) && field.interpolate(x).is_none() {
                field.reflect_into(x);
            }
            Ok(())
        });
    result?;
    ensemble.t += dt;
    ensemble.step_count += 1;
    ensemble.record_trace();
    Ok(())
}

/// Moment and histogram summary of an ensemble.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleStats {
    pub t: f64,
    pub mean: Vec<f64>,
    /// Row-major unbiased covariance.
    pub cov: Vec<f64>,
    pub ess_proxy: f64,
    #[serde(skip)]
    pub histogram: GridDensity,
}

/// Unbiased moments, a normalized histogram on the caller's grid, and an
/// effective-sample-size proxy from the recorded coordinate-1 trace.
pub fn ensemble_stats(ensemble: &ParticleEnsemble, bins: &Grid) -> Result<EnsembleStats> {
    let n = ensemble.len();
    if n < 2 {
        return Err(Error::InsufficientSamples(format!(
            "need at least 2 particles, got {n}"
        )));
    }
    let m = ensemble.dim;
    if bins.dim() != m {
        return Err(Error::GridMismatch(
            "histogram grid dimension does not match the ensemble".into(),
        ));
    }
    let mut mean = vec![0.0; m];
    for i in 0..n {
        for (d, v) in ensemble.particle(i).iter().enumerate() {
            mean[d] += v;
        }
    }
    for v in mean.iter_mut() {
        *v /= n as f64;
    }
    let mut cov = vec![0.0; m * m];
    for i in 0..n {
        let p = ensemble.particle(i);
        for a in 0..m {
            for b in 0..m {
                cov[a * m + b] += (p[a] - mean[a]) * (p[b] - mean[b]);
            }
        }
    }
    for v in cov.iter_mut() {
        *v /= (n - 1) as f64;
    }
    let histogram = histogram_density(ensemble, bins)?;
    let ess_proxy = ess_from_trace(ensemble.trace0());
    Ok(EnsembleStats {
        t: ensemble.t,
        mean,
        cov,
        ess_proxy,
        histogram,
    })
}

/// Histogram as a normalized grid density: each node owns its trapezoid cell;
/// out-of-range samples are clamped into the end cells so the mass is exactly
/// one.
pub fn histogram_density(ensemble: &ParticleEnsemble, bins: &Grid) -> Result<GridDensity> {
    let n = ensemble.len();
    let mut counts = vec![0.0f64; bins.len()];
    let clamp_idx = |v: f64, min: f64, d: f64, count: usize| -> usize {
        (((v - min) / d).round().max(0.0) as usize).min(count - 1)
    };
    match bins {
        Grid::One { nx, xmin, .. } => {
            let dx = bins.dx();
            for i in 0..n {
                counts[clamp_idx(ensemble.particle(i)[0], *xmin, dx, *nx)] += 1.0;
            }
        }
        Grid::Two {
            nx, ny, xmin, ymin, ..
        } => {
            let dx = bins.dx();
            let dy = bins.dy();
            for i in 0..n {
                let p = ensemble.particle(i);
                let ix = clamp_idx(p[0], *xmin, dx, *nx);
                let iy = clamp_idx(p[1], *ymin, dy, *ny);
                counts[bins.index(ix, iy)] += 1.0;
            }
        }
    }
    let values: Vec<f64> = (0..bins.len())
        .map(|i| counts[i] / (n as f64 * bins.quad_weight(i)))
        .collect();
    GridDensity::new(bins.clone(), values)
}

/// Integrated-autocorrelation ESS estimate from a scalar trace; NaN when the
/// trace is too short.
pub fn ess_from_trace(trace: &[f64]) -> f64 {
    let t = trace.len();
    if t < 10 {
        return f64::NAN;
    }
    let mean = trace.iter().sum::<f64>() / t as f64;
    let var: f64 = trace.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t as f64;
    if var <= 0.0 {
        return t as f64;
    }
    let mut tau = 1.0;
    let max_lag = t / 3;
    for k in 1..max_lag {
        let mut c = 0.0;
        for i in 0..t - k {
            c += (trace[i] - mean) * (trace[i + k] - mean);
        }
        let rho = c / ((t - k) as f64 * var);
        if rho < 0.05 {
            break;
        }
        tau += 2.0 * rho;
    }
    t as f64 / tau
}

/// Integrated autocorrelation time of a scalar trace.
pub fn autocorrelation_time(trace: &[f64]) -> f64 {
    let t = trace.len();
    if t < 10 {
        return f64::NAN;
    }
    t as f64 / ess_from_trace(trace)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use nalgebra::DVector;

    use super::*;
    use crate::geometry::{quadratic_potential, DomainBox, MetricField, PotentialField};

    fn standard_gaussian_model(dim: usize) -> BayesModel {
        BayesModel::new(
            quadratic_potential(DMatrix::identity(dim, dim), DVector::zeros(dim)),
            PotentialField::zero(dim),
            MetricField::euclidean(dim),
            DomainBox::symmetric(dim, 10.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn seed_determinism_across_thread_counts() {
        let model = standard_gaussian_model(2);
        let stepper = LangevinStepper::new(&model).unwrap();
        let run = |threads: usize| -> Vec<f64> {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let mut e =
                    ParticleEnsemble::at_point(&[1.0, -0.5], 512, 99).unwrap();
                for _ in 0..50 {
                    langevin_step(&mut e, &model, &stepper, 1e-2).unwrap();
                }
                e.positions().to_vec()
            })
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
    }

    #[test]
    fn one_step_brownian_moments() {
        // Zero potential: after one step from the origin the ensemble is
        // N(0, 2 dt Ginv).
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let model = BayesModel::new(
            PotentialField::zero(2),
            PotentialField::zero(2),
            MetricField::constant(g).unwrap(),
            DomainBox::symmetric(2, 10.0).unwrap(),
        )
        .unwrap();
        let stepper = LangevinStepper::new(&model).unwrap();
        let n = 200_000;
        let dt = 0.1;
        let mut e = ParticleEnsemble::at_point(&[0.0, 0.0], n, 7).unwrap();
        langevin_step(&mut e, &model, &stepper, dt).unwrap();
        let bins = Grid::rect(11, 11, -3.0, 3.0, -3.0, 3.0).unwrap();
        let stats = ensemble_stats(&e, &bins).unwrap();
        // 3-sigma Monte Carlo bands.
        let tol_mean = 3.0 * (2.0 * dt / 2.0f64.min(0.5) / n as f64).sqrt();
        assert!(stats.mean[0].abs() < tol_mean && stats.mean[1].abs() < tol_mean);
        let want = [2.0 * dt / 2.0, 0.0, 0.0, 2.0 * dt / 0.5];
        for (got, expect) in stats.cov.iter().zip(want) {
            let sd = 3.0 * (2.0 * (0.4f64).max(expect * expect) / n as f64).sqrt();
            assert!((got - expect).abs() < sd, "cov {got} vs {expect}");
        }
    }

    #[test]
    fn chi2_step_with_unit_field_matches_langevin_bitwise() {
        let model = standard_gaussian_model(1);
        let stepper = LangevinStepper::new(&model).unwrap();
        let grid = Grid::line(101, -10.0, 10.0).unwrap();
        let ones = GridDensityField::new(grid, vec![1.0; 101]).unwrap();
        let timeline = RhoTimeline::new(vec![0.0], vec![ones]).unwrap();
        let mut a = ParticleEnsemble::at_point(&[0.7], 64, 42).unwrap();
        let mut b = a.clone();
        langevin_step(&mut a, &model, &stepper, 1e-2).unwrap();
        chi2_step(
            &mut b,
            &model,
            &stepper,
            &timeline,
            1e-2,
            OutOfDomainPolicy::Halt,
        )
        .unwrap();
        assert_eq!(a.positions(), b.positions());
    }

    #[test]
    fn chi2_step_zero_field_is_deterministic_likelihood_drift() {
        // rho = 0: no diffusion and no prior drift; only -grad(phi).
        let psi = quadratic_potential(DMatrix::identity(1, 1), DVector::zeros(1));
        let phi = PotentialField::analytic(
            1,
            Arc::new(|x: &[f64]| 2.0 * x[0]),
            Arc::new(|_: &[f64]| DVector::from_vec(vec![2.0])),
            Arc::new(|_: &[f64]| DMatrix::zeros(1, 1)),
        );
        let model = BayesModel::new(
            psi,
            phi,
            MetricField::euclidean(1),
            DomainBox::symmetric(1, 10.0).unwrap(),
        )
        .unwrap();
        let stepper = LangevinStepper::new(&model).unwrap();
        let grid = Grid::line(101, -10.0, 10.0).unwrap();
        let zeros = GridDensityField::new(grid, vec![0.0; 101]).unwrap();
        let timeline = RhoTimeline::new(vec![0.0], vec![zeros]).unwrap();
        let mut e = ParticleEnsemble::at_point(&[0.5], 8, 1).unwrap();
        let dt = 1e-2;
        chi2_step(
            &mut e,
            &model,
            &stepper,
            &timeline,
            dt,
            OutOfDomainPolicy::Halt,
        )
        .unwrap();
        for i in 0..e.len() {
            assert!((e.particle(i)[0] - (0.5 - 2.0 * dt)).abs() < 1e-15);
        }
    }

    #[test]
    fn out_of_domain_policies() {
        let model = standard_gaussian_model(1);
        let stepper = LangevinStepper::new(&model).unwrap();
        let grid = Grid::line(11, -1.0, 1.0).unwrap();
        let ones = GridDensityField::new(grid, vec![1.0; 11]).unwrap();
        let timeline = RhoTimeline::new(vec![0.0], vec![ones]).unwrap();
        let mut e = ParticleEnsemble::at_point(&[5.0], 4, 3).unwrap();
        let err = chi2_step(
            &mut e,
            &model,
            &stepper,
            &timeline,
            1e-3,
            OutOfDomainPolicy::Halt,
        );
        assert!(matches!(err, Err(Error::OutOfDomain { .. })));
        let mut e = ParticleEnsemble::at_point(&[5.0], 4, 3).unwrap();
        chi2_step(
            &mut e,
            &model,
            &stepper,
            &timeline,
            1e-3,
            OutOfDomainPolicy::Reflect,
        )
        .unwrap();
        for i in 0..e.len() {
            assert!(e.particle(i)[0] <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn two_particle_stats_by_hand() {
        let e = ParticleEnsemble::from_positions(1, vec![1.0, -1.0], 0).unwrap();
        let bins = Grid::line(5, -2.0, 2.0).unwrap();
        let s = ensemble_stats(&e, &bins).unwrap();
        assert!(s.mean[0].abs() < 1e-15);
        assert!((s.cov[0] - 2.0).abs() < 1e-15);
        assert!((s.histogram.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_particles_have_zero_covariance() {
        let e = ParticleEnsemble::at_point(&[0.3], 10, 0).unwrap();
        let bins = Grid::line(9, -1.0, 1.0).unwrap();
        let s = ensemble_stats(&e, &bins).unwrap();
        assert!(s.cov[0].abs() < 1e-30);
        let nonzero = s
            .histogram
            .values()
            .iter()
            .filter(|v| **v > 0.0)
            .count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn single_particle_is_insufficient() {
        let e = ParticleEnsemble::from_positions(1, vec![0.0], 0).unwrap();
        let bins = Grid::line(5, -1.0, 1.0).unwrap();
        assert!(matches!(
            ensemble_stats(&e, &bins),
            Err(Error::InsufficientSamples(_))
        ));
    }

    #[test]
    fn rng_self_test_unit_variance() {
        // 10^6 standard-normal draws through the particle streams.
        let n = 1_000_000usize;
        let var: f64 = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = particle_rng(2024, i as u64, 0);
                let x: f64 = StandardNormal.sample(&mut rng);
                x * x
            })
            .sum::<f64>()
            / n as f64;
        assert!((var - 1.0).abs() < 0.005, "variance {var}");
    }

    #[test]
    fn ess_detects_correlation() {
        // AR(1) with strong correlation has autocorrelation time ~ (1+a)/(1-a).
        let mut rng = particle_rng(5, 0, 0);
        let a = 0.95;
        let mut x = 0.0;
        let trace: Vec<f64> = (0..20000)
            .map(|_| {
                let xi: f64 = StandardNormal.sample(&mut rng);
                x = a * x + (1.0f64 - a * a).sqrt() * xi;
                x
            })
            .collect();
        let tau = autocorrelation_time(&trace);
        let expect = (1.0 + a) / (1.0 - a);
        assert!(
            tau > 0.5 * expect && tau < 1.7 * expect,
            "tau {tau} vs {expect}"
        );
    }
}
