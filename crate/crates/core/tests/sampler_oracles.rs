//! Monte Carlo oracles for the diffusion samplers: exact discrete-chain
//! moments, stationarity without drift, preconditioner comparisons against
//! the AR(1) model, and agreement between the particle chi-squared process
//! and the porous-medium PDE.

use nalgebra::{DMatrix, DVector};

use bayesflow::catalog::{build_model, ModelSpec};
use bayesflow::flows::PorousMediumFlow;
use bayesflow::geometry::{quadratic_potential, DomainBox, MetricField, PotentialField};
use bayesflow::grid::{Grid, GridDensity};
use bayesflow::model::BayesModel;
use bayesflow::samplers::{
    autocorrelation_time, chi2_step, ensemble_stats, histogram_density, langevin_step,
    GridDensityField, LangevinStepper, OutOfDomainPolicy, ParticleEnsemble, RhoTimeline,
};

fn gaussian_target(sigma: DMatrix<f64>, metric: DMatrix<f64>) -> BayesModel {
    let dim = sigma.nrows();
    let sigma_inv = sigma.try_inverse().unwrap();
    BayesModel::new(
        quadratic_potential(sigma_inv, DVector::zeros(dim)),
        PotentialField::zero(dim),
        MetricField::constant(metric).unwrap(),
        DomainBox::symmetric(dim, 10.0).unwrap(),
    )
    .unwrap()
}

#[test]
fn ou_chain_variance_matches_discrete_oracle() {
    // Exact discrete-chain stationary variance is 1 / (1 - dt/2); the
    // tolerance band covers it plus 3-sigma Monte Carlo noise at N = 1e5.
    let model = gaussian_target(DMatrix::identity(1, 1), DMatrix::identity(1, 1));
    let stepper = LangevinStepper::new(&model).unwrap();
    let n = 100_000;
    let dt = 1e-3;
    let mut e = ParticleEnsemble::at_point(&[0.0], n, 11).unwrap();
    let steps = (10.0 / dt) as usize;
    for _ in 0..steps {
        langevin_step(&mut e, &model, &stepper, dt).unwrap();
    }
    let bins = Grid::line(41, -5.0, 5.0).unwrap();
    let s = ensemble_stats(&e, &bins).unwrap();
    assert!(
        s.cov[0] > 0.97 && s.cov[0] < 1.03,
        "variance {} (discrete target {})",
        s.cov[0],
        1.0 / (1.0 - dt / 2.0)
    );
}

#[test]
fn stationary_initialization_shows_no_histogram_drift() {
    // Start from inverse-CDF samples of the discrete stationary density and
    // verify the chi-squared histogram distance stays inside its initial
    // Monte Carlo band over t in [0, 5].
    let model = gaussian_target(DMatrix::identity(1, 1), DMatrix::identity(1, 1));
    let stepper = LangevinStepper::new(&model).unwrap();
    let grid = Grid::line(1601, -8.0, 8.0).unwrap();
    let target = model.posterior_density(&grid).unwrap();
    let n = 20_000;
    let dt = 1e-3;
    let mut e = ParticleEnsemble::from_inverse_cdf(&target, n, 17, false).unwrap();
    let bins = Grid::line(31, -4.0, 4.0).unwrap();
    let bin_probs: Vec<f64> = (0..bins.len())
        .map(|i| {
            // Integrate the target over each histogram cell.
            let w = bins.quad_weight(i);
            let x = bins.node(i)[0];
            w * (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
        })
        .collect();
    let chi2_dist = |ens: &ParticleEnsemble| -> f64 {
        let h = histogram_density(ens, &bins).unwrap();
        (0..bins.len())
            .map(|i| {
                let w = bins.quad_weight(i);
                let p_hat = h.values()[i] * w;
                let p = bin_probs[i];
                if p > 1e-12 {
                    (p_hat - p) * (p_hat - p) / p
                } else {
                    0.0
                }
            })
            .sum()
    };
    let d0 = chi2_dist(&e);
    let noise_floor = (bins.len() as f64 - 1.0) / n as f64;
    let band = 3.0 * d0.max(noise_floor);
    for _ in 0..5 {
        for _ in 0..((1.0 / dt) as usize) {
            langevin_step(&mut e, &model, &stepper, dt).unwrap();
        }
        let d = chi2_dist(&e);
        assert!(
            d <= band,
            "histogram drifted: chi2 {d} vs initial {d0} (band {band})"
        );
    }
}

#[test]
fn preconditioned_metric_decorrelates_slowest_coordinate() {
    // Gaussian target N(0, diag(1, eps)). Under the optimal metric
    // G* = Sigma^{-1} every coordinate relaxes at unit rate; under the
    // feasible rescaled Euclidean metric G_e = I/eps coordinate 1 relaxes at
    // rate eps. The AR(1) oracle gives autocorrelation times ~ 2/(rate dt),
    // so coordinate 1 decorrelates ~ 1/eps times faster under G*.
    let eps = 0.1;
    let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, eps]));
    let run = |metric: DMatrix<f64>| -> f64 {
        let model = gaussian_target(sigma.clone(), metric);
        let stepper = LangevinStepper::new(&model).unwrap();
        let dt = 5e-3;
        let mut e = ParticleEnsemble::at_point(&[1.0, 1.0], 4, 5).unwrap();
        for _ in 0..60_000 {
            langevin_step(&mut e, &model, &stepper, dt).unwrap();
        }
        autocorrelation_time(e.trace0())
    };
    let tau_star = run(sigma.clone().try_inverse().unwrap());
    let tau_euclid = run(DMatrix::from_diagonal_element(2, 2, 1.0 / eps));
    // AR(1) oracle: a = 1 - rate * dt; tau ~ (1+a)/(1-a).
    let oracle = |rate: f64, dt: f64| (2.0 - rate * dt) / (rate * dt);
    let expect_ratio = oracle(eps, 5e-3) / oracle(1.0, 5e-3);
    assert!(
        tau_euclid / tau_star >= 5.0,
        "tau under G_e {tau_euclid} vs G* {tau_star} (oracle ratio {expect_ratio})"
    );
}

#[test]
fn optimal_metric_has_fastest_mean_decay() {
    // Among feasible constant metrics, the ensemble-mean decay rate under
    // G* = Sigma^{-1} is the largest, consistent with unit convexity.
    let eps = 0.1;
    let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, eps]));
    let fit_rate = |metric: DMatrix<f64>| -> f64 {
        let model = gaussian_target(sigma.clone(), metric);
        let stepper = LangevinStepper::new(&model).unwrap();
        let dt = 2e-3;
        let n = 20_000;
        let mut e = ParticleEnsemble::at_point(&[2.0, 2.0], n, 23).unwrap();
        let mut ts = Vec::new();
        let mut logs = Vec::new();
        for step in 0..2000usize {
            langevin_step(&mut e, &model, &stepper, dt).unwrap();
            if step % 100 == 99 && e.t >= 1.0 {
                let bins = Grid::rect(5, 5, -4.0, 4.0, -4.0, 4.0).unwrap();
                let s = ensemble_stats(&e, &bins).unwrap();
                let norm = (s.mean[0] * s.mean[0] + s.mean[1] * s.mean[1]).sqrt();
                ts.push(e.t);
                logs.push(norm.max(1e-12).ln());
            }
        }
        // Least-squares slope.
        let n = ts.len() as f64;
        let sx: f64 = ts.iter().sum();
        let sy: f64 = logs.iter().sum();
        let sxx: f64 = ts.iter().map(|v| v * v).sum();
        let sxy: f64 = ts.iter().zip(&logs).map(|(a, b)| a * b).sum();
        -(n * sxy - sx * sy) / (n * sxx - sx * sx)
    };
    let rate_star = fit_rate(sigma.clone().try_inverse().unwrap());
    let rate_euclid = fit_rate(DMatrix::from_diagonal_element(2, 2, 1.0 / eps));
    let rate_scaled = fit_rate(sigma.clone().try_inverse().unwrap() * 2.0);
    assert!(
        rate_star > rate_euclid + 0.3 && rate_star > rate_scaled + 0.3,
        "rates: G* {rate_star}, G_e {rate_euclid}, 2G* {rate_scaled}"
    );
    assert!((rate_star - 1.0).abs() < 0.15, "G* rate {rate_star}");
}

#[test]
fn chi2_particles_track_porous_medium_density() {
    // Flat-prior porous-medium model: the particle histogram at t = 0.5 must
    // match the PDE density within 0.05 in L1 at N = 1e5.
    let spec = {
        let mut s = ModelSpec::named("flat");
        s.half_width = Some(3.0);
        s
    };
    let model = build_model(&spec).unwrap();
    let grid = Grid::line(601, -3.0, 3.0).unwrap();
    let init = GridDensity::from_fn(grid.clone(), |x| {
        (1.0 - (x[0] / 1.2) * (x[0] / 1.2)).max(0.0)
    })
    .unwrap();

    // Solve the PDE, keeping snapshots for the particle drift/diffusion field.
    let pm = PorousMediumFlow::new(&model, &grid).unwrap();
    let mut state = pm.state_from_density(&init).unwrap();
    let mut times = vec![0.0];
    let mut snaps = vec![GridDensityField::new(grid.clone(), state.values().to_vec()).unwrap()];
    let t_end = 0.5;
    let snap_every = 5e-3;
    let mut next_snap = snap_every;
    while state.t < t_end {
        let cap = (next_snap - state.t).max(1e-9);
        pm.step(&mut state, cap).unwrap();
        if state.t + 1e-12 >= next_snap {
            times.push(state.t);
            snaps.push(GridDensityField::new(grid.clone(), state.values().to_vec()).unwrap());
            next_snap += snap_every;
        }
    }
    let timeline = RhoTimeline::new(times, snaps).unwrap();
    let pde_density = pm.density(&state).unwrap();

    // Drive particles with the pre-solved field.
    let stepper = LangevinStepper::new(&model).unwrap();
    let n = 100_000;
    let dt = 1e-3;
    let mut e = ParticleEnsemble::from_inverse_cdf(&init, n, 31, true).unwrap();
    while e.t < t_end - 1e-12 {
        chi2_step(
            &mut e,
            &model,
            &stepper,
            &timeline,
            dt,
            OutOfDomainPolicy::Reflect,
        )
        .unwrap();
    }
    let bins = Grid::line(61, -3.0, 3.0).unwrap();
    let hist = histogram_density(&e, &bins).unwrap();
    // Project the PDE density onto the same bins for the comparison.
    let pde_binned = GridDensity::from_fn(bins.clone(), |x| {
        // Linear interpolation of the PDE solution.
        let field = GridDensityField::new(grid.clone(), pde_density.values().to_vec()).unwrap();
        field.interpolate(x).unwrap_or(0.0)
    })
    .unwrap();
    let l1 = hist.l1_distance(&pde_binned).unwrap();
    assert!(l1 <= 0.05, "particle/PDE mismatch: L1 {l1}");
}
