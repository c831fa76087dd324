//! # bayesflow
//!
//! A desk-scale numerical toolkit around three variational formulations of
//! the Bayesian update and their gradient flows:
//!
//! - Kullback-Leibler prior penalization, whose Wasserstein flow is a linear
//!   Fokker-Planck equation and whose diffusion is Langevin dynamics;
//! - chi-squared prior penalization, whose flow is a weighted porous-medium
//!   equation and whose diffusion has a density-dependent coefficient;
//! - the Dirichlet energy, whose L2 flow is governed by a weighted Laplacian
//!   and whose convexity is a Poincare inequality / spectral gap.
//!
//! The crate computes sharp geodesic-convexity constants of the KL functional
//! under a position-dependent metric (Christoffel symbols, curvature
//! matrices, `lambda_G`), solves the flow PDEs on 1d/2d grids, simulates the
//! associated diffusions with reproducible counter-based randomness, assembles
//! weighted Laplacians and their spectral gaps, and implements graph-based
//! Bayesian semi-supervised learning (probit, logistic, Ginzburg-Landau) with
//! fractional-Laplacian priors and a preconditioned Langevin chain.
//!
//! Modules map one-to-one onto those subsystems; [`catalog`] builds named
//! metric/potential/model families from plain parameter structs so a CLI or
//! config file can construct them.

pub mod catalog;
pub mod error;
pub mod flows;
pub mod functionals;
pub mod geometry;
pub mod graph;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod samplers;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
