//! Metric and potential fields with analytic or finite-difference derivatives.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type MatrixDerivFn = Arc<dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync>;

/// Default base step for central finite differences; the effective step at a
/// point is `max(base, base * |x|_inf)`.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

pub(crate) fn fd_step(base: f64, x: &[f64]) -> f64 {
    let norm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    base.max(base * norm)
}

/// Position-dependent symmetric positive-definite matrix field `G(x)`.
#[derive(Clone)]
pub struct MetricField {
    dim: usize,
    eval: MatrixFn,
    grad: Option<MatrixDerivFn>,
    fd_base: f64,
    constant: bool,
}

impl MetricField {
    /// Metric with analytic first derivatives: `grad(x)[k] = dG/dx_k`.
    pub fn analytic(dim: usize, eval: MatrixFn, grad: MatrixDerivFn) -> Self {
        MetricField {
            dim,
            eval,
            grad: Some(grad),
            fd_base: DEFAULT_FD_STEP,
            constant: false,
        }
    }

    /// Metric whose derivatives are taken by central finite differences.
    pub fn finite_difference(dim: usize, eval: MatrixFn) -> Self {
        MetricField {
            dim,
            eval,
            grad: None,
            fd_base: DEFAULT_FD_STEP,
            constant: false,
        }
    }

    /// Constant metric from an SPD matrix.
    pub fn constant(matrix: DMatrix<f64>) -> Result<Self> {
        let dim = matrix.nrows();
        if matrix.ncols() != dim {
            return Err(Error::InvalidInput("metric matrix must be square".into()));
        }
        if linalg::asymmetry(&matrix) > 1e-12 * linalg::op_norm(&matrix).max(1.0) {
            return Err(Error::InvalidInput("metric matrix must be symmetric".into()));
        }
        linalg::inv_sqrt_spd(&matrix, &vec![0.0; dim])?;
        let m = matrix.clone();
        let zeros: Vec<DMatrix<f64>> = (0..dim).map(|_| DMatrix::zeros(dim, dim)).collect();
        Ok(MetricField {
            dim,
            eval: Arc::new(move |_x| m.clone()),
            grad: Some(Arc::new(move |_x| zeros.clone())),
            fd_base: DEFAULT_FD_STEP,
            constant: true,
        })
    }

    /// Euclidean metric (identity matrix).
    pub fn euclidean(dim: usize) -> Self {
        Self::constant(DMatrix::identity(dim, dim)).expect("identity is SPD")
    }

    pub fn with_fd_step(mut self, base: f64) -> Self {
        self.fd_base = base;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn fd_base(&self) -> f64 {
        self.fd_base
    }

    /// Evaluate `G(x)`, validating symmetry.
    pub fn at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        debug_assert_eq!(x.len(), self.dim);
        let g = (self.eval)(x);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDomain(format!(
                "metric has non-finite entries at {x:?}"
            )));
        }
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        if linalg::asymmetry(&g) > 1e-12 * scale {
            return Err(Error::NumericDomain(format!(
                "metric not symmetric at {x:?} (asymmetry {:e})",
                linalg::asymmetry(&g)
            )));
        }
        Ok(g)
    }

    /// First derivatives `dG/dx_k` for every `k`, analytic or central FD.
    pub fn derivatives(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        if let Some(grad) = &self.grad {
            let d = grad(x);
            if d.len() != self.dim {
                return Err(Error::InvalidInput(format!(
                    "metric gradient closure returned {} matrices, expected {}",
                    d.len(),
                    self.dim
                )));
            }
            for m in &d {
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NumericDomain(format!(
                        "metric derivative non-finite at {x:?}"
                    )));
                }
            }
            return Ok(d);
        }
        let h = fd_step(self.fd_base, x);
        let mut out = Vec::with_capacity(self.dim);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        for k in 0..self.dim {
            xp[k] = x[k] + h;
            xm[k] = x[k] - h;
            let gp = self.at(&xp)?;
            let gm = self.at(&xm)?;
            out.push((gp - gm) / (2.0 * h));
            xp[k] = x[k];
            xm[k] = x[k];
        }
        Ok(out)
    }

    /// Scale the metric by a positive constant `a`, yielding `a G`.
    pub fn scaled(&self, a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::InvalidInput("metric scale must be positive".into()));
        }
        let eval = self.eval.clone();
        let grad = self.grad.clone();
        Ok(MetricField {
            dim: self.dim,
            eval: Arc::new(move |x| eval(x) * a),
            grad: grad.map(|g| {
                let g = g.clone();
                let f: MatrixDerivFn =
                    Arc::new(move |x: &[f64]| g(x).into_iter().map(|m| m * a).collect());
                f
            }),
            fd_base: self.fd_base,
            constant: self.constant,
        })
    }
}

pub type VectorInplaceFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Scalar field with gradient and Hessian access.
#[derive(Clone)]
pub struct PotentialField {
    dim: usize,
    value: ScalarFn,
    gradient: Option<VectorFn>,
    /// Allocation-free gradient used by particle kernels when present.
    gradient_inplace: Option<VectorInplaceFn>,
    hessian: Option<MatrixFn>,
    fd_base: f64,
}

impl PotentialField {
    pub fn analytic(dim: usize, value: ScalarFn, gradient: VectorFn, hessian: MatrixFn) -> Self {
        PotentialField {
            dim,
            value,
            gradient: Some(gradient),
            gradient_inplace: None,
            hessian: Some(hessian),
            fd_base: DEFAULT_FD_STEP,
        }
    }

    /// Attach an allocation-free gradient evaluator for hot particle loops.
    pub fn with_gradient_inplace(mut self, f: VectorInplaceFn) -> Self {
        self.gradient_inplace = Some(f);
        self
    }

    /// Value-only potential; derivatives fall back to central differences.
    pub fn from_value(dim: usize, value: ScalarFn) -> Self {
        PotentialField {
            dim,
            value,
            gradient: None,
            gradient_inplace: None,
            hessian: None,
            fd_base: DEFAULT_FD_STEP,
        }
    }

    /// Drop analytic derivative closures, forcing finite differences.
    pub fn as_finite_difference(&self) -> Self {
        PotentialField {
            dim: self.dim,
            value: self.value.clone(),
            gradient: None,
            gradient_inplace: None,
            hessian: None,
            fd_base: self.fd_base,
        }
    }

    pub fn zero(dim: usize) -> Self {
        PotentialField::analytic(
            dim,
            Arc::new(|_| 0.0),
            Arc::new(move |x: &[f64]| DVector::zeros(x.len())),
            Arc::new(move |x: &[f64]| DMatrix::zeros(x.len(), x.len())),
        )
        .with_gradient_inplace(Arc::new(|_x: &[f64], out: &mut [f64]| out.fill(0.0)))
    }

    pub fn with_fd_step(mut self, base: f64) -> Self {
        self.fd_base = base;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        let g = match &self.gradient {
            Some(g) => g(x),
            None => {
                let h = fd_step(self.fd_base, x);
                let mut out = DVector::zeros(self.dim);
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                for k in 0..self.dim {
                    xp[k] = x[k] + h;
                    xm[k] = x[k] - h;
                    out[k] = (self.value(&xp) - self.value(&xm)) / (2.0 * h);
                    xp[k] = x[k];
                    xm[k] = x[k];
                }
                out
            }
        };
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDomain(format!(
                "potential gradient non-finite at {x:?}"
            )));
        }
        Ok(g)
    }

    /// Gradient written into a caller buffer; avoids allocation when an
    /// in-place evaluator is attached, otherwise falls back to `gradient`
    /// or central differences.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(out.len(), self.dim);
        if let Some(g) = &self.gradient_inplace {
            g(x, out);
        } else if self.gradient.is_some() {
            let v = self.gradient(x)?;
            out.copy_from_slice(v.as_slice());
            return Ok(());
        } else {
            let h = fd_step(self.fd_base, x);
            let mut xp = [0.0; 16];
            let mut xm = [0.0; 16];
            if self.dim <= 16 {
                xp[..self.dim].copy_from_slice(x);
                xm[..self.dim].copy_from_slice(x);
                for k in 0..self.dim {
                    xp[k] = x[k] + h;
                    xm[k] = x[k] - h;
                    out[k] =
                        (self.value(&xp[..self.dim]) - self.value(&xm[..self.dim])) / (2.0 * h);
                    xp[k] = x[k];
                    xm[k] = x[k];
                }
            } else {
                let v = self.gradient(x)?;
                out.copy_from_slice(v.as_slice());
                return Ok(());
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDomain(format!(
                "potential gradient non-finite at {x:?}"
            )));
        }
        Ok(())
    }

    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let h = match &self.hessian {
            Some(h) => linalg::symmetrize(&h(x)),
            None => self.fd_hessian(x),
        };
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDomain(format!(
                "potential hessian non-finite at {x:?}"
            )));
        }
        Ok(h)
    }

    fn fd_hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        let h = fd_step(self.fd_base, x);
        let mut out = DMatrix::zeros(n, n);
        let f0 = self.value(x);
        let mut xt = x.to_vec();
        for i in 0..n {
            xt[i] = x[i] + h;
            let fpp = self.value(&xt);
            xt[i] = x[i] - h;
            let fmm = self.value(&xt);
            xt[i] = x[i];
            out[(i, i)] = (fpp - 2.0 * f0 + fmm) / (h * h);
            for j in (i + 1)..n {
                xt[i] = x[i] + h;
                xt[j] = x[j] + h;
                let a = self.value(&xt);
                xt[j] = x[j] - h;
                let b = self.value(&xt);
                xt[i] = x[i] - h;
                let c = self.value(&xt);
                xt[j] = x[j] + h;
                let d = self.value(&xt);
                xt[i] = x[i];
                xt[j] = x[j];
                let v = (a - b - d + c) / (4.0 * h * h);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// Pointwise sum of two potentials on the same space.
    pub fn add(&self, other: &PotentialField) -> Result<PotentialField> {
        if self.dim != other.dim {
            return Err(Error::InvalidInput(format!(
                "potential dims differ: {} vs {}",
                self.dim, other.dim
            )));
        }
        let (va, vb) = (self.value.clone(), other.value.clone());
        let value: ScalarFn = Arc::new(move |x: &[f64]| va(x) + vb(x));
        let gradient: Option<VectorFn> = match (&self.gradient, &other.gradient) {
            (Some(a), Some(b)) => {
                let (a, b) = (a.clone(), b.clone());
                Some(Arc::new(move |x: &[f64]| a(x) + b(x)))
            }
            _ => None,
        };
        let hessian: Option<MatrixFn> = match (&self.hessian, &other.hessian) {
            (Some(a), Some(b)) => {
                let (a, b) = (a.clone(), b.clone());
                Some(Arc::new(move |x: &[f64]| a(x) + b(x)))
            }
            _ => None,
        };
        let gradient_inplace: Option<VectorInplaceFn> =
            match (&self.gradient_inplace, &other.gradient_inplace) {
                (Some(a), Some(b)) => {
                    let (a, b) = (a.clone(), b.clone());
                    let dim = self.dim;
                    Some(Arc::new(move |x: &[f64], out: &mut [f64]| {
                        let mut tmp = [0.0; 16];
                        a(x, out);
                        b(x, &mut tmp[..dim]);
                        for k in 0..dim {
                            out[k] += tmp[k];
                        }
                    }))
                }
                _ => None,
            };
        Ok(PotentialField {
            dim: self.dim,
            value,
            gradient,
            gradient_inplace,
            hessian,
            fd_base: self.fd_base.min(other.fd_base),
        })
    }
}

/// Axis-aligned box domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidDomain(
                "box bounds must be nonempty and of equal length".into(),
            ));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !(b > a) || !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidDomain(format!(
                    "degenerate box: lo {lo:?}, hi {hi:?}"
                )));
            }
        }
        Ok(DomainBox { lo, hi })
    }

    /// Symmetric box `[-half, half]^dim`.
    pub fn symmetric(dim: usize, half: f64) -> Result<Self> {
        Self::new(vec![-half; dim], vec![half; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }
}

/// Point-sampling strategy over a [`DomainBox`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleStrategy {
    /// Tensor grid with `per_axis` nodes per axis, endpoints included.
    Grid { per_axis: usize },
    /// Uniform pseudo-random points from a seeded stream.
    Random { count: usize, seed: u64 },
}

impl SampleStrategy {
    /// Deterministically ordered sample points.
    pub fn points(&self, domain: &DomainBox) -> Vec<Vec<f64>> {
        let dim = domain.dim();
        match *self {
            SampleStrategy::Grid { per_axis } => {
                let per_axis = per_axis.max(2);
                let total = per_axis.pow(dim as u32);
                let mut pts = Vec::with_capacity(total);
                for flat in 0..total {
                    let mut rem = flat;
                    let mut x = vec![0.0; dim];
                    for d in (0..dim).rev() {
                        let i = rem % per_axis;
                        rem /= per_axis;
                        let t = i as f64 / (per_axis as f64 - 1.0);
                        x[d] = domain.lo[d] + t * (domain.hi[d] - domain.lo[d]);
                    }
                    pts.push(x);
                }
                pts
            }
            SampleStrategy::Random { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..count)
                    .map(|_| {
                        (0..dim)
                            .map(|d| rng.gen_range(domain.lo[d]..domain.hi[d]))
                            .collect()
                    })
                    .collect()
            }
        }
    }
}

/// Quadratic potential `x -> 0.5 <S (x - mean), x - mean>` with analytic
/// derivatives. `S` must be symmetric.
pub fn quadratic_potential(s: DMatrix<f64>, mean: DVector<f64>) -> PotentialField {
    let dim = s.nrows();
    let s1 = s.clone();
    let s2 = s.clone();
    let m1 = mean.clone();
    let m2 = mean.clone();
    let s_rows: Vec<f64> = (0..dim)
        .flat_map(|i| (0..dim).map(move |j| (i, j)))
        .map(|(i, j)| s[(i, j)])
        .collect();
    let mean_v: Vec<f64> = mean.iter().copied().collect();
    PotentialField::analytic(
        dim,
        Arc::new(move |x: &[f64]| {
            let d = DVector::from_column_slice(x) - &m1;
            0.5 * (&s1 * &d).dot(&d)
        }),
        Arc::new(move |x: &[f64]| &s2 * (DVector::from_column_slice(x) - &m2)),
        Arc::new(move |_x: &[f64]| s.clone()),
    )
    .with_gradient_inplace(Arc::new(move |x: &[f64], out: &mut [f64]| {
        for i in 0..dim {
            let mut acc = 0.0;
            for j in 0..dim {
                acc += s_rows[i * dim + j] * (x[j] - mean_v[j]);
            }
            out[i] = acc;
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_gradient_matches_analytic_quadratic() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let pot = quadratic_potential(s, DVector::zeros(2));
        let fd = pot.as_finite_difference();
        let x = [0.7, -1.2];
        let ga = pot.gradient(&x).unwrap();
        let gf = fd.gradient(&x).unwrap();
        for i in 0..2 {
            assert!((ga[i] - gf[i]).abs() < 1e-8);
        }
        let ha = pot.hessian(&x).unwrap();
        let hf = fd.hessian(&x).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((ha[(i, j)] - hf[(i, j)]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn constant_metric_has_zero_derivatives() {
        let g = MetricField::constant(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 5.0]))
            .unwrap();
        let d = g.derivatives(&[1.0, 2.0]).unwrap();
        assert!(d.iter().all(|m| m.iter().all(|v| *v == 0.0)));
        assert!(g.is_constant());
    }

    #[test]
    fn non_spd_constant_metric_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(MetricField::constant(m).is_err());
    }

    #[test]
    fn grid_sampler_hits_corners() {
        let b = DomainBox::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let pts = SampleStrategy::Grid { per_axis: 3 }.points(&b);
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[0], vec![0.0, -1.0]);
        assert_eq!(pts[8], vec![1.0, 1.0]);
    }

    #[test]
    fn random_sampler_is_deterministic() {
        let b = DomainBox::symmetric(2, 2.0).unwrap();
        let s = SampleStrategy::Random { count: 5, seed: 9 };
        assert_eq!(s.points(&b), s.points(&b));
        assert!(s.points(&b).iter().all(|p| b.contains(p)));
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(DomainBox::new(vec![0.0], vec![0.0]).is_err());
        assert!(DomainBox::new(vec![], vec![]).is_err());
    }
}
