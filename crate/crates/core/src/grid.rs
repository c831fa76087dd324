//! Uniform 1D/2D grids and nonnegative densities with trapezoid quadrature.
//!
//! Densities are stored as values with respect to Lebesgue measure at the
//! grid nodes. 2D values are row-major with the x index outermost:
//! `idx = ix * ny + iy`.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Uniform lattice over an axis-aligned interval or rectangle, endpoints
/// included.
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    One {
        nx: usize,
        xmin: f64,
        xmax: f64,
    },
    Two {
        nx: usize,
        ny: usize,
        xmin: f64,
        xmax: f64,
        ymin: f64,
        ymax: f64,
    },
}

impl Grid {
    pub fn line(nx: usize, xmin: f64, xmax: f64) -> Result<Self> {
        if nx < 2 || !(xmax > xmin) {
            return Err(Error::InvalidInput(format!(
                "1d grid needs nx >= 2 and xmax > xmin, got nx={nx}, [{xmin}, {xmax}]"
            )));
        }
        Ok(Grid::One { nx, xmin, xmax })
    }

    pub fn rect(nx: usize, ny: usize, xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self> {
        if nx < 2 || ny < 2 || !(xmax > xmin) || !(ymax > ymin) {
            return Err(Error::InvalidInput(
                "2d grid needs nx, ny >= 2 and positive extents".into(),
            ));
        }
        Ok(Grid::Two {
            nx,
            ny,
            xmin,
            xmax,
            ymin,
            ymax,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Grid::One { .. } => 1,
            Grid::Two { .. } => 2,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Grid::One { nx, .. } => *nx,
            Grid::Two { nx, ny, .. } => nx * ny,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Grid::One { nx, .. } => (*nx, 1),
            Grid::Two { nx, ny, .. } => (*nx, *ny),
        }
    }

    pub fn dx(&self) -> f64 {
        match self {
            Grid::One { nx, xmin, xmax } => (xmax - xmin) / (*nx as f64 - 1.0),
            Grid::Two { nx, xmin, xmax, .. } => (xmax - xmin) / (*nx as f64 - 1.0),
        }
    }

    pub fn dy(&self) -> f64 {
        match self {
            Grid::One { .. } => 0.0,
            Grid::Two { ny, ymin, ymax, .. } => (ymax - ymin) / (*ny as f64 - 1.0),
        }
    }

    pub fn x(&self, ix: usize) -> f64 {
        match self {
            Grid::One { xmin, .. } | Grid::Two { xmin, .. } => xmin + self.dx() * ix as f64,
        }
    }

    pub fn y(&self, iy: usize) -> f64 {
        match self {
            Grid::One { .. } => 0.0,
            Grid::Two { ymin, .. } => ymin + self.dy() * iy as f64,
        }
    }

    /// Node coordinates for a flat index.
    pub fn node(&self, idx: usize) -> Vec<f64> {
        match self {
            Grid::One { .. } => vec![self.x(idx)],
            Grid::Two { ny, .. } => {
                let ix = idx / ny;
                let iy = idx % ny;
                vec![self.x(ix), self.y(iy)]
            }
        }
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        match self {
            Grid::One { .. } => ix,
            Grid::Two { ny, .. } => ix * ny + iy,
        }
    }

    /// Trapezoid quadrature weight of a node (product rule in 2D).
    pub fn quad_weight(&self, idx: usize) -> f64 {
        fn axis_w(i: usize, n: usize, d: f64) -> f64 {
            if i == 0 || i == n - 1 {
                0.5 * d
            } else {
                d
            }
        }
        match self {
            Grid::One { nx, .. } => axis_w(idx, *nx, self.dx()),
            Grid::Two { nx, ny, .. } => {
                let ix = idx / ny;
                let iy = idx % ny;
                axis_w(ix, *nx, self.dx()) * axis_w(iy, *ny, self.dy())
            }
        }
    }

    pub fn quad_weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.quad_weight(i)).collect()
    }

    /// Trapezoid integral of nodal values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.len());
        (0..self.len()).map(|i| self.quad_weight(i) * values[i]).sum()
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "grids differ: {:?} vs {:?}",
                self, other
            )));
        }
        Ok(())
    }
}

/// Nonnegative density on a [`Grid`], stored against Lebesgue measure and
/// normalized to unit quadrature mass.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Grid,
    values: Vec<f64>,
}

impl GridDensity {
    /// Build a density from raw nonnegative values, normalizing the mass to 1.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "density values must be finite and nonnegative".into(),
            ));
        }
        let mut d = GridDensity { grid, values };
        d.normalize()?;
        Ok(d)
    }

    /// Sample a closure at the nodes and normalize.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values: Vec<f64> = (0..grid.len()).map(|i| f(&grid.node(i))).collect();
        Self::new(grid, values)
    }

    /// Raw values without normalization; used for intermediate states whose
    /// mass is meaningful (never serialized).
    pub(crate) fn raw(grid: Grid, values: Vec<f64>) -> Self {
        GridDensity { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn normalize(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::InvalidInput(format!(
                "density mass {m} is not positive and finite"
            )));
        }
        for v in &mut self.values {
            *v /= m;
        }
        Ok(())
    }

    /// Mean of the identity coordinate functions.
    pub fn mean(&self) -> Vec<f64> {
        let dim = self.grid.dim();
        let mut out = vec![0.0; dim];
        for i in 0..self.grid.len() {
            let w = self.grid.quad_weight(i) * self.values[i];
            for (d, xd) in self.grid.node(i).iter().enumerate() {
                out[d] += w * xd;
            }
        }
        out
    }

    /// Coordinate variances about the mean.
    pub fn variance(&self) -> Vec<f64> {
        let mean = self.mean();
        let dim = self.grid.dim();
        let mut out = vec![0.0; dim];
        for i in 0..self.grid.len() {
            let w = self.grid.quad_weight(i) * self.values[i];
            for (d, xd) in self.grid.node(i).iter().enumerate() {
                out[d] += w * (xd - mean[d]).powi(2);
            }
        }
        out
    }

    /// L1 distance between two densities on the same grid.
    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok((0..self.grid.len())
            .map(|i| self.grid.quad_weight(i) * (self.values[i] - other.values[i]).abs())
            .sum())
    }

    /// Cumulative distribution at the nodes of a 1D density (trapezoid).
    pub fn cdf_1d(&self) -> Result<Vec<f64>> {
        let Grid::One { nx, .. } = self.grid else {
            return Err(Error::UnsupportedDimension {
                got: self.grid.dim(),
                detail: "cdf requires a 1d grid".into(),
            });
        };
        let dx = self.grid.dx();
        let mut cdf = vec![0.0; nx];
        for i in 1..nx {
            cdf[i] = cdf[i - 1] + 0.5 * dx * (self.values[i - 1] + self.values[i]);
        }
        // Guard against roundoff so the final value is exactly 1.
        let total = cdf[nx - 1];
        if total > 0.0 {
            for c in &mut cdf {
                *c /= total;
            }
        }
        Ok(cdf)
    }

    /// Quantile function by piecewise-linear inversion of the trapezoid CDF.
    pub fn quantile_1d(&self, s: f64) -> Result<f64> {
        let cdf = self.cdf_1d()?;
        Ok(invert_cdf(&cdf, &self.grid, s))
    }

    /// Serialize in the columnar text format:
    /// `# grid <dim> <nx> [ny] <xmin> <xmax> [ymin ymax]` then one value per
    /// line in row-major order.
    pub fn write_text<W: Write>(&self, w: &mut W) -> Result<()> {
        match &self.grid {
            Grid::One { nx, xmin, xmax } => {
                writeln!(w, "# grid 1 {} {:.17e} {:.17e}", nx, xmin, xmax)?;
            }
            Grid::Two {
                nx,
                ny,
                xmin,
                xmax,
                ymin,
                ymax,
            } => {
                writeln!(
                    w,
                    "# grid 2 {} {} {:.17e} {:.17e} {:.17e} {:.17e}",
                    nx, ny, xmin, xmax, ymin, ymax
                )?;
            }
        }
        for v in &self.values {
            writeln!(w, "{:.17e}", v)?;
        }
        Ok(())
    }

    /// Read the text format back, validating mass within 1e-6 of unity.
    pub fn read_text<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let toks: Vec<&str> = header.trim().split_whitespace().collect();
        if toks.len() < 2 || toks[0] != "#" || toks[1] != "grid" {
            return Err(Error::Parse("expected '# grid ...' header".into()));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad float {s:?}: {e}")))
        };
        let parse_u = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|e| Error::Parse(format!("bad integer {s:?}: {e}")))
        };
        let dim = parse_u(toks[2])?;
        let grid = match dim {
            1 => {
                if toks.len() != 6 {
                    return Err(Error::Parse("1d header needs nx xmin xmax".into()));
                }
                Grid::line(parse_u(toks[3])?, parse_f(toks[4])?, parse_f(toks[5])?)?
            }
            2 => {
                if toks.len() != 9 {
                    return Err(Error::Parse(
                        "2d header needs nx ny xmin xmax ymin ymax".into(),
                    ));
                }
                Grid::rect(
                    parse_u(toks[3])?,
                    parse_u(toks[4])?,
                    parse_f(toks[5])?,
                    parse_f(toks[6])?,
                    parse_f(toks[7])?,
                    parse_f(toks[8])?,
                )?
            }
            d => {
                return Err(Error::UnsupportedDimension {
                    got: d,
                    detail: "grid files are 1d or 2d".into(),
                })
            }
        };
        let mut values = Vec::with_capacity(grid.len());
        for line in r.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            values.push(parse_f(t)?);
        }
        if values.len() != grid.len() {
            return Err(Error::Parse(format!(
                "expected {} values, found {}",
                grid.len(),
                values.len()
            )));
        }
        let d = GridDensity {
            grid,
            values,
        };
        let m = d.mass();
        if (m - 1.0).abs() > 1e-6 {
            return Err(Error::Parse(format!(
                "density mass {m} outside 1 +- 1e-6"
            )));
        }
        Ok(d)
    }
}

/// Invert a nodal CDF at level `s` by linear interpolation.
pub(crate) fn invert_cdf(cdf: &[f64], grid: &Grid, s: f64) -> f64 {
    let n = cdf.len();
    let s = s.clamp(0.0, 1.0);
    // Binary search for the first index with cdf >= s.
    let mut lo = 0usize;
    let mut hi = n - 1;
    if s <= cdf[0] {
        return grid.x(0);
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if cdf[mid] < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c0 = cdf[lo];
    let c1 = cdf[hi];
    let x0 = grid.x(lo);
    let x1 = grid.x(hi);
    if c1 > c0 {
        x0 + (x1 - x0) * (s - c0) / (c1 - c0)
    } else {
        0.5 * (x0 + x1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_1d(nx: usize, half: f64, mean: f64, var: f64) -> GridDensity {
        let g = Grid::line(nx, -half, half).unwrap();
        GridDensity::from_fn(g, |x| (-(x[0] - mean).powi(2) / (2.0 * var)).exp()).unwrap()
    }

    #[test]
    fn trapezoid_mass_is_one_after_normalize() {
        let d = gaussian_1d(801, 8.0, 0.0, 1.0);
        assert!((d.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_moments_recovered() {
        let d = gaussian_1d(2001, 10.0, 0.7, 1.3);
        assert!((d.mean()[0] - 0.7).abs() < 1e-6);
        assert!((d.variance()[0] - 1.3).abs() < 1e-5);
    }

    #[test]
    fn quantile_matches_median() {
        let d = gaussian_1d(2001, 10.0, 0.25, 1.0);
        let med = d.quantile_1d(0.5).unwrap();
        assert!((med - 0.25).abs() < 1e-4);
    }

    #[test]
    fn text_roundtrip_preserves_values() {
        let d = gaussian_1d(101, 6.0, 0.0, 2.0);
        let mut buf: Vec<u8> = Vec::new();
        d.write_text(&mut buf).unwrap();
        let back = GridDensity::read_text(&mut buf.as_slice()).unwrap();
        assert_eq!(d.grid(), back.grid());
        for (a, b) in d.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1e-16 * a.abs().max(1.0));
        }
    }

    #[test]
    fn reader_rejects_bad_mass() {
        let g = Grid::line(3, 0.0, 1.0).unwrap();
        let d = GridDensity {
            grid: g,
            values: vec![5.0, 5.0, 5.0],
        };
        let mut buf: Vec<u8> = Vec::new();
        d.write_text(&mut buf).unwrap();
        assert!(GridDensity::read_text(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn row_major_2d_indexing() {
        let g = Grid::rect(3, 4, 0.0, 1.0, 0.0, 3.0).unwrap();
        assert_eq!(g.index(2, 1), 9);
        let node = g.node(9);
        assert!((node[0] - 1.0).abs() < 1e-15);
        assert!((node[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quad_weights_sum_to_area() {
        let g = Grid::rect(5, 7, -1.0, 1.0, 0.0, 3.0).unwrap();
        let total: f64 = g.quad_weights().iter().sum();
        assert!((total - 6.0).abs() < 1e-12);
    }
}
