//! Intervals, uniform grids, grid functions and the split trapezoid rule.
//!
//! Grid functions hold extended reals: `f64::INFINITY` and
//! `f64::NEG_INFINITY` are legitimate values (a singular potential at an
//! endpoint, say). Arithmetic that would form `inf - inf` goes through
//! [`ext_add`] / [`ext_sub`], which raise [`Error::Indeterminate`] instead of
//! producing a quiet NaN.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Default node count used by the acceptance runs and the CLI.
pub const DEFAULT_NODES: usize = 2001;

/// An open interval `(left, right)` with finite endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    left: f64,
    right: f64,
}

impl Interval {
    pub fn new(left: f64, right: f64) -> Result<Self> {
        if !(left.is_finite() && right.is_finite() && left < right) {
            return Err(Error::InvalidInterval { left, right });
        }
        Ok(Self { left, right })
    }

    /// The unit interval `(0, 1)`.
    pub fn unit() -> Self {
        Self {
            left: 0.0,
            right: 1.0,
        }
    }

    /// The symmetric interval `(-1, 1)`.
    pub fn symmetric() -> Self {
        Self {
            left: -1.0,
            right: 1.0,
        }
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn length(&self) -> f64 {
        self.right - self.left
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.left + self.right)
    }

    /// Closed-interval membership.
    pub fn contains(&self, x: f64) -> bool {
        x >= self.left && x <= self.right
    }

    /// Distance from `x` to the nearer endpoint.
    pub fn distance_to_boundary(&self, x: f64) -> f64 {
        (x - self.left).min(self.right - x)
    }
}

/// Uniform partition of an interval with `n >= 3` nodes, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    interval: Interval,
    n: usize,
}

impl Grid {
    pub fn new(interval: Interval, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 nodes, got {n}")));
        }
        Ok(Self { interval, n })
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.interval.length() / (self.n - 1) as f64
    }

    /// Coordinate of node `i`. The last node is the right endpoint exactly.
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.interval.right
        } else {
            self.interval.left + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Distance of node `i` from the left endpoint, computed without cancellation.
    pub fn from_left(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    /// Distance of node `i` from the right endpoint, computed without cancellation.
    pub fn from_right(&self, i: usize) -> f64 {
        (self.n - 1 - i) as f64 * self.spacing()
    }

    /// Indices of the interior nodes.
    pub fn interior(&self) -> std::ops::Range<usize> {
        1..self.n - 1
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        i == 0 || i + 1 == self.n
    }

    /// The grid obtained by halving the spacing.
    pub fn refined(&self) -> Grid {
        Grid {
            interval: self.interval,
            n: 2 * self.n - 1,
        }
    }

    /// Index of the node nearest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let t = ((x - self.interval.left) / self.spacing()).round();
        (t.max(0.0) as usize).min(self.n - 1)
    }
}

/// Build a uniform grid on `interval` with `n` nodes.
pub fn make_grid(interval: Interval, n: usize) -> Result<Grid> {
    Grid::new(interval, n)
}

/// Extended-real values attached to the nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFn {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// True when every entry is a finite real.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// True when every interior entry is a finite real.
    pub fn is_finite_inside(&self) -> bool {
        self.grid.interior().all(|i| self.values[i].is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFn {
        GridFn {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Node-wise combination of two functions on the same grid.
    pub fn zip_with(&self, other: &GridFn, f: impl Fn(f64, f64) -> f64) -> Result<GridFn> {
        self.check_same_grid(other)?;
        Ok(GridFn {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_same_grid(&self, other: &GridFn) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "grids differ: {:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    /// Largest absolute value over interior nodes.
    pub fn sup_norm_inside(&self) -> f64 {
        self.grid
            .interior()
            .map(|i| self.values[i].abs())
            .fold(0.0, f64::max)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Write as CSV with columns `x,value`; infinities are written `inf` / `-inf`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "value"])?;
        for (i, &v) in self.values.iter().enumerate() {
            out.write_record([fmt_real(self.grid.node(i)), fmt_real(v)])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Read an `x,value` CSV. The grid is inferred from the first and last
    /// abscissae and the row count, and the abscissae must be uniform.
    pub fn read_csv<R: Read>(r: R) -> Result<GridFn> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::Parse(format!("expected 2 columns, got {}", rec.len())));
            }
            xs.push(parse_real(&rec[0])?);
            vs.push(parse_real(&rec[1])?);
        }
        if xs.len() < 3 {
            return Err(Error::InvalidGrid(format!("only {} rows", xs.len())));
        }
        let grid = Grid::new(Interval::new(xs[0], xs[xs.len() - 1])?, xs.len())?;
        let tol = 1e-9 * grid.spacing();
        for (i, &x) in xs.iter().enumerate() {
            if (x - grid.node(i)).abs() > tol {
                return Err(Error::InvalidGrid(format!(
                    "abscissa {x} at row {i} is not on a uniform grid"
                )));
            }
        }
        GridFn::new(grid, vs)
    }

    /// Read an `x,value` CSV and check that it lives on `grid`.
    pub fn read_csv_on<R: Read>(r: R, grid: &Grid) -> Result<GridFn> {
        let f = Self::read_csv(r)?;
        let g = f.grid();
        let tol = 1e-9 * grid.spacing();
        if g.len() != grid.len()
            || (g.interval().left() - grid.interval().left()).abs() > tol
            || (g.interval().right() - grid.interval().right()).abs() > tol
        {
            return Err(Error::GridMismatch(format!(
                "file grid {:?} does not match {:?}",
                g, grid
            )));
        }
        GridFn::new(*grid, f.into_values())
    }
}

/// Sample a pointwise expression on the grid nodes.
pub fn sample(expr: impl Fn(f64) -> f64, grid: &Grid) -> GridFn {
    GridFn {
        grid: *grid,
        values: grid.nodes().into_iter().map(expr).collect(),
    }
}

/// Composite trapezoid rule for the integral of `f` over the grid's interval,
/// summed separately on `[left, x_split]` and `[x_split, right]`.
///
/// A slope discontinuity at the split node therefore costs no accuracy.
pub fn quad_trapezoid_split(f: &GridFn, split: usize) -> Result<f64> {
    let n = f.len();
    if split >= n {
        return Err(Error::Domain(format!("split node {split} outside 0..{n}")));
    }
    if let Some(i) = f.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NotIntegrable(format!(
            "value {} at node {i}",
            f.values[i]
        )));
    }
    let dx = f.grid.spacing();
    let panel_sum = |lo: usize, hi: usize| -> f64 {
        if lo == hi {
            return 0.0;
        }
        let inner: f64 = f.values[lo + 1..hi].iter().sum();
        dx * (0.5 * (f.values[lo] + f.values[hi]) + inner)
    };
    Ok(panel_sum(0, split) + panel_sum(split, n - 1))
}

/// Central second difference `(u[i+1] - 2u[i] + u[i-1]) / dx^2` at interior
/// nodes; zero at the two boundary nodes.
///
/// This is the one discrete Laplacian used across the crate.
pub fn second_difference(u: &GridFn) -> GridFn {
    let n = u.len();
    let inv = 1.0 / (u.grid.spacing() * u.grid.spacing());
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (u.values[i + 1] - 2.0 * u.values[i] + u.values[i - 1]) * inv;
    }
    GridFn {
        grid: u.grid,
        values: out,
    }
}

/// Central first difference at interior nodes; zero at the boundary nodes.
pub fn first_difference(u: &GridFn) -> GridFn {
    let n = u.len();
    let inv = 0.5 / u.grid.spacing();
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (u.values[i + 1] - u.values[i - 1]) * inv;
    }
    GridFn {
        grid: u.grid,
        values: out,
    }
}

/// Extended-real addition; `inf + (-inf)` is an error.
pub fn ext_add(a: f64, b: f64) -> Result<f64> {
    if a.is_infinite() && b.is_infinite() && a.signum() != b.signum() {
        return Err(Error::Indeterminate(format!("{a} + {b}")));
    }
    if a.is_nan() || b.is_nan() {
        return Err(Error::Indeterminate("NaN operand".into()));
    }
    Ok(a + b)
}

/// Extended-real subtraction; `inf - inf` is an error.
pub fn ext_sub(a: f64, b: f64) -> Result<f64> {
    ext_add(a, -b)
}

/// Format a real with 17 significant digits; infinities as `inf` / `-inf`.
pub fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.16e}")
    }
}

/// Parse a real, accepting `inf`, `+inf`, `-inf` and `nan`.
pub fn parse_real(s: &str) -> Result<f64> {
    let t = s.trim();
    let t = t.strip_prefix('+').unwrap_or(t);
    t.parse::<f64>()
        .map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_nodes() {
        let g = make_grid(Interval::unit(), 3).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 0.5, 1.0]);
        let g = make_grid(Interval::symmetric(), 5).unwrap();
        assert_eq!(g.nodes(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(matches!(
            make_grid(Interval::unit(), 2),
            Err(Error::InvalidGrid(_))
        ));
    }

    #[test]
    fn bad_interval() {
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn trapezoid_constant_and_linear() {
        let g = make_grid(Interval::unit(), 11).unwrap();
        let one = GridFn::constant(g, 1.0);
        for s in [0, 3, 10] {
            assert!((quad_trapezoid_split(&one, s).unwrap() - 1.0).abs() < 1e-15);
        }
        let lin = sample(|x| x, &make_grid(Interval::unit(), 5).unwrap());
        assert!((quad_trapezoid_split(&lin, 2).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_kink_at_split_is_exact() {
        // |x - 0.3| on (0,1), split exactly at the kink
        let g = make_grid(Interval::unit(), 11).unwrap();
        let f = sample(|x| (x - 0.3).abs(), &g);
        let exact = 0.3 * 0.3 / 2.0 + 0.7 * 0.7 / 2.0;
        let got = quad_trapezoid_split(&f, 3).unwrap();
        assert!((got - exact).abs() <= 10.0 * f64::EPSILON * 11.0 * exact);
        // a kink between nodes is only resolved to O(dx²)
        let f = sample(|x| (x - 0.35).abs(), &g);
        let exact = 0.35 * 0.35 / 2.0 + 0.65 * 0.65 / 2.0;
        let off = quad_trapezoid_split(&f, 3).unwrap();
        assert!((off - exact).abs() > 1e-4);
    }

    #[test]
    fn trapezoid_rejects_infinite() {
        let g = make_grid(Interval::unit(), 5).unwrap();
        let mut f = GridFn::constant(g, 1.0);
        f.values_mut()[0] = f64::INFINITY;
        assert!(matches!(
            quad_trapezoid_split(&f, 2),
            Err(Error::NotIntegrable(_))
        ));
    }

    #[test]
    fn sample_examples() {
        let g = make_grid(Interval::unit(), 5).unwrap();
        let h = sample(|x| x * (1.0 - x) / 2.0, &g);
        let want = [0.0, 0.09375, 0.125, 0.09375, 0.0];
        for (a, b) in h.values().iter().zip(want) {
            assert!((a - b).abs() < 1e-16);
        }
        let inv_d = sample(|x| 1.0 / x.min(1.0 - x), &g);
        assert_eq!(inv_d.get(0), f64::INFINITY);
        assert_eq!(inv_d.get(4), f64::INFINITY);
        assert!(inv_d.is_finite_inside());
        let osc = sample(|x| (std::f64::consts::PI / x.sqrt()).sin(), &g);
        for i in g.interior() {
            assert!(osc.get(i).abs() <= 1.0);
        }
    }

    #[test]
    fn extended_arithmetic() {
        assert_eq!(ext_add(f64::INFINITY, 1.0).unwrap(), f64::INFINITY);
        assert!(matches!(
            ext_sub(f64::INFINITY, f64::INFINITY),
            Err(Error::Indeterminate(_))
        ));
        assert!(ext_add(f64::NEG_INFINITY, f64::INFINITY).is_err());
    }

    #[test]
    fn csv_round_trip_keeps_infinities() {
        let g = make_grid(Interval::unit(), 5).unwrap();
        let f = sample(|x| 1.0 / x - 1.0 / (1.0 - x), &g);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,value\n"));
        assert!(text.contains(",inf\n"));
        assert!(text.contains(",-inf\n"));
        let back = GridFn::read_csv(&buf[..]).unwrap();
        assert_eq!(back, f);
        assert!(GridFn::read_csv_on(&buf[..], &make_grid(Interval::unit(), 7).unwrap()).is_err());
    }

    #[test]
    fn second_difference_exact_on_quadratics() {
        let g = make_grid(Interval::unit(), 21).unwrap();
        let u = sample(|x| x * (1.0 - x) / 2.0, &g);
        let d2 = second_difference(&u);
        for i in g.interior() {
            assert!((d2.get(i) + 1.0).abs() < 1e-11);
        }
    }
}
