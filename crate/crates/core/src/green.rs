//! Dirichlet Green kernels for `-d²/dx²` and Green potentials on grids.
//!
//! Potentials are composite trapezoid sums split at the evaluation node, with
//! the two endpoint nodes dropped: the kernel vanishes there, so a source that
//! is infinite at an endpoint contributes nothing from that node and the
//! interior sum carries the (integrable or not) singularity.
//!
//! Whether a part `f₊` or `f₋` has an infinite potential is decided by a
//! surrogate test on the four dyadic node shells `[1,2), [2,4), [4,8), [8,16)`
//! nearest each endpoint: with `S_k = Σ d(x_j) f±(x_j)` over shell `k`, the
//! part is declared divergent when each ratio `S_k / S_{k+1}` is at least
//! [`DIVERGENCE_RATIO`]. For `f ~ d^{-p}` the ratio is `2^{p-2}`, so the test
//! fires for `p` at or slightly below the critical exponent 2.

use std::io::{Read, Write};

use crate::domain::{fmt_real, parse_real, Grid, GridFn, Interval};
use crate::error::{Error, Result};

/// Shell-ratio threshold of the divergence surrogate.
pub const DIVERGENCE_RATIO: f64 = 0.9;

/// Default number of exhaustion levels for improper potentials.
pub const DEFAULT_EXHAUSTION_LEVELS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `min((x-a)(b-y), (y-a)(b-x)) / (b-a)` on `(a, b)`.
    ClosedForm(Interval),
    /// Kernel values at the nodes of a grid, row-major `n × n`.
    Tabulated { grid: Grid, matrix: Vec<f64> },
}

impl Kernel {
    pub fn closed_form(interval: Interval) -> Self {
        Kernel::ClosedForm(interval)
    }

    /// Tabulated kernel; checks shape, finiteness, nonnegativity and symmetry.
    pub fn tabulated(grid: Grid, matrix: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if matrix.len() != n * n {
            return Err(Error::GridMismatch(format!(
                "kernel matrix has {} entries, grid needs {}",
                matrix.len(),
                n * n
            )));
        }
        let scale = matrix.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..n {
                let v = matrix[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Domain(format!("kernel entry ({i},{j}) = {v}")));
                }
                if (v - matrix[j * n + i]).abs() > 1e-12 * scale {
                    return Err(Error::Domain(format!("kernel not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Kernel::Tabulated { grid, matrix })
    }

    /// The closed-form kernel sampled at the nodes of `grid`.
    pub fn tabulate(grid: &Grid) -> Self {
        let n = grid.len();
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                matrix[i * n + j] = closed_form_at(grid, i, j);
            }
        }
        Kernel::Tabulated { grid: *grid, matrix }
    }

    pub fn interval(&self) -> Interval {
        match self {
            Kernel::ClosedForm(iv) => *iv,
            Kernel::Tabulated { grid, .. } => grid.interval(),
        }
    }

    pub fn is_closed_form(&self) -> bool {
        matches!(self, Kernel::ClosedForm(_))
    }

    /// Check that `f` lives on a grid this kernel can integrate against.
    pub fn check_grid(&self, g: &Grid) -> Result<()> {
        match self {
            Kernel::ClosedForm(iv) => {
                if g.interval() != *iv {
                    return Err(Error::GridMismatch(format!(
                        "grid on {:?}, kernel on {:?}",
                        g.interval(),
                        iv
                    )));
                }
            }
            Kernel::Tabulated { grid, .. } => {
                if grid != g {
                    return Err(Error::GridMismatch(
                        "tabulated kernels only act on their own grid".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Kernel entry between nodes `i` and `j` of `grid` (already checked).
    fn at_nodes(&self, grid: &Grid, i: usize, j: usize) -> f64 {
        match self {
            Kernel::ClosedForm(_) => closed_form_at(grid, i, j),
            Kernel::Tabulated { grid, matrix } => matrix[i * grid.len() + j],
        }
    }

    /// Read a kernel table: header row of y-nodes, first column of x-nodes.
    pub fn read_csv<R: Read>(r: R) -> Result<Kernel> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?);
        }
        if rows.len() < 4 {
            return Err(Error::InvalidGrid("kernel table needs at least 3 rows".into()));
        }
        let ys = rows[0]
            .iter()
            .skip(1)
            .map(parse_real)
            .collect::<Result<Vec<_>>>()?;
        let n = ys.len();
        if rows.len() != n + 1 {
            return Err(Error::GridMismatch(format!(
                "{} y-nodes but {} data rows",
                n,
                rows.len() - 1
            )));
        }
        let grid = Grid::new(Interval::new(ys[0], ys[n - 1])?, n)?;
        let tol = 1e-9 * grid.spacing();
        let mut matrix = Vec::with_capacity(n * n);
        for (i, row) in rows[1..].iter().enumerate() {
            if row.len() != n + 1 {
                return Err(Error::Parse(format!("row {i} has {} cells", row.len())));
            }
            let x = parse_real(&row[0])?;
            if (x - grid.node(i)).abs() > tol || (ys[i] - grid.node(i)).abs() > tol {
                return Err(Error::InvalidGrid(format!("node {i} is not on a uniform grid")));
            }
            for cell in row.iter().skip(1) {
                matrix.push(parse_real(cell)?);
            }
        }
        Kernel::tabulated(grid, matrix)
    }

    /// Write a tabulated kernel in the format read by [`Kernel::read_csv`].
    pub fn write_csv<W: Write>(&self, grid: &Grid, w: W) -> Result<()> {
        self.check_grid(grid)?;
        let n = grid.len();
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["x".to_string()];
        header.extend((0..n).map(|j| fmt_real(grid.node(j))));
        out.write_record(&header)?;
        for i in 0..n {
            let mut row = vec![fmt_real(grid.node(i))];
            row.extend((0..n).map(|j| fmt_real(self.at_nodes(grid, i, j))));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Apply the discrete operator `f ↦ Σ_j w_j K(x_i, x_j) f_j` to a vector
    /// that is finite at interior nodes. Endpoint entries of `f` are ignored.
    pub fn apply(&self, grid: &Grid, f: &[f64]) -> Vec<f64> {
        match self {
            Kernel::ClosedForm(_) => apply_closed_form(grid, f),
            Kernel::Tabulated { .. } => {
                let n = grid.len();
                let dx = grid.spacing();
                let mut out = vec![0.0; n];
                for (i, o) in out.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for (j, &fj) in f.iter().enumerate().take(n - 1).skip(1) {
                        s += self.at_nodes(grid, i, j) * fj;
                    }
                    *o = dx * s;
                }
                out
            }
        }
    }
}

fn closed_form_at(grid: &Grid, i: usize, j: usize) -> f64 {
    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
    grid.from_left(lo) * grid.from_right(hi) / grid.interval().length()
}

/// `Δ/L [ (b - x_i) Σ_{j≤i} (x_j - a) f_j + (x_i - a) Σ_{j>i} (b - x_j) f_j ]`
/// over interior `j`, with both sums accumulated from their own endpoint.
fn apply_closed_form(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let dx = grid.spacing();
    let len = grid.interval().length();
    let mut left = vec![0.0; n];
    let mut acc = 0.0;
    for j in 1..n - 1 {
        acc += grid.from_left(j) * f[j];
        left[j] = acc;
    }
    let mut right = vec![0.0; n];
    let mut acc = 0.0;
    for j in (1..n - 1).rev() {
        right[j] = acc;
        acc += grid.from_right(j) * f[j];
    }
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = dx / len * (grid.from_right(i) * left[i] + grid.from_left(i) * right[i]);
    }
    out
}

/// Evaluate the kernel at a pair of points.
///
/// Tabulated kernels can only be evaluated at their grid nodes.
pub fn kernel_eval(k: &Kernel, x: f64, y: f64) -> Result<f64> {
    let iv = k.interval();
    if !iv.contains(x) || !iv.contains(y) {
        return Err(Error::Domain(format!("({x}, {y}) outside {iv:?}")));
    }
    match k {
        Kernel::ClosedForm(iv) => {
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            Ok((lo - iv.left()) * (iv.right() - hi) / iv.length())
        }
        Kernel::Tabulated { grid, matrix } => {
            let i = node_index(grid, x)?;
            let j = node_index(grid, y)?;
            Ok(matrix[i * grid.len() + j])
        }
    }
}

fn node_index(grid: &Grid, x: f64) -> Result<usize> {
    let i = grid.nearest(x);
    if (grid.node(i) - x).abs() > 1e-9 * grid.spacing() {
        return Err(Error::Domain(format!("{x} is not a node of the tabulated kernel")));
    }
    Ok(i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    WellDefined,
    /// Both `G f₊` and `G f₋` are infinite.
    Undefined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialResult {
    pub value: GridFn,
    pub status: Vec<NodeStatus>,
}

impl PotentialResult {
    pub fn is_well_defined(&self, i: usize) -> bool {
        self.status[i] == NodeStatus::WellDefined
    }

    pub fn undefined_nodes(&self) -> Vec<usize> {
        (0..self.status.len())
            .filter(|&i| !self.is_well_defined(i))
            .collect()
    }

    /// Assemble a result from node values where `NaN` marks an undefined node.
    pub fn from_values(value: GridFn) -> Self {
        let status = value
            .values()
            .iter()
            .map(|v| {
                if v.is_nan() {
                    NodeStatus::Undefined
                } else {
                    NodeStatus::WellDefined
                }
            })
            .collect();
        Self { value, status }
    }
}

/// Divergence verdict for one sign part of a source, from the node shells at
/// both endpoints. `part` maps a source value to its positive or negative part.
fn part_diverges(f: &GridFn, part: impl Fn(f64) -> f64) -> bool {
    let g = f.grid();
    let n = g.len();
    if g.interior().any(|i| part(f.get(i)) == f64::INFINITY) {
        return true;
    }
    // the four shells reach node 15 from each end
    if n < 33 {
        return false;
    }
    let shells = |node: &dyn Fn(usize) -> usize, dist: &dyn Fn(usize) -> f64| -> bool {
        let mut s = [0.0f64; 4];
        for (k, sk) in s.iter_mut().enumerate() {
            for j in (1usize << k)..(1usize << (k + 1)) {
                *sk += dist(node(j)) * part(f.get(node(j)));
            }
        }
        s.iter().all(|&v| v > 0.0) && s.windows(2).all(|w| w[0] / w[1] >= DIVERGENCE_RATIO)
    };
    shells(&|j| j, &|i| g.from_left(i)) || shells(&|j| n - 1 - j, &|i| g.from_right(i))
}

/// Green potential `G f` at every grid node, with per-node well-definedness.
///
/// Boundary nodes carry the value 0.
pub fn potential(k: &Kernel, f: &GridFn) -> Result<PotentialResult> {
    let grid = *f.grid();
    k.check_grid(&grid)?;
    let n = grid.len();
    let pos_inf = part_diverges(f, |v| v.max(0.0));
    let neg_inf = part_diverges(f, |v| (-v).max(0.0));
    let mut status = vec![NodeStatus::WellDefined; n];
    let values = if pos_inf || neg_inf {
        let fill = match (pos_inf, neg_inf) {
            (true, true) => f64::NAN,
            (true, false) => f64::INFINITY,
            _ => f64::NEG_INFINITY,
        };
        let mut v = vec![fill; n];
        v[0] = 0.0;
        v[n - 1] = 0.0;
        if pos_inf && neg_inf {
            for i in grid.interior() {
                status[i] = NodeStatus::Undefined;
            }
        }
        v
    } else {
        k.apply(&grid, f.values())
    };
    Ok(PotentialResult {
        value: GridFn::new(grid, values)?,
        status,
    })
}

/// Potentials over the exhaustion `Ω_m = (a + δ_m, b - δ_m)`,
/// `δ_m = (b - a) / 2^{m+2}`, `m = 0..levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImproperPotential {
    /// The last element of `sequence`.
    pub value: GridFn,
    pub sequence: Vec<GridFn>,
    pub deltas: Vec<f64>,
}

impl ImproperPotential {
    /// Smallest value over the last `tail` levels at node `i`, a finite
    /// stand-in for the lim inf.
    pub fn liminf_estimate(&self, i: usize, tail: usize) -> f64 {
        let start = self.sequence.len().saturating_sub(tail.max(1));
        self.sequence[start..]
            .iter()
            .map(|s| s.get(i))
            .fold(f64::INFINITY, f64::min)
    }
}

/// The exhaustion sequence `I_m(x) = ∫_{Ω_m} G^{Ω_m}(x,y) f(y) dy` at each node.
///
/// Each level uses the closed-form kernel of its subinterval and a trapezoid
/// rule on the mesh `{a_m} ∪ {nodes in Ω_m} ∪ {b_m}`; nodes outside `Ω_m`
/// get 0. Only closed-form kernels have subinterval kernels.
pub fn potential_improper(k: &Kernel, f: &GridFn, levels: usize) -> Result<ImproperPotential> {
    if levels < 2 {
        return Err(Error::Domain(format!("need at least 2 exhaustion levels, got {levels}")));
    }
    if !k.is_closed_form() {
        return Err(Error::Domain(
            "exhaustion needs subinterval kernels; use a closed-form kernel".into(),
        ));
    }
    let grid = *f.grid();
    k.check_grid(&grid)?;
    let n = grid.len();
    let len = grid.interval().length();
    let dx = grid.spacing();
    let mut sequence = Vec::with_capacity(levels);
    let mut deltas = Vec::with_capacity(levels);
    for m in 0..levels {
        let delta = len / 2f64.powi(m as i32 + 2);
        let inside: Vec<usize> = grid
            .interior()
            .filter(|&i| grid.from_left(i) > delta && grid.from_right(i) > delta)
            .collect();
        let mut out = vec![0.0; n];
        if let (Some(&lo), Some(&hi)) = (inside.first(), inside.last()) {
            if let Some(&bad) = inside.iter().find(|&&j| !f.get(j).is_finite()) {
                return Err(Error::NotIntegrable(format!(
                    "source is {} at node {bad} inside the exhaustion",
                    f.get(bad)
                )));
            }
            let lm = len - 2.0 * delta;
            let weight = |j: usize| -> f64 {
                let mut w = 0.0;
                w += if j == lo { 0.5 * (grid.from_left(j) - delta) } else { 0.5 * dx };
                w += if j == hi { 0.5 * (grid.from_right(j) - delta) } else { 0.5 * dx };
                w
            };
            let mut left = vec![0.0; n];
            let mut acc = 0.0;
            for &j in &inside {
                acc += weight(j) * (grid.from_left(j) - delta) * f.get(j);
                left[j] = acc;
            }
            let mut right = vec![0.0; n];
            let mut acc = 0.0;
            for &j in inside.iter().rev() {
                right[j] = acc;
                acc += weight(j) * (grid.from_right(j) - delta) * f.get(j);
            }
            for &i in &inside {
                out[i] = ((grid.from_right(i) - delta) * left[i]
                    + (grid.from_left(i) - delta) * right[i])
                    / lm;
            }
        } else if m + 1 == levels {
            return Err(Error::Domain("no grid node lies inside the exhaustion".into()));
        }
        sequence.push(GridFn::new(grid, out)?);
        deltas.push(delta);
    }
    Ok(ImproperPotential {
        value: sequence[levels - 1].clone(),
        sequence,
        deltas,
    })
}

/// `∫ G(x,z) G(z,y) V(z) dz` by the trapezoid rule on the grid of `V`
/// refined by the two points `x` and `y`, with `V` interpolated linearly
/// between nodes.
pub fn iterated_kernel(k: &Kernel, v: &GridFn, x: f64, y: f64) -> Result<f64> {
    let grid = *v.grid();
    k.check_grid(&grid)?;
    if let Kernel::Tabulated { .. } = k {
        // the refinement points must already be nodes
        node_index(&grid, x)?;
        node_index(&grid, y)?;
    }
    let iv = grid.interval();
    if !iv.contains(x) || !iv.contains(y) {
        return Err(Error::Domain(format!("({x}, {y}) outside {iv:?}")));
    }
    let mut zs = grid.nodes();
    zs.push(x);
    zs.push(y);
    zs.sort_by(|a, b| a.total_cmp(b));
    zs.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * iv.length());
    let v_at = |z: f64| -> f64 {
        let t = (z - iv.left()) / grid.spacing();
        let i = (t.floor().max(0.0) as usize).min(grid.len() - 2);
        let s = t - i as f64;
        if s <= 1e-12 {
            v.get(i)
        } else if s >= 1.0 - 1e-12 {
            v.get(i + 1)
        } else {
            (1.0 - s) * v.get(i) + s * v.get(i + 1)
        }
    };
    let kv = |a: f64, b: f64| kernel_eval(k, a, b);
    let mut integrand = Vec::with_capacity(zs.len());
    for &z in &zs {
        let w = kv(x, z)? * kv(z, y)?;
        if w == 0.0 {
            integrand.push(0.0);
            continue;
        }
        let vz = v_at(z);
        if !vz.is_finite() {
            return Err(Error::NotIntegrable(format!("V = {vz} at z = {z}")));
        }
        integrand.push(w * vz);
    }
    let mut total = 0.0;
    for i in 0..zs.len() - 1 {
        total += 0.5 * (zs[i + 1] - zs[i]) * (integrand[i] + integrand[i + 1]);
    }
    Ok(total)
}
