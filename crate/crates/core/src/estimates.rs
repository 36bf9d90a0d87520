//! Pointwise bounds for positive solutions of `-u'' + V u^q = f` in terms of
//! `h = G f` and the potential `G(h^q V)`.
//!
//! Every regime uses the single form `bound = h·φ(-G(h^q V)/h)`: a lower
//! bound for `q > 0`, an upper bound for `q < 0`. For `q > 1` and `q < 0` a
//! positive solution can only exist where the bracket
//! `1 + (q-1)·G(h^q V)/h` is positive.

use std::io::Write;

use serde::Serialize;

use crate::domain::{fmt_real, second_difference, GridFn};
use crate::error::{Error, Result};
use crate::fixedpoint::{sharp_constants, MonotoneRegime};
use crate::green::{potential, Kernel, NodeStatus, PotentialResult};
use crate::phi::PhiFamily;

/// Version tag carried by every JSON summary.
pub const SCHEMA: &str = "greenbound/1";

/// Relative slack in the strict bracket test.
pub const BRACKET_SLACK: f64 = 1e-12;

/// Default `u_threshold`, relative to `max u`.
pub const DEFAULT_U_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `q < 0`
    Negative,
    /// `0 < q < 1`
    Sublinear,
    /// `q = 1`
    Linear,
    /// `q > 1`
    Superlinear,
}

impl Regime {
    pub fn of(q: f64) -> Result<Regime> {
        if q == 0.0 || !q.is_finite() {
            return Err(Error::Domain(format!("exponent q = {q} must be finite and nonzero")));
        }
        Ok(if q < 0.0 {
            Regime::Negative
        } else if q < 1.0 {
            Regime::Sublinear
        } else if q == 1.0 {
            Regime::Linear
        } else {
            Regime::Superlinear
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regime::Negative => "negative",
            Regime::Sublinear => "sublinear",
            Regime::Linear => "linear",
            Regime::Superlinear => "superlinear",
        }
    }

    /// Whether the bracket must be positive for a solution to exist.
    pub fn has_necessary_condition(&self) -> bool {
        matches!(self, Regime::Negative | Regime::Superlinear)
    }

    /// True when the bound is an upper bound.
    pub fn is_upper(&self) -> bool {
        matches!(self, Regime::Negative)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub q: f64,
    pub v: GridFn,
    pub f: GridFn,
    pub kernel: Kernel,
    /// `χ_u = [u > u_threshold · max u]`.
    pub u_threshold: f64,
}

impl Problem {
    pub fn new(q: f64, v: GridFn, f: GridFn, kernel: Kernel) -> Result<Problem> {
        Regime::of(q)?;
        v.check_same_grid(&f)?;
        kernel.check_grid(v.grid())?;
        Ok(Problem {
            q,
            v,
            f,
            kernel,
            u_threshold: DEFAULT_U_THRESHOLD,
        })
    }

    pub fn regime(&self) -> Regime {
        Regime::of(self.q).expect("checked at construction")
    }

    pub fn grid(&self) -> &crate::domain::Grid {
        self.v.grid()
    }

    /// `h = G f`, required finite and positive at interior nodes.
    pub fn h(&self) -> Result<GridFn> {
        let g = self.grid();
        if let Some(i) = g.interior().find(|&i| !(self.f.get(i) >= 0.0)) {
            return Err(Error::Domain(format!(
                "source f must be nonnegative; f = {} at node {i}",
                self.f.get(i)
            )));
        }
        let h = potential(&self.kernel, &self.f)?.value;
        if let Some(node) = g.interior().find(|&i| !(h.get(i) > 0.0 && h.get(i).is_finite())) {
            return Err(Error::DegenerateSource { node });
        }
        Ok(h)
    }
}

/// Bound, bracket and necessity flag at one point from `h > 0` and
/// `G = G(h^q V)` (possibly infinite; NaN means undefined).
pub fn unified_bound(q: f64, h: f64, g: f64) -> Result<(f64, f64, bool)> {
    let regime = Regime::of(q)?;
    if g.is_nan() {
        return Ok((f64::NAN, f64::NAN, false));
    }
    let r = g / h;
    let bracket = if q == 1.0 { 1.0 } else { 1.0 + (q - 1.0) * r };
    let necessary = !regime.has_necessary_condition() || bracket > BRACKET_SLACK;
    if !necessary {
        return Ok((f64::NAN, bracket, false));
    }
    let fam = PhiFamily::new(q)?;
    let bound = h * fam.eval(-r)?;
    Ok((bound, bracket, true))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub regime: Regime,
    pub q: f64,
    pub h: GridFn,
    pub ghqv: PotentialResult,
    /// Lower bound for `q > 0`, upper bound for `q < 0`; NaN where no bound
    /// is emitted (undefined potential or failed necessary condition).
    pub bound: GridFn,
    pub bracket: GridFn,
    pub necessary_ok: Vec<bool>,
    pub sufficient_ok: Option<Vec<bool>>,
    /// Two-sided envelope `(lower, upper)` for solutions when the sufficient
    /// condition holds.
    pub envelope: Option<(GridFn, GridFn)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSummary {
    pub schema: &'static str,
    pub regime: Regime,
    pub q: f64,
    pub min_bracket: Option<f64>,
    pub violated_nodes: Vec<usize>,
    pub undefined_nodes: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub insufficient_nodes: Option<Vec<usize>>,
}

impl BoundReport {
    /// Interior nodes where the necessary condition fails at a well-defined
    /// potential.
    pub fn violated_nodes(&self) -> Vec<usize> {
        self.h
            .grid()
            .interior()
            .filter(|&i| self.ghqv.is_well_defined(i) && !self.necessary_ok[i])
            .collect()
    }

    pub fn undefined_nodes(&self) -> Vec<usize> {
        self.ghqv.undefined_nodes()
    }

    pub fn all_necessary_ok(&self) -> bool {
        self.h.grid().interior().all(|i| self.necessary_ok[i])
    }

    pub fn summary(&self) -> BoundSummary {
        let min_bracket = self
            .h
            .grid()
            .interior()
            .map(|i| self.bracket.get(i))
            .filter(|b| !b.is_nan())
            .fold(None, |m: Option<f64>, b| Some(m.map_or(b, |m| m.min(b))))
            .filter(|b| b.is_finite());
        BoundSummary {
            schema: SCHEMA,
            regime: self.regime,
            q: self.q,
            min_bracket,
            violated_nodes: self.violated_nodes(),
            undefined_nodes: self.undefined_nodes(),
            insufficient_nodes: self.sufficient_ok.as_ref().map(|s| {
                self.h.grid().interior().filter(|&i| !s[i]).collect()
            }),
        }
    }

    /// CSV with columns `x,h,GhqV,bound,necessary_ok,sufficient_ok`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "h", "GhqV", "bound", "necessary_ok", "sufficient_ok"])?;
        let g = self.h.grid();
        for i in 0..g.len() {
            let suff = match &self.sufficient_ok {
                Some(s) => s[i].to_string(),
                None => String::new(),
            };
            out.write_record([
                fmt_real(g.node(i)),
                fmt_real(self.h.get(i)),
                fmt_real(self.ghqv.value.get(i)),
                fmt_real(self.bound.get(i)),
                self.necessary_ok[i].to_string(),
                suff,
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `h^q V` at interior nodes (0 at the boundary, where the kernel vanishes),
/// optionally restricted to `{u > threshold}`.
fn weighted_source(q: f64, h: &GridFn, v: &GridFn, chi: Option<&[bool]>) -> Result<GridFn> {
    let g = *h.grid();
    let mut s = vec![0.0; g.len()];
    for i in g.interior() {
        if chi.is_some_and(|c| !c[i]) {
            continue;
        }
        let vi = v.get(i);
        s[i] = if vi == 0.0 { 0.0 } else { h.get(i).powf(q) * vi };
        if s[i].is_nan() {
            return Err(Error::Domain(format!("h^q V undefined at node {i}")));
        }
    }
    GridFn::new(g, s)
}

fn chi(u: &GridFn, threshold: f64) -> Vec<bool> {
    let t = threshold * u.max();
    u.values().iter().map(|&x| x > t).collect()
}

fn needs_u(q: f64, u: Option<&GridFn>, v: &GridFn) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        match u {
            None => return Err(Error::Domain("0 < q < 1 needs the solution u for χ_u".into())),
            Some(u) => u.check_same_grid(v)?,
        }
    }
    Ok(())
}

/// Assemble a report from `h` and a precomputed potential `G(h^q V)` on the
/// same grid. Boundary nodes carry `bound = h·φ(0) = h`.
pub fn bound_from_potential(q: f64, h: GridFn, ghqv: PotentialResult) -> Result<BoundReport> {
    let regime = Regime::of(q)?;
    h.check_same_grid(&ghqv.value)?;
    let g = *h.grid();
    let n = g.len();
    let mut bound = vec![0.0; n];
    let mut bracket = vec![1.0; n];
    let mut necessary = vec![true; n];
    for i in 0..n {
        if g.is_boundary(i) {
            bound[i] = h.get(i);
            continue;
        }
        let gi = if ghqv.status[i] == NodeStatus::Undefined {
            f64::NAN
        } else {
            ghqv.value.get(i)
        };
        let (b, br, ok) = unified_bound(q, h.get(i), gi)?;
        bound[i] = b;
        bracket[i] = br;
        necessary[i] = ok;
    }
    Ok(BoundReport {
        regime,
        q,
        bound: GridFn::new(g, bound)?,
        bracket: GridFn::new(g, bracket)?,
        h,
        ghqv,
        necessary_ok: necessary,
        sufficient_ok: None,
        envelope: None,
    })
}

fn report_with_h(p: &Problem, h: GridFn, u: Option<&GridFn>) -> Result<BoundReport> {
    needs_u(p.q, u, &p.v)?;
    let mask = match (p.regime(), u) {
        (Regime::Sublinear, Some(u)) => Some(chi(u, p.u_threshold)),
        _ => None,
    };
    let src = weighted_source(p.q, &h, &p.v, mask.as_deref())?;
    let ghqv = potential(&p.kernel, &src)?;
    bound_from_potential(p.q, h, ghqv)
}

/// Bounds with `h = G f`. `u` is needed only for `0 < q < 1`.
pub fn thm1_bound(p: &Problem, u: Option<&GridFn>) -> Result<BoundReport> {
    let h = p.h()?;
    report_with_h(p, h, u)
}

/// Bounds with a caller-supplied positive superharmonic `h`.
pub fn thm2_bound(p: &Problem, h_given: &GridFn, u: Option<&GridFn>) -> Result<BoundReport> {
    h_given.check_same_grid(&p.v)?;
    let g = *h_given.grid();
    if let Some(i) = g.interior().find(|&i| !(h_given.get(i) > 0.0 && h_given.get(i).is_finite())) {
        return Err(Error::InvalidH(format!(
            "h must be positive and finite inside; h = {} at node {i}",
            h_given.get(i)
        )));
    }
    check_superharmonic(h_given)?;
    report_with_h(p, h_given.clone(), u)
}

/// Discrete `-h'' ≥ -tol` with `tol = 1e-8 · max(max|h|/L², max|h''|)`.
pub fn check_superharmonic(h: &GridFn) -> Result<()> {
    let g = h.grid();
    let d2 = second_difference(h);
    let len = g.interval().length();
    let hmax = h.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = (hmax / (len * len)).max(d2.sup_norm_inside());
    let tol = 1e-8 * scale;
    let bad: Vec<usize> = g.interior().filter(|&i| -d2.get(i) < -tol).collect();
    if let Some(&i) = bad.first() {
        return Err(Error::InvalidH(format!(
            "not superharmonic at {} node(s); -h'' = {:e} at node {i}",
            bad.len(),
            -d2.get(i)
        )));
    }
    Ok(())
}

/// Bounds for `f = 0` in terms of `G V` alone (`h ≡ 1`).
///
/// `bracket` records `(q - 1)·G V`, which must be positive for `q > 1` and
/// `q < 0`.
pub fn thm3_bound(q: f64, v: &GridFn, kernel: &Kernel, u: Option<&GridFn>) -> Result<BoundReport> {
    let regime = Regime::of(q)?;
    kernel.check_grid(v.grid())?;
    needs_u(q, u, v)?;
    let g = *v.grid();
    let n = g.len();
    let src = match (regime, u) {
        (Regime::Sublinear, Some(u)) => {
            let c = chi(u, DEFAULT_U_THRESHOLD);
            let vals = (0..n).map(|i| if c[i] { v.get(i) } else { 0.0 }).collect();
            GridFn::new(g, vals)?
        }
        _ => v.clone(),
    };
    let gv = potential(kernel, &src)?;
    let mut bound = vec![0.0; n];
    let mut bracket = vec![0.0; n];
    let mut necessary = vec![true; n];
    for i in 0..n {
        let x = if gv.is_well_defined(i) { gv.value.get(i) } else { f64::NAN };
        let br = if q == 1.0 { 1.0 } else { (q - 1.0) * x };
        bracket[i] = br;
        if x.is_nan() {
            bound[i] = f64::NAN;
            necessary[i] = false;
            continue;
        }
        let interior = !g.is_boundary(i);
        bound[i] = match regime {
            Regime::Linear => (-x).exp(),
            Regime::Superlinear => {
                if interior && !(br > 0.0) {
                    necessary[i] = false;
                    f64::NAN
                } else {
                    br.powf(-1.0 / (q - 1.0))
                }
            }
            Regime::Sublinear => (-(1.0 - q) * x).max(0.0).powf(1.0 / (1.0 - q)),
            Regime::Negative => {
                if interior && !(br > 0.0) {
                    necessary[i] = false;
                    f64::NAN
                } else {
                    br.powf(1.0 / (1.0 - q))
                }
            }
        };
    }
    Ok(BoundReport {
        regime,
        q,
        h: GridFn::constant(g, 1.0),
        ghqv: gv,
        bound: GridFn::new(g, bound)?,
        bracket: GridFn::new(g, bracket)?,
        necessary_ok: necessary,
        sufficient_ok: None,
        envelope: None,
    })
}

/// The sufficient condition for existence and the two-sided envelope.
///
/// `q > 1` needs `V ≤ 0` and tests `-G(h^q V) ≤ a*·h`; `q < 0` needs `V ≥ 0`
/// and tests `G(h^q V) ≤ a*·h`, with `a*` from [`sharp_constants`].
pub fn thm4_conditions(p: &Problem) -> Result<BoundReport> {
    let mode = match p.regime() {
        Regime::Superlinear => MonotoneRegime::Increasing,
        Regime::Negative => MonotoneRegime::Decreasing,
        r => {
            return Err(Error::Domain(format!(
                "existence conditions apply to q > 1 or q < 0, not the {} regime",
                r.name()
            )))
        }
    };
    let g = *p.grid();
    let bad: Vec<usize> = g
        .interior()
        .filter(|&i| {
            let v = p.v.get(i);
            match mode {
                MonotoneRegime::Increasing => !(v <= 0.0),
                MonotoneRegime::Decreasing => !(v >= 0.0),
            }
        })
        .collect();
    if !bad.is_empty() {
        return Err(Error::InvalidSign { nodes: bad });
    }
    let (a_star, x_star) = sharp_constants(p.q, mode)?;
    let mut rep = thm1_bound(p, None)?;
    let n = g.len();
    let mut suff = vec![true; n];
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        let h = rep.h.get(i);
        if !g.is_boundary(i) {
            let gi = if rep.ghqv.is_well_defined(i) {
                rep.ghqv.value.get(i)
            } else {
                f64::NAN
            };
            suff[i] = match mode {
                MonotoneRegime::Increasing => -gi <= a_star * h,
                MonotoneRegime::Decreasing => gi <= a_star * h,
            };
        }
        let (lo, hi) = match mode {
            MonotoneRegime::Increasing => (rep.bound.get(i), x_star * h),
            MonotoneRegime::Decreasing => (x_star * h, rep.bound.get(i)),
        };
        lower[i] = lo;
        upper[i] = hi;
    }
    rep.sufficient_ok = Some(suff);
    rep.envelope = Some((GridFn::new(g, lower)?, GridFn::new(g, upper)?));
    Ok(rep)
}
