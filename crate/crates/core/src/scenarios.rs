//! Model problems with known behaviour: an oscillating linear potential
//! (`ex1`), power-of-distance potentials of both signs for `q < 0` (`ex2`,
//! `ex3`, run on `(0, 1)` with `d(x) = min(x, 1 - x)`), and an explicit
//! family of solutions `λ(1 - x²)^γ` on `(-1, 1)` (`ex4`).
//!
//! Grid-mode problems come from [`build_scenario`]. The boundary-layer
//! quantities (rates, cancellation, sharpness) are computed from the closed
//! forms with [`crate::layer`], since the interesting behaviour sits far below
//! any uniform grid spacing.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::domain::{fmt_real, Grid, GridFn, Interval};
use crate::error::{Error, Result};
use crate::estimates::{Problem, SCHEMA};
use crate::green::Kernel;
use crate::layer::{layer_potential, layer_potential_improper, LayerOptions, Site, TailModel};
use crate::phi::PhiFamily;

use std::f64::consts::PI;

/// Default fit window, as fractions of the interval length.
pub const DEFAULT_WINDOW: (f64, f64) = (1e-3, 1e-2);

/// Deeper window used where the default one is still pre-asymptotic.
pub const DEEP_WINDOW: (f64, f64) = (1e-6, 1e-4);

/// Fewest samples a fit accepts.
pub const MIN_FIT_POINTS: usize = 8;

/// `|slope|` below which a non-logarithmic ratio counts as bounded.
pub const BOUNDED_SLOPE: f64 = 0.1;

/// Samples placed log-uniformly in a window when fitting closed forms.
pub const WINDOW_SAMPLES: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "id", rename_all = "lowercase")]
pub enum ScenarioParams {
    Ex1 { alpha: f64 },
    Ex2 { lambda: f64, beta: f64 },
    Ex3 { beta: f64 },
    Ex4 { lambda: f64, gamma: f64 },
}

impl ScenarioParams {
    pub fn id(&self) -> &'static str {
        match self {
            ScenarioParams::Ex1 { .. } => "ex1",
            ScenarioParams::Ex2 { .. } => "ex2",
            ScenarioParams::Ex3 { .. } => "ex3",
            ScenarioParams::Ex4 { .. } => "ex4",
        }
    }

    pub fn interval(&self) -> Interval {
        match self {
            ScenarioParams::Ex4 { .. } => Interval::symmetric(),
            _ => Interval::unit(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub params: ScenarioParams,
    pub q: f64,
    pub grid: Grid,
}

impl ScenarioSpec {
    /// A spec on `n` uniform nodes of the scenario's own interval.
    pub fn new(params: ScenarioParams, q: f64, n: usize) -> Result<Self> {
        let spec = ScenarioSpec {
            grid: Grid::new(params.interval(), n)?,
            params,
            q,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        let pos = |v: f64| v > 0.0 && v.is_finite();
        match self.params {
            ScenarioParams::Ex1 { alpha } => {
                if !pos(alpha) {
                    return bad(format!("ex1 needs alpha > 0, got {alpha}"));
                }
                if self.q != 1.0 {
                    return bad(format!("ex1 is linear (q = 1), got q = {}", self.q));
                }
            }
            ScenarioParams::Ex2 { lambda, beta } => {
                if !pos(lambda) || !pos(beta) {
                    return bad(format!("ex2 needs lambda, beta > 0, got {lambda}, {beta}"));
                }
            }
            ScenarioParams::Ex3 { beta } => {
                if !pos(beta) {
                    return bad(format!("ex3 needs beta > 0, got {beta}"));
                }
            }
            ScenarioParams::Ex4 { lambda, gamma } => {
                if !pos(lambda) || !pos(gamma) {
                    return bad(format!("ex4 needs lambda, gamma > 0, got {lambda}, {gamma}"));
                }
            }
        }
        if !matches!(self.params, ScenarioParams::Ex1 { .. }) && !(self.q < 0.0) {
            return bad(format!("{} needs q < 0, got {}", self.params.id(), self.q));
        }
        if self.grid.interval() != self.params.interval() {
            return bad(format!(
                "{} lives on ({}, {})",
                self.params.id(),
                self.params.interval().left(),
                self.params.interval().right()
            ));
        }
        Ok(())
    }

    /// `V` at a point, from the closed forms.
    pub fn v_at(&self, s: Site) -> f64 {
        match self.params {
            ScenarioParams::Ex1 { alpha } => ex1_v(alpha, s),
            ScenarioParams::Ex2 { lambda, beta } => lambda * s.dist().powf(-beta),
            ScenarioParams::Ex3 { beta } => -s.dist().powf(-beta),
            ScenarioParams::Ex4 { lambda, gamma } => ex4_v(lambda, gamma, self.q, s),
        }
    }

    /// The exact solution, where one is known.
    pub fn exact_at(&self, s: Site) -> Option<f64> {
        match self.params {
            ScenarioParams::Ex1 { alpha } => Some(ex1_u(alpha, s)),
            ScenarioParams::Ex4 { lambda, gamma } => Some(lambda * (s.from_left * s.from_right).powf(gamma)),
            _ => None,
        }
    }

    /// `h^q V` at a point with `h = G 1`.
    pub fn weighted_source_at(&self, s: Site) -> f64 {
        let v = self.v_at(s);
        if v == 0.0 {
            0.0
        } else {
            h_at(s).powf(self.q) * v
        }
    }
}

/// `h = G 1 = (x - a)(b - x) / 2`.
pub fn h_at(s: Site) -> f64 {
    0.5 * s.from_left * s.from_right
}

/// `u = x(1 - x)(1 + x sin(π x^{-α}))` on `(0, 1)`.
pub fn ex1_u(alpha: f64, s: Site) -> f64 {
    let x = s.from_left;
    x * s.from_right * (1.0 + x * (PI * x.powf(-alpha)).sin())
}

/// The three parts of `V = (u'' + 1) / u` for [`ex1_u`]: the leading
/// oscillation, the `x^{-α-1}` cosine terms, and the rest.
pub fn ex1_v_parts(alpha: f64, s: Site) -> [f64; 3] {
    let x = s.from_left;
    let omx = s.from_right;
    let xa = x.powf(-alpha);
    let (sn, cs) = (PI * xa).sin_cos();
    let w = 1.0 + x * sn;
    let v1 = -alpha * alpha * PI * PI * xa * xa / x * sn / w;
    let v2 = (alpha * (alpha - 1.0) * PI * xa / x * cs - 2.0 * alpha * PI * (omx - x) * xa / x * cs / omx) / w;
    let v3 = (2.0 * sn - 6.0 * x * sn - 1.0) / (x * omx * w);
    [v1, v2, v3]
}

pub fn ex1_v(alpha: f64, s: Site) -> f64 {
    ex1_v_parts(alpha, s).iter().sum()
}

/// `V = (u'' + 1) / u^q` for `u = λ(1 - x²)^γ` on `(-1, 1)`.
pub fn ex4_v(lambda: f64, gamma: f64, q: f64, s: Site) -> f64 {
    let w = s.from_left * s.from_right;
    let lq = lambda.powf(1.0 - q);
    let v1 = if gamma == 1.0 {
        0.0
    } else {
        4.0 * lq * gamma * (gamma - 1.0) * w.powf(gamma - 2.0 - gamma * q)
    };
    let v2 = -2.0 * lq * gamma * (2.0 * gamma - 1.0) * w.powf(gamma - 1.0 - gamma * q);
    let v3 = lambda.powf(-q) * w.powf(-gamma * q);
    v1 + v2 + v3
}

/// Grid-mode problem (`f ≡ 1`, closed-form kernel) and the exact solution
/// when one is known. `V` is set to 0 at the two boundary nodes, which no
/// computation reads.
pub fn build_scenario(spec: &ScenarioSpec) -> Result<(Problem, Option<GridFn>)> {
    spec.validate()?;
    let g = spec.grid;
    let sites = Site::nodes(&g);
    let v: Vec<f64> = sites
        .iter()
        .enumerate()
        .map(|(i, &s)| if g.is_boundary(i) { 0.0 } else { spec.v_at(s) })
        .collect();
    let p = Problem::new(
        spec.q,
        GridFn::new(g, v)?,
        GridFn::constant(g, 1.0),
        Kernel::closed_form(g.interval()),
    )?;
    let exact = match spec.exact_at(sites[0]) {
        Some(_) => {
            let u = sites
                .iter()
                .enumerate()
                .map(|(i, &s)| if g.is_boundary(i) { 0.0 } else { spec.exact_at(s).unwrap_or(0.0) })
                .collect();
            Some(GridFn::new(g, u)?)
        }
        None => None,
    };
    Ok((p, exact))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    Power,
    PowerLog,
    Bounded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticFit {
    /// Absolute distances to the boundary.
    pub window: (f64, f64),
    /// Least-squares slope of `log(g/reference)` against `log d`.
    pub slope: f64,
    /// Half-width of the 95% confidence interval of `slope`.
    pub slope_ci: f64,
    pub model: RateModel,
    pub points: usize,
    pub power_residual: f64,
    pub log_residual: f64,
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let c = my - slope * mx;
    (slope, c, sxx)
}

/// Fit `ratio(d)` sampled at distances `d` (all inside `window`) and
/// classify it. `diam` is the interval length, used in `log(2·diam/d)`.
pub fn fit_samples(d: &[f64], ratio: &[f64], window: (f64, f64), diam: f64) -> Result<AsymptoticFit> {
    if d.len() < MIN_FIT_POINTS {
        return Err(Error::WindowTooSmall {
            found: d.len(),
            needed: MIN_FIT_POINTS,
        });
    }
    if let Some(i) = ratio.iter().position(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::Domain(format!(
            "fit needs a positive finite ratio; got {} at d = {:e}",
            ratio[i], d[i]
        )));
    }
    let lx: Vec<f64> = d.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ratio.iter().map(|v| v.ln()).collect();
    let (slope, c, sxx) = linear_fit(&lx, &ly);
    let n = d.len() as f64;
    let res_pow: Vec<f64> = lx.iter().zip(&ly).map(|(x, y)| y - c - slope * x).collect();
    let ss: f64 = res_pow.iter().map(|r| r * r).sum();
    let power_residual = (ss / n).sqrt();
    let se = if sxx > 0.0 { (ss / (n - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    // ratio ≈ c0 + c1·log(A/d), residual measured in log space
    let la: Vec<f64> = d.iter().map(|v| (2.0 * diam / v).ln()).collect();
    let (c1, c0, _) = linear_fit(&la, ratio);
    let log_residual = if c1 > 0.0 {
        let ss: f64 = la
            .iter()
            .zip(&ly)
            .map(|(a, y)| {
                let m = c0 + c1 * a;
                if m > 0.0 { (y - m.ln()).powi(2) } else { f64::INFINITY }
            })
            .sum();
        (ss / n).sqrt()
    } else {
        f64::INFINITY
    };
    let model = if slope.abs() < BOUNDED_SLOPE {
        RateModel::Bounded
    } else if log_residual <= power_residual {
        RateModel::PowerLog
    } else {
        RateModel::Power
    };
    Ok(AsymptoticFit {
        window,
        slope,
        slope_ci: 1.96 * se,
        model,
        points: d.len(),
        power_residual,
        log_residual,
    })
}

/// Fit `g / reference` against the distance to the boundary over the
/// interior nodes whose distance lies in `window` (fractions of the
/// interval length).
pub fn fit_boundary_rate(g: &GridFn, reference: &GridFn, window: (f64, f64)) -> Result<AsymptoticFit> {
    g.check_same_grid(reference)?;
    let grid = *g.grid();
    let len = grid.interval().length();
    if !(window.0 > 0.0 && window.0 < window.1 && window.1 < 0.5) {
        return Err(Error::Domain(format!(
            "fit window ({}, {}) must satisfy 0 < lo < hi < 1/2",
            window.0, window.1
        )));
    }
    let (lo, hi) = (window.0 * len, window.1 * len);
    let mut d = Vec::new();
    let mut r = Vec::new();
    for i in grid.interior() {
        let di = Site::node(&grid, i).dist();
        if di >= lo * (1.0 - 1e-12) && di <= hi * (1.0 + 1e-12) {
            d.push(di);
            r.push(g.get(i) / reference.get(i));
        }
    }
    fit_samples(&d, &r, (lo, hi), len)
}

/// `k` sites near the left end, log-uniform in `window` (fractions of the
/// interval length).
pub fn window_sites(iv: Interval, window: (f64, f64), k: usize) -> Vec<Site> {
    let len = iv.length();
    let (a, b) = (window.0.ln(), window.1.ln());
    (0..k)
        .map(|j| {
            let t = if k > 1 { j as f64 / (k - 1) as f64 } else { 0.0 };
            Site::near_left(iv, len * (a + (b - a) * t).exp())
        })
        .collect()
}

fn ex_options() -> LayerOptions {
    LayerOptions {
        grading_levels: 60,
        ..LayerOptions::default()
    }
}

/// `G(h^q V) / h` from the closed forms at the given sites.
pub fn potential_ratio(spec: &ScenarioSpec, sites: &[Site]) -> Result<Vec<f64>> {
    let iv = spec.params.interval();
    let lp = layer_potential(iv, |s| spec.weighted_source_at(s), sites, &ex_options())?;
    Ok(lp
        .values
        .iter()
        .zip(sites)
        .map(|(v, s)| if s.dist() == 0.0 { 0.0 } else { v / h_at(*s) })
        .collect())
}

/// `h·φ(-G(h^qV)/h)` from a ratio; NaN where the bracket is not positive.
fn bound_from_ratio(q: f64, h: f64, r: f64) -> Result<f64> {
    let bracket = 1.0 + (q - 1.0) * r;
    if r.is_nan() || (q != 1.0 && !(bracket > 0.0)) {
        return Ok(f64::NAN);
    }
    Ok(h * PhiFamily::new(q)?.eval(-r)?)
}

/// Summary of the cancellation study for the oscillating potential.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CancellationReport {
    pub alpha: f64,
    pub n: usize,
    /// `sup G(hV)/h` over nodes in `(0, 1/2]` (`α < 1`).
    pub sup_ratio: Option<f64>,
    /// Analytic bound on the part of `G(hV)/h` below the quadrature cutoff,
    /// maximized over the same nodes.
    pub certified_remainder: Option<f64>,
    /// `sup G(h|V|)/h` over the same nodes.
    pub abs_sup_ratio: Option<f64>,
    /// Largest `h·e^{-G(hV)/h} - u` relative to `h` over interior nodes.
    pub lower_bound_excess: Option<f64>,
    /// Sampled `inf (1 + x sin(π x^{-α}))` over `(0, 1)`.
    pub inf_factor: f64,
    /// Improper values at `probe_x` (`α = 1`).
    pub probe_x: Vec<f64>,
    pub probe_values: Vec<f64>,
    /// `[G(x_lo)/x_lo] / [G(x_hi)/x_hi]` for the smallest and largest probe.
    pub growth_over_x: Option<f64>,
    /// `max/min` of `G(x) / (x log(1/x))` over the probes.
    pub log_ratio_spread: Option<f64>,
}

/// Zeros `k^{-1/α}` of `sin(π x^{-α})` that are at least `floor`.
fn ex1_zeros(alpha: f64, floor: f64) -> Vec<Site> {
    let iv = Interval::unit();
    let kmax = floor.powf(-alpha).floor() as usize;
    (1..=kmax)
        .map(|k| (k as f64).powf(-1.0 / alpha))
        .filter(|&y| y >= floor && y < 1.0)
        .map(|y| Site::at(iv, y))
        .collect()
}

/// Most oscillation zeros used as breakpoints.
pub const MAX_ZEROS: usize = 1 << 17;

/// Grading depth for the direct evaluation: as deep as `2^{-30}`, but not
/// past the point where the zeros would exceed [`MAX_ZEROS`].
fn ex1_levels(alpha: f64) -> u32 {
    let floor = (MAX_ZEROS as f64).powf(-1.0 / alpha);
    (-floor.log2()).floor().clamp(8.0, 30.0) as u32
}

/// `∫_0^c y·h|V|` for the left layer plus `∫_{1-c}^1 (1-y)·h|V|` for the
/// right one, from crude pointwise bounds on `|V|`. Needs `α < 1`,
/// `c ≤ 1e-3`.
fn ex1_tail_bound(alpha: f64, c: f64) -> (f64, f64) {
    let w = 1.0 - c;
    let p = 2.0 - 2.0 * alpha;
    let left = alpha * alpha * PI * PI / w * c.powf(p) / (2.0 * p)
        + (alpha * (1.0 - alpha).abs() * PI + 2.0 * alpha * PI / w) / w * c.powf(2.0 - alpha)
            / (2.0 * (2.0 - alpha))
        + 9.0 / (w * w) * c * c / 4.0;
    // near y = 1: y^{-k} ≤ 2 and 1 + y sin ≥ 1/2, so h|V| ≤ M
    let m = 2.0 * (2.0 * alpha * alpha * PI * PI + 2.0 * alpha * (1.0 - alpha).abs() * PI + 4.0 * alpha * PI + 10.0);
    let right = m * c * c / 2.0;
    (left, right)
}

/// Cancellation in `G(hV)` for the oscillating potential on the nodes of
/// `grid`. For `α < 1` the potential is evaluated directly with the
/// oscillation zeros as panel breakpoints; for `α = 1` the exhaustion
/// sequence is evaluated at `x ∈ {1e-4, ..., 1e-2}`.
pub fn verify_cancellation_ex1(alpha: f64, grid: &Grid) -> Result<CancellationReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidScenario(format!("cancellation study needs 0 < alpha ≤ 1, got {alpha}")));
    }
    let iv = Interval::unit();
    if grid.interval() != iv {
        return Err(Error::InvalidScenario("ex1 lives on (0, 1)".into()));
    }
    let inf_factor = (1..200_000)
        .map(|k| {
            let x = k as f64 / 200_000.0;
            1.0 + x * (PI * x.powf(-alpha)).sin()
        })
        .fold(f64::INFINITY, f64::min);
    let mut rep = CancellationReport {
        alpha,
        n: grid.len(),
        sup_ratio: None,
        certified_remainder: None,
        abs_sup_ratio: None,
        lower_bound_excess: None,
        inf_factor,
        probe_x: Vec::new(),
        probe_values: Vec::new(),
        growth_over_x: None,
        log_ratio_spread: None,
    };
    let g = |s: Site| h_at(s) * ex1_v(alpha, s);
    if alpha < 1.0 {
        let levels = ex1_levels(alpha);
        let cutoff = iv.length() * 2f64.powi(-(levels as i32));
        let opts = LayerOptions {
            grading_levels: levels,
            tail: TailModel::None,
            breakpoints: ex1_zeros(alpha, cutoff),
            ..LayerOptions::default()
        };
        let sites = Site::nodes(grid);
        let lp = layer_potential(iv, g, &sites, &opts)?;
        // |hV| has kinks off the breakpoints, so the order check would only
        // measure those
        let abs_opts = LayerOptions {
            check_order: None,
            ..opts.clone()
        };
        let abs = layer_potential(iv, |s| g(s).abs(), &sites, &abs_opts)?;
        let (tl, tr) = ex1_tail_bound(alpha, cutoff);
        let mut sup = f64::NEG_INFINITY;
        let mut abs_sup = f64::NEG_INFINITY;
        let mut rem = 0.0f64;
        let mut excess = f64::NEG_INFINITY;
        for (i, s) in sites.iter().enumerate() {
            if grid.is_boundary(i) {
                continue;
            }
            let h = h_at(*s);
            let r = lp.values[i] / h;
            if s.x <= 0.5 {
                sup = sup.max(r);
                abs_sup = abs_sup.max(abs.values[i] / h);
                rem = rem.max((s.from_right * tl + s.from_left * tr) / h);
            }
            excess = excess.max((h * (-r).exp() - ex1_u(alpha, *s)) / h);
        }
        rep.sup_ratio = Some(sup);
        rep.abs_sup_ratio = Some(abs_sup);
        rep.certified_remainder = Some(rem);
        rep.lower_bound_excess = Some(excess);
    } else {
        let probes = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2];
        let sites: Vec<Site> = probes.iter().map(|&x| Site::near_left(iv, x)).collect();
        let levels = 20usize;
        let dmin = iv.length() / 2f64.powi(levels as i32 + 1);
        let opts = LayerOptions {
            grading_levels: levels as u32 + 1,
            tail: TailModel::None,
            breakpoints: ex1_zeros(alpha, dmin),
            ..LayerOptions::default()
        };
        let imp = layer_potential_improper(iv, g, &sites, levels, &opts)?;
        let vals = imp.last();
        let over_x: Vec<f64> = vals.iter().zip(&probes).map(|(v, x)| v / x).collect();
        let over_xlog: Vec<f64> = vals.iter().zip(&probes).map(|(v, x)| v / (x * (1.0 / x).ln())).collect();
        rep.growth_over_x = Some(over_x[0] / over_x[probes.len() - 1]);
        let mx = over_xlog.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mn = over_xlog.iter().cloned().fold(f64::INFINITY, f64::min);
        rep.log_ratio_spread = Some(if mn > 0.0 { mx / mn } else { f64::INFINITY });
        rep.probe_x = probes.to_vec();
        rep.probe_values = vals;
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sharpness {
    Sharp,
    NotSharp,
    Trivialized,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharpnessReport {
    pub lambda: f64,
    pub gamma: f64,
    pub q: f64,
    /// `sup u / bound` over interior nodes (0 when the bound is infinite).
    pub sharpness_ratio: f64,
    /// `inf u / bound` over interior nodes.
    pub min_ratio: f64,
    pub classification: Sharpness,
    /// Fit of `bound` against `d` in the deep window.
    pub bound_fit: Option<AsymptoticFit>,
    /// Fit of `u` against `d` in the deep window.
    pub exact_fit: Option<AsymptoticFit>,
    /// Fit of `u / bound` against `d` in the deep window.
    pub ratio_fit: Option<AsymptoticFit>,
    /// `G(h^qV) / h` at the grid nodes.
    pub potential_ratio: Vec<f64>,
    pub bound: Vec<f64>,
    pub exact: Vec<f64>,
}

/// Compare the exact solution `λ(1 - x²)^γ` with the upper bound on the
/// nodes of `grid` and in the deep boundary window.
pub fn sharpness_report_ex4(lambda: f64, gamma: f64, q: f64, grid: &Grid) -> Result<SharpnessReport> {
    let spec = ScenarioSpec {
        params: ScenarioParams::Ex4 { lambda, gamma },
        q,
        grid: *grid,
    };
    spec.validate()?;
    let iv = grid.interval();
    let sites = Site::nodes(grid);
    let ratio = potential_ratio(&spec, &sites)?;
    let mut bound = vec![0.0; sites.len()];
    let mut exact = vec![0.0; sites.len()];
    let (mut sup, mut inf) = (f64::NEG_INFINITY, f64::INFINITY);
    for (i, s) in sites.iter().enumerate() {
        if grid.is_boundary(i) {
            continue;
        }
        let h = h_at(*s);
        bound[i] = bound_from_ratio(q, h, ratio[i])?;
        exact[i] = spec.exact_at(*s).unwrap_or(f64::NAN);
        let r = if bound[i].is_infinite() { 0.0 } else { exact[i] / bound[i] };
        sup = sup.max(r);
        inf = inf.min(r);
    }
    let trivial = bound
        .iter()
        .enumerate()
        .any(|(i, b)| !grid.is_boundary(i) && b.is_infinite());
    let mut rep = SharpnessReport {
        lambda,
        gamma,
        q,
        sharpness_ratio: sup,
        min_ratio: inf,
        classification: Sharpness::Trivialized,
        bound_fit: None,
        exact_fit: None,
        ratio_fit: None,
        potential_ratio: ratio,
        bound,
        exact,
    };
    if trivial {
        return Ok(rep);
    }
    let deep = window_sites(iv, DEEP_WINDOW, WINDOW_SAMPLES);
    let dr = potential_ratio(&spec, &deep)?;
    let d: Vec<f64> = deep.iter().map(|s| s.dist()).collect();
    let mut b = Vec::with_capacity(deep.len());
    let mut u = Vec::with_capacity(deep.len());
    for (s, r) in deep.iter().zip(&dr) {
        b.push(bound_from_ratio(q, h_at(*s), *r)?);
        u.push(spec.exact_at(*s).unwrap_or(f64::NAN));
    }
    let w = (d[0], d[d.len() - 1]);
    let len = iv.length();
    let bf = fit_samples(&d, &b, w, len)?;
    let uf = fit_samples(&d, &u, w, len)?;
    let ratios: Vec<f64> = u.iter().zip(&b).map(|(a, c)| a / c).collect();
    let rf = fit_samples(&d, &ratios, w, len)?;
    rep.classification = if rf.slope.abs() < 0.05 && inf > 0.0 {
        Sharpness::Sharp
    } else {
        Sharpness::NotSharp
    };
    rep.bound_fit = Some(bf);
    rep.exact_fit = Some(uf);
    rep.ratio_fit = Some(rf);
    Ok(rep)
}

/// One named fit in a scenario report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedFit {
    pub quantity: String,
    pub fit: AsymptoticFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub schema: &'static str,
    pub scenario: &'static str,
    pub parameters: ScenarioParams,
    pub q: f64,
    pub n: usize,
    pub fitted_rates: Vec<NamedFit>,
    pub sharpness_ratio: Option<f64>,
    pub condition_flags: BTreeMap<String, serde_json::Value>,
    #[serde(skip)]
    pub curves: Curves,
}

/// Per-node curves: `G(h^qV)/h`, the upper (or lower, `q = 1`) bound and
/// the exact solution where known.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Curves {
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub ratio: Vec<f64>,
    pub bound: Vec<f64>,
    pub exact: Option<Vec<f64>>,
}

impl Curves {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "h", "ratio", "bound", "exact"])?;
        for i in 0..self.x.len() {
            let ex = self.exact.as_ref().map(|e| fmt_real(e[i])).unwrap_or_default();
            wr.write_record([
                fmt_real(self.x[i]),
                fmt_real(self.h[i]),
                fmt_real(self.ratio[i]),
                fmt_real(self.bound[i]),
                ex,
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn flag<T: Serialize>(m: &mut BTreeMap<String, serde_json::Value>, k: &str, v: T) {
    m.insert(k.to_string(), serde_json::to_value(v).unwrap_or(serde_json::Value::Null));
}

/// Run the standard study for a scenario: node curves from the closed
/// forms, boundary fits and the condition checks that apply to it.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioReport> {
    spec.validate()?;
    let grid = spec.grid;
    let iv = grid.interval();
    let len = iv.length();
    let sites = Site::nodes(&grid);
    let mut flags = BTreeMap::new();
    let mut fits = Vec::new();
    let mut sharpness = None;
    let x: Vec<f64> = sites.iter().map(|s| s.x).collect();
    let h: Vec<f64> = sites.iter().map(|s| h_at(*s)).collect();
    let exact: Option<Vec<f64>> = spec
        .exact_at(sites[0])
        .map(|_| sites.iter().map(|s| spec.exact_at(*s).unwrap_or(0.0)).collect());
    let (ratio, bound) = match spec.params {
        ScenarioParams::Ex1 { alpha } => {
            let rep = verify_cancellation_ex1(alpha, &grid)?;
            flag(&mut flags, "inf_factor_positive", rep.inf_factor > 0.0);
            flag(&mut flags, "inf_factor", rep.inf_factor);
            let (ratio, bound) = if alpha < 1.0 {
                let levels = ex1_levels(alpha);
                let opts = LayerOptions {
                    grading_levels: levels,
                    tail: TailModel::None,
                    breakpoints: ex1_zeros(alpha, len * 2f64.powi(-(levels as i32))),
                    ..LayerOptions::default()
                };
                let lp = layer_potential(iv, |s| h_at(s) * ex1_v(alpha, s), &sites, &opts)?;
                let ratio: Vec<f64> = lp
                    .values
                    .iter()
                    .zip(&h)
                    .map(|(v, hh)| if *hh > 0.0 { v / hh } else { 0.0 })
                    .collect();
                let bound = ratio.iter().zip(&h).map(|(r, hh)| hh * (-r).exp()).collect();
                (ratio, bound)
            } else {
                (vec![f64::NAN; x.len()], vec![f64::NAN; x.len()])
            };
            flag(&mut flags, "sup_ratio", rep.sup_ratio);
            flag(&mut flags, "certified_remainder", rep.certified_remainder);
            flag(&mut flags, "abs_sup_ratio", rep.abs_sup_ratio);
            flag(
                &mut flags,
                "lower_bound_holds",
                rep.lower_bound_excess.map(|e| e <= 1e-6),
            );
            flag(&mut flags, "growth_over_x", rep.growth_over_x);
            flag(&mut flags, "log_ratio_spread", rep.log_ratio_spread);
            (ratio, bound)
        }
        ScenarioParams::Ex2 { .. } | ScenarioParams::Ex3 { .. } => {
            let ratio = potential_ratio(spec, &sites)?;
            let mut bound = vec![0.0; x.len()];
            let mut violated = Vec::new();
            for i in grid.interior() {
                bound[i] = bound_from_ratio(spec.q, h[i], ratio[i])?;
                if !(1.0 + (spec.q - 1.0) * ratio[i] > 0.0) {
                    violated.push(i);
                }
            }
            flag(&mut flags, "necessary_ok", violated.is_empty());
            flag(&mut flags, "violated_node_count", violated.len());
            let deep: Vec<Site> = (3..=14).map(|k| Site::near_left(iv, len * 10f64.powi(-k))).collect();
            let dr = potential_ratio(spec, &deep)?;
            let deep_violated = dr.iter().any(|r| !(1.0 + (spec.q - 1.0) * r > 0.0));
            flag(&mut flags, "necessary_violated_near_boundary", deep_violated);
            let win = window_sites(iv, DEFAULT_WINDOW, WINDOW_SAMPLES);
            let wr = potential_ratio(spec, &win)?;
            let d: Vec<f64> = win.iter().map(|s| s.dist()).collect();
            let w = (d[0], d[d.len() - 1]);
            if wr.iter().all(|r| r.is_finite()) {
                let mag: Vec<f64> = wr.iter().map(|r| r.abs()).collect();
                if mag.iter().all(|m| *m > 0.0) {
                    fits.push(NamedFit {
                        quantity: "potential_ratio".into(),
                        fit: fit_samples(&d, &mag, w, len)?,
                    });
                }
                if matches!(spec.params, ScenarioParams::Ex3 { .. }) {
                    let deep = window_sites(iv, DEEP_WINDOW, WINDOW_SAMPLES);
                    let dr = potential_ratio(spec, &deep)?;
                    let dd: Vec<f64> = deep.iter().map(|s| s.dist()).collect();
                    let b = deep
                        .iter()
                        .zip(&dr)
                        .map(|(s, r)| bound_from_ratio(spec.q, h_at(*s), *r))
                        .collect::<Result<Vec<f64>>>()?;
                    fits.push(NamedFit {
                        quantity: "upper_bound".into(),
                        fit: fit_samples(&dd, &b, (dd[0], dd[dd.len() - 1]), len)?,
                    });
                }
            } else {
                flag(&mut flags, "potential_infinite", true);
            }
            (ratio, bound)
        }
        ScenarioParams::Ex4 { lambda, gamma } => {
            let rep = sharpness_report_ex4(lambda, gamma, spec.q, &grid)?;
            flag(&mut flags, "classification", rep.classification);
            flag(&mut flags, "min_ratio", rep.min_ratio);
            for (name, f) in [("upper_bound", &rep.bound_fit), ("exact", &rep.exact_fit), ("exact_over_bound", &rep.ratio_fit)] {
                if let Some(f) = f {
                    fits.push(NamedFit {
                        quantity: name.into(),
                        fit: f.clone(),
                    });
                }
            }
            sharpness = Some(rep.sharpness_ratio);
            (rep.potential_ratio, rep.bound)
        }
    };
    Ok(ScenarioReport {
        schema: SCHEMA,
        scenario: spec.params.id(),
        parameters: spec.params,
        q: spec.q,
        n: grid.len(),
        fitted_rates: fits,
        sharpness_ratio: sharpness,
        condition_flags: flags,
        curves: Curves {
            x,
            h,
            ratio,
            bound,
            exact,
        },
    })
}
