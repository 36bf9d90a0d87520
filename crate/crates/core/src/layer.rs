//! Green potentials of sources given as functions, resolved into the
//! boundary layers.
//!
//! The source `g` is integrated panel by panel with Gauss–Legendre rules.
//! Panel breakpoints are a uniform base mesh, a geometric grading
//! `L·2^{-k}` toward each endpoint down to the cutoff `L·2^{-K}`, the
//! evaluation points themselves (so the kernel kink is a breakpoint) and any
//! caller-supplied breakpoints, e.g. the zeros of an oscillating factor.
//!
//! Points are passed as [`Site`]s that carry their distances to both
//! endpoints. Near an endpoint the integrand is parametrised by that
//! distance, which keeps `x = 1 - 1e-12` as accurate as `x = 1e-12`.
//!
//! With `A(x) = ∫_a^x (y-a) g` and `B(x) = ∫_x^b (b-y) g` the potential is
//! `[(b-x) A(x) + (x-a) B(x)] / L`. `A` is accumulated from the left end and
//! `B` from the right end, so each sum starts where its weight vanishes.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::domain::{Grid, Interval};
use crate::error::{Error, Result};
use crate::green::{NodeStatus, DIVERGENCE_RATIO};

/// A point of the interval with both endpoint distances stored exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    pub x: f64,
    pub from_left: f64,
    pub from_right: f64,
}

impl Site {
    /// The point at distance `d` from the left endpoint.
    pub fn near_left(iv: Interval, d: f64) -> Site {
        Site {
            x: iv.left() + d,
            from_left: d,
            from_right: iv.length() - d,
        }
    }

    /// The point at distance `d` from the right endpoint.
    pub fn near_right(iv: Interval, d: f64) -> Site {
        Site {
            x: iv.right() - d,
            from_left: iv.length() - d,
            from_right: d,
        }
    }

    pub fn at(iv: Interval, x: f64) -> Site {
        if x - iv.left() <= iv.right() - x {
            Site::near_left(iv, x - iv.left())
        } else {
            Site::near_right(iv, iv.right() - x)
        }
    }

    pub fn node(grid: &Grid, i: usize) -> Site {
        Site {
            x: grid.node(i),
            from_left: grid.from_left(i),
            from_right: grid.from_right(i),
        }
    }

    pub fn nodes(grid: &Grid) -> Vec<Site> {
        (0..grid.len()).map(|i| Site::node(grid, i)).collect()
    }

    /// Distance to the nearer endpoint.
    pub fn dist(&self) -> f64 {
        self.from_left.min(self.from_right)
    }

    fn key(&self) -> (u8, f64) {
        if self.from_left <= self.from_right {
            (0, self.from_left)
        } else {
            (1, -self.from_right)
        }
    }
}

fn key_cmp(a: &Site, b: &Site) -> std::cmp::Ordering {
    let (ka, kb) = (a.key(), b.key());
    ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
}

/// How the part of `A` (resp. `B`) below the cutoff is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailModel {
    /// Ignore it.
    None,
    /// Extrapolate the two innermost dyadic shells geometrically when their
    /// ratio lies in `(0, 0.9)`; otherwise ignore it.
    Geometric,
}

#[derive(Debug, Clone)]
pub struct LayerOptions {
    /// Uniform panels across the whole interval (rounded up to even).
    pub base_panels: usize,
    /// `K` in the cutoff `L·2^{-K}`.
    pub grading_levels: u32,
    pub order: usize,
    /// A lower Gauss–Legendre order whose answers must agree with `order`.
    pub check_order: Option<usize>,
    pub check_tol: f64,
    pub tail: TailModel,
    pub breakpoints: Vec<Site>,
}

impl Default for LayerOptions {
    fn default() -> Self {
        Self {
            base_panels: 64,
            grading_levels: 50,
            order: 10,
            check_order: Some(6),
            check_tol: 1e-6,
            tail: TailModel::Geometric,
            breakpoints: Vec::new(),
        }
    }
}

impl LayerOptions {
    pub fn cutoff(&self, iv: Interval) -> f64 {
        iv.length() * 2f64.powi(-(self.grading_levels as i32))
    }
}

#[derive(Debug, Clone)]
pub struct LayerPotential {
    pub values: Vec<f64>,
    pub status: Vec<NodeStatus>,
    pub positive_part_infinite: bool,
    pub negative_part_infinite: bool,
    /// Estimated contributions to `A` from `(a, a + cutoff)` and to `B` from
    /// `(b - cutoff, b)`.
    pub tails: (f64, f64),
    pub panels: usize,
}

#[derive(Debug, Clone)]
pub struct LayerImproper {
    pub deltas: Vec<f64>,
    /// `sequences[p][m]` is the level-`m` value at point `p`.
    pub sequences: Vec<Vec<f64>>,
    pub panels: usize,
}

impl LayerImproper {
    pub fn last(&self) -> Vec<f64> {
        self.sequences
            .iter()
            .map(|s| *s.last().unwrap_or(&0.0))
            .collect()
    }
}

struct Mesh {
    sites: Vec<Site>,
}

impl Mesh {
    fn build(iv: Interval, opts: &LayerOptions, required: &[Site]) -> Result<Mesh> {
        let len = iv.length();
        let cutoff = opts.cutoff(iv);
        let mut sites = Vec::new();
        let base = opts.base_panels.max(2).div_ceil(2) * 2;
        for k in 1..base {
            if 2 * k <= base {
                sites.push(Site::near_left(iv, len * k as f64 / base as f64));
            } else {
                sites.push(Site::near_right(iv, len * (base - k) as f64 / base as f64));
            }
        }
        for k in 1..=opts.grading_levels {
            let d = len * 2f64.powi(-(k as i32));
            sites.push(Site::near_left(iv, d));
            sites.push(Site::near_right(iv, d));
        }
        for s in required.iter().filter(|s| s.dist() > 0.0) {
            if s.dist() < cutoff {
                return Err(Error::Domain(format!(
                    "point {} lies inside the cutoff layer {cutoff:e}",
                    s.x
                )));
            }
            sites.push(*s);
        }
        sites.extend(opts.breakpoints.iter().filter(|s| s.dist() >= cutoff));
        sites.sort_by(key_cmp);
        sites.dedup_by(|a, b| a.key() == b.key());
        Ok(Mesh { sites })
    }

    fn index_of(&self, s: &Site) -> usize {
        self.sites
            .binary_search_by(|p| key_cmp(p, s))
            .expect("required site is in the mesh")
    }
}

/// Per-panel integrals of `g`, `(y-a) g` and `(b-y) g`, plus signed-part
/// shell sums of `d·g` on the four dyadic shells next to each end.
struct Panels {
    p0: Vec<f64>,
    pl: Vec<f64>,
    pr: Vec<f64>,
    /// `[end][shell] = (positive part, negative part)`
    shells: [[(f64, f64); 4]; 2],
}

fn integrate<F: Fn(Site) -> f64>(
    iv: Interval,
    g: &F,
    mesh: &Mesh,
    order: usize,
    cutoff: f64,
) -> Result<Panels> {
    let order = NonZeroUsize::new(order.max(1)).expect("order is at least 1");
    let rule: Vec<(f64, f64)> = GaussLegendre::new(order).as_node_weight_pairs().to_vec();
    let np = mesh.sites.len() - 1;
    let mut out = Panels {
        p0: vec![0.0; np],
        pl: vec![0.0; np],
        pr: vec![0.0; np],
        shells: [[(0.0, 0.0); 4]; 2],
    };
    for p in 0..np {
        let (s0, s1) = (mesh.sites[p], mesh.sites[p + 1]);
        let right_side = s0.key().0 == 1;
        let (d0, d1) = if right_side {
            (s0.from_right, s1.from_right)
        } else {
            (s0.from_left, s1.from_left)
        };
        let half = 0.5 * (d1 - d0);
        let mid = 0.5 * (d1 + d0);
        let hw = half.abs();
        let (mut a0, mut al, mut ar) = (0.0, 0.0, 0.0);
        let mut shell = [(0.0, 0.0); 2];
        for &(t, w) in &rule {
            let d = mid + half * t;
            let site = if right_side {
                Site::near_right(iv, d)
            } else {
                Site::near_left(iv, d)
            };
            let v = g(site);
            if !v.is_finite() {
                return Err(Error::NotIntegrable(format!("source is {v} at x = {}", site.x)));
            }
            let wv = w * hw * v;
            a0 += wv;
            al += site.from_left * wv;
            ar += site.from_right * wv;
            let wl = site.from_left * wv;
            let wr = site.from_right * wv;
            if wl > 0.0 { shell[0].0 += wl } else { shell[0].1 -= wl }
            if wr > 0.0 { shell[1].0 += wr } else { shell[1].1 -= wr }
        }
        out.p0[p] = a0;
        out.pl[p] = al;
        out.pr[p] = ar;
        let mid_left = 0.5 * (s0.from_left + s1.from_left);
        let mid_right = 0.5 * (s0.from_right + s1.from_right);
        for (end, dist) in [(0usize, mid_left), (1, mid_right)] {
            let r = dist / cutoff;
            if r < 16.0 {
                let k = (r.log2().floor().max(0.0) as usize).min(3);
                out.shells[end][k].0 += shell[end].0;
                out.shells[end][k].1 += shell[end].1;
            }
        }
    }
    Ok(out)
}

fn shells_diverge(s: &[(f64, f64); 4], positive: bool) -> bool {
    let v: Vec<f64> = s.iter().map(|&(p, n)| if positive { p } else { n }).collect();
    v.iter().all(|&x| x > 0.0) && v.windows(2).all(|w| w[0] / w[1] >= DIVERGENCE_RATIO)
}

fn geometric_tail(s: &[(f64, f64); 4]) -> f64 {
    let s0 = s[0].0 - s[0].1;
    let s1 = s[1].0 - s[1].1;
    if s1 == 0.0 {
        return 0.0;
    }
    let r = s0 / s1;
    if r > 0.0 && r < 0.9 {
        s0 * r / (1.0 - r)
    } else {
        0.0
    }
}

/// Cumulative sums `A_j = Σ_{p<j} (pl - δ p0)` from site `start` upward and
/// `B_j = Σ_{p≥j} (pr - δ p0)` from site `end` downward.
fn sweep(panels: &Panels, start: usize, end: usize, delta: f64, a: &mut [f64], b: &mut [f64]) {
    let mut acc = 0.0;
    a[start] = 0.0;
    for p in start..end {
        acc += panels.pl[p] - delta * panels.p0[p];
        a[p + 1] = acc;
    }
    let mut acc = 0.0;
    b[end] = 0.0;
    for p in (start..end).rev() {
        acc += panels.pr[p] - delta * panels.p0[p];
        b[p] = acc;
    }
}

fn plain_values(
    iv: Interval,
    mesh: &Mesh,
    panels: &Panels,
    points: &[Site],
    tails: (f64, f64),
) -> Vec<f64> {
    let n = mesh.sites.len();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    sweep(panels, 0, n - 1, 0.0, &mut a, &mut b);
    points
        .iter()
        .map(|s| {
            if s.dist() == 0.0 {
                return 0.0;
            }
            let j = mesh.index_of(s);
            (s.from_right * (a[j] + tails.0) + s.from_left * (b[j] + tails.1)) / iv.length()
        })
        .collect()
}

fn check_agreement(hi: &[f64], lo: &[f64], tol: f64, what: &str) -> Result<()> {
    let scale = hi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (i, (&h, &l)) in hi.iter().zip(lo).enumerate() {
        if (h - l).abs() > tol * (h.abs() + 1e-6 * scale) {
            return Err(Error::ResolutionInsufficient {
                reason: format!("{what}: quadrature orders disagree at point {i} ({h:e} vs {l:e})"),
                hint: "add breakpoints at the oscillation zeros or raise base_panels".into(),
            });
        }
    }
    Ok(())
}

/// `G g` at `points`, with the divergence surrogate applied to `g₊` and `g₋`.
pub fn layer_potential<F: Fn(Site) -> f64>(
    iv: Interval,
    g: F,
    points: &[Site],
    opts: &LayerOptions,
) -> Result<LayerPotential> {
    let mesh = Mesh::build(iv, opts, points)?;
    let cutoff = opts.cutoff(iv);
    let panels = integrate(iv, &g, &mesh, opts.order, cutoff)?;
    let pos_inf = (0..2).any(|e| shells_diverge(&panels.shells[e], true));
    let neg_inf = (0..2).any(|e| shells_diverge(&panels.shells[e], false));
    let npanels = mesh.sites.len() - 1;
    if pos_inf || neg_inf {
        let fill = match (pos_inf, neg_inf) {
            (true, true) => f64::NAN,
            (true, false) => f64::INFINITY,
            _ => f64::NEG_INFINITY,
        };
        let values: Vec<f64> = points
            .iter()
            .map(|s| if s.dist() == 0.0 { 0.0 } else { fill })
            .collect();
        let status = values
            .iter()
            .map(|v| {
                if v.is_nan() {
                    NodeStatus::Undefined
                } else {
                    NodeStatus::WellDefined
                }
            })
            .collect();
        return Ok(LayerPotential {
            values,
            status,
            positive_part_infinite: pos_inf,
            negative_part_infinite: neg_inf,
            tails: (0.0, 0.0),
            panels: npanels,
        });
    }
    let tails = match opts.tail {
        TailModel::None => (0.0, 0.0),
        TailModel::Geometric => (
            geometric_tail(&panels.shells[0]),
            geometric_tail(&panels.shells[1]),
        ),
    };
    let values = plain_values(iv, &mesh, &panels, points, tails);
    if let Some(lo_order) = opts.check_order {
        let lo = integrate(iv, &g, &mesh, lo_order, cutoff)?;
        let lo_tails = match opts.tail {
            TailModel::None => (0.0, 0.0),
            TailModel::Geometric => (geometric_tail(&lo.shells[0]), geometric_tail(&lo.shells[1])),
        };
        let lo_values = plain_values(iv, &mesh, &lo, points, lo_tails);
        check_agreement(&values, &lo_values, opts.check_tol, "potential")?;
    }
    Ok(LayerPotential {
        status: vec![NodeStatus::WellDefined; values.len()],
        values,
        positive_part_infinite: false,
        negative_part_infinite: false,
        tails,
        panels: npanels,
    })
}

fn improper_values(
    iv: Interval,
    mesh: &Mesh,
    panels: &Panels,
    points: &[Site],
    deltas: &[f64],
) -> Vec<Vec<f64>> {
    let n = mesh.sites.len();
    let len = iv.length();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let idx: Vec<Option<usize>> = points
        .iter()
        .map(|s| (s.dist() > 0.0).then(|| mesh.index_of(s)))
        .collect();
    let mut out = vec![Vec::with_capacity(deltas.len()); points.len()];
    for &delta in deltas {
        let start = mesh.index_of(&Site::near_left(iv, delta));
        let end = mesh.index_of(&Site::near_right(iv, delta));
        sweep(panels, start, end, delta, &mut a, &mut b);
        for (p, s) in points.iter().enumerate() {
            let v = match idx[p] {
                Some(j) if s.dist() > delta => {
                    ((s.from_right - delta) * a[j] + (s.from_left - delta) * b[j])
                        / (len - 2.0 * delta)
                }
                _ => 0.0,
            };
            out[p].push(v);
        }
    }
    out
}

/// The exhaustion sequence over `Ω_m = (a + δ_m, b - δ_m)`,
/// `δ_m = L / 2^{m+2}`, each level with the kernel of its own subinterval.
///
/// The cutoff of `opts` must not exceed the smallest `δ_m`; nothing below
/// `δ_m` is ever integrated, so no tail model is involved.
pub fn layer_potential_improper<F: Fn(Site) -> f64>(
    iv: Interval,
    g: F,
    points: &[Site],
    levels: usize,
    opts: &LayerOptions,
) -> Result<LayerImproper> {
    if levels < 2 {
        return Err(Error::Domain(format!("need at least 2 exhaustion levels, got {levels}")));
    }
    let len = iv.length();
    let deltas: Vec<f64> = (0..levels).map(|m| len / 2f64.powi(m as i32 + 2)).collect();
    let cutoff = opts.cutoff(iv);
    if deltas[levels - 1] < cutoff {
        return Err(Error::Domain(format!(
            "exhaustion reaches {:e}, below the cutoff {cutoff:e}",
            deltas[levels - 1]
        )));
    }
    let mut required: Vec<Site> = points.iter().copied().filter(|s| s.dist() > 0.0).collect();
    for &d in &deltas {
        required.push(Site::near_left(iv, d));
        required.push(Site::near_right(iv, d));
    }
    let mesh = Mesh::build(iv, opts, &required)?;
    let panels = integrate(iv, &g, &mesh, opts.order, cutoff)?;
    let sequences = improper_values(iv, &mesh, &panels, points, &deltas);
    if let Some(lo_order) = opts.check_order {
        let lo = integrate(iv, &g, &mesh, lo_order, cutoff)?;
        let lo_seq = improper_values(iv, &mesh, &lo, points, &deltas);
        let flat_hi: Vec<f64> = sequences.iter().flatten().copied().collect();
        let flat_lo: Vec<f64> = lo_seq.iter().flatten().copied().collect();
        check_agreement(&flat_hi, &flat_lo, opts.check_tol, "exhaustion")?;
    }
    Ok(LayerImproper {
        deltas,
        sequences,
        panels: mesh.sites.len() - 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_grid;

    #[test]
    fn constant_source() {
        let iv = Interval::symmetric();
        let g = make_grid(iv, 11).unwrap();
        let pts = Site::nodes(&g);
        let r = layer_potential(iv, |_| 1.0, &pts, &LayerOptions::default()).unwrap();
        for (s, v) in pts.iter().zip(&r.values) {
            let h = 0.5 * s.from_left * s.from_right;
            assert!((v - h).abs() <= 1e-14, "{} {} {}", s.x, v, h);
        }
    }

    #[test]
    fn integrable_power_singularity() {
        // g = d^{-3/2} on (0,1) near the left end only: G g(x) has a closed form
        let iv = Interval::unit();
        let x = 0.25;
        let g = |s: Site| s.from_left.powf(-1.5);
        let opts = LayerOptions {
            grading_levels: 60,
            ..LayerOptions::default()
        };
        let r = layer_potential(iv, g, &[Site::at(iv, x)], &opts).unwrap();
        // (1-x)∫_0^x y^{-1/2} dy + x ∫_x^1 (1-y) y^{-3/2} dy
        let a = (1.0 - x) * 2.0 * x.sqrt();
        let b = x * ((2.0 / x.sqrt() - 2.0) - (2.0 - 2.0 * x.sqrt()));
        assert!((r.values[0] - (a + b)).abs() < 1e-8, "{} vs {}", r.values[0], a + b);
    }

    #[test]
    fn critical_singularity_flagged() {
        let iv = Interval::unit();
        let pts = [Site::at(iv, 0.3)];
        let pos = layer_potential(iv, |s| s.dist().powi(-2), &pts, &LayerOptions::default()).unwrap();
        assert_eq!(pos.values[0], f64::INFINITY);
        assert!(pos.positive_part_infinite);
        let mixed = layer_potential(
            iv,
            |s| if s.from_left < s.from_right { s.dist().powi(-2) } else { -s.dist().powi(-2) },
            &pts,
            &LayerOptions::default(),
        )
        .unwrap();
        assert!(mixed.values[0].is_nan());
        assert_eq!(mixed.status[0], NodeStatus::Undefined);
    }

    #[test]
    fn improper_converges_for_integrable_source() {
        let iv = Interval::unit();
        let pts = [Site::at(iv, 0.4)];
        let opts = LayerOptions {
            grading_levels: 30,
            ..LayerOptions::default()
        };
        let g = |s: Site| s.from_left.powf(-0.5);
        let imp = layer_potential_improper(iv, g, &pts, 20, &opts).unwrap();
        let full = layer_potential(iv, g, &pts, &opts).unwrap();
        let seq = &imp.sequences[0];
        for w in seq.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!((seq[19] - full.values[0]).abs() < 1e-4);
        assert!(layer_potential_improper(iv, g, &pts, 40, &opts).is_err());
    }

    #[test]
    fn site_precision_near_right_end() {
        let iv = Interval::unit();
        let s = Site::near_right(iv, 1e-13);
        assert_eq!(s.from_right, 1e-13);
        assert_eq!(Site::at(iv, 0.25).from_left, 0.25);
    }
}
