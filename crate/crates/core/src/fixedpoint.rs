//! Monotone iteration for `u + K(u^q V) = h` and the scalar comparison
//! recurrence that controls it.
//!
//! From `u_0 = h` the iteration `u_{k+1} = h - K(u_k^q V)` decreases to the
//! maximal solution when `q < 0, V ≥ 0`, and increases to the minimal
//! solution when `q > 1, V ≤ 0`, provided `±K(h^q V) ≤ a*·h`. At the sharp
//! constant itself the contraction degenerates and Picard steps converge like
//! `1/k`; once the observed rate stalls the solver switches to Newton steps on
//! the same discrete equation, kept monotone by clamping.

use serde::Serialize;

use crate::domain::GridFn;
use crate::error::{Error, Result};
use crate::green::Kernel;
use crate::linalg::solve_tridiagonal;

/// Sign pattern under which the iteration is monotone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotoneRegime {
    /// `q > 1`, `V ≤ 0`: iterates increase to the minimal solution.
    Increasing,
    /// `q < 0`, `V ≥ 0`: iterates decrease to the maximal solution.
    Decreasing,
}

impl MonotoneRegime {
    pub fn of(q: f64) -> Result<MonotoneRegime> {
        if q > 1.0 && q.is_finite() {
            Ok(MonotoneRegime::Increasing)
        } else if q < 0.0 && q.is_finite() {
            Ok(MonotoneRegime::Decreasing)
        } else {
            Err(Error::Domain(format!(
                "monotone iteration needs q > 1 or q < 0, got {q}"
            )))
        }
    }
}

/// `(a*, x*)`: `a* = (1 - 1/q)^q / |1 - q|` and `x* = 1 / (1 - 1/q)`.
///
/// For `q < 0`, `x = 1 - a x^q` has a root in `(0, 1)` iff `a ≤ a*`, with the
/// double root `x*` at `a = a*`. For `q > 1`, `x = 1 + a x^q` has a root in
/// `(1, ∞)` iff `a ≤ a*`, again touching at `x*`.
pub fn sharp_constants(q: f64, regime: MonotoneRegime) -> Result<(f64, f64)> {
    if MonotoneRegime::of(q)? != regime {
        return Err(Error::Domain(format!("q = {q} is not in the {regime:?} regime")));
    }
    let c = (1.0 - 1.0 / q).powf(q);
    let a_star = match regime {
        MonotoneRegime::Increasing => c / (q - 1.0),
        MonotoneRegime::Decreasing => c / (1.0 - q),
    };
    Ok((a_star, 1.0 / (1.0 - 1.0 / q)))
}

/// `b_0 = 1`, `b_{k+1} = 1 - a·b_k^q` for `q < 0`, returning `b_0..=b_{k_max}`.
pub fn scalar_recurrence(q: f64, a: f64, k_max: usize) -> Result<Vec<f64>> {
    let (a_star, _) = sharp_constants(q, MonotoneRegime::Decreasing)?;
    if !(a > 0.0) {
        return Err(Error::Domain(format!("a = {a} must be positive")));
    }
    if a > a_star {
        return Err(Error::DivergingBracket { a, a_star });
    }
    Ok(comparison_sequence(q, a, MonotoneRegime::Decreasing, k_max))
}

fn comparison_sequence(q: f64, a: f64, regime: MonotoneRegime, k_max: usize) -> Vec<f64> {
    let sign = match regime {
        MonotoneRegime::Decreasing => -1.0,
        MonotoneRegime::Increasing => 1.0,
    };
    let mut b = Vec::with_capacity(k_max + 1);
    b.push(1.0);
    for k in 0..k_max {
        let prev: f64 = b[k];
        b.push(1.0 + sign * a * prev.powf(q));
    }
    b
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Absolute residual tolerance; defaults to `1e-10 · sup h`.
    pub tol: Option<f64>,
    pub k_max: usize,
    /// Start other than `h`. Monotonicity is only enforced from `h`.
    pub start: Option<GridFn>,
    /// Keep every `record_stride`-th iterate (the first and last are kept).
    pub record_stride: usize,
    /// Switch to Newton steps once Picard stalls.
    pub newton_polish: bool,
    /// Newton stops once its step is below this multiple of `sup h`.
    pub step_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: None,
            k_max: 10_000,
            start: None,
            record_stride: 1,
            newton_polish: true,
            step_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub regime: MonotoneRegime,
    pub iterates: Vec<GridFn>,
    /// Iteration index of each recorded iterate.
    pub iterate_steps: Vec<usize>,
    /// `sup |u_k + K(u_k^q V) - h|` for every step taken.
    pub residuals: Vec<f64>,
    /// Comparison sequence for the Picard steps, with `a` measured as the
    /// largest ratio `±K(h^q V)/h`.
    pub b_sequence: Vec<f64>,
    pub a_measured: f64,
    pub converged: bool,
    pub k_stop: usize,
    pub picard_steps: usize,
    pub newton_steps: usize,
    /// Nodes moved back into the monotone bracket.
    pub clamp_events: usize,
    pub solution: GridFn,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceStep {
    pub k: usize,
    pub residual: f64,
    pub b_k: Option<f64>,
}

impl IterationTrace {
    /// One `{k, residual, b_k}` record per step; `b_k` is absent on Newton steps.
    pub fn steps(&self) -> Vec<TraceStep> {
        self.residuals
            .iter()
            .enumerate()
            .map(|(k, &residual)| TraceStep {
                k,
                residual,
                b_k: self.b_sequence.get(k).copied(),
            })
            .collect()
    }
}

struct Operator<'a> {
    kernel: &'a Kernel,
    h: &'a GridFn,
    v: &'a GridFn,
    q: f64,
}

impl Operator<'_> {
    /// `K(u^q V)` at every node.
    fn k_source(&self, u: &[f64]) -> Vec<f64> {
        let g = self.h.grid();
        let mut s = vec![0.0; g.len()];
        for i in g.interior() {
            let v = self.v.get(i);
            s[i] = if v == 0.0 { 0.0 } else { u[i].powf(self.q) * v };
        }
        self.kernel.apply(g, &s)
    }

    /// `T u = h - K(u^q V)` on interior nodes; boundary values copied from `h`.
    fn picard(&self, u: &[f64]) -> Vec<f64> {
        let ks = self.k_source(u);
        let g = self.h.grid();
        let mut out = self.h.values().to_vec();
        for i in g.interior() {
            out[i] = self.h.get(i) - ks[i];
        }
        out
    }

    fn residual(&self, u: &[f64]) -> f64 {
        let t = self.picard(u);
        self.h
            .grid()
            .interior()
            .map(|i| (u[i] - t[i]).abs())
            .fold(0.0, f64::max)
    }

    /// Newton correction for `F(u) = u + K(u^q V) - h = 0` at interior nodes.
    fn newton_step(&self, u: &[f64]) -> Result<Vec<f64>> {
        let g = *self.h.grid();
        let n = g.len();
        let m = n - 2;
        let q = self.q;
        let dq: Vec<f64> = (1..n - 1)
            .map(|i| {
                let v = self.v.get(i);
                if v == 0.0 { 0.0 } else { q * u[i].powf(q - 1.0) * v }
            })
            .collect();
        let mut delta = vec![0.0; n];
        match self.kernel {
            Kernel::ClosedForm(_) => {
                // the discrete K is the inverse of -D² with zero end values, so
                // F = 0 becomes -D²(u - h) + u^q V = 0, a tridiagonal system
                let dx2 = g.spacing() * g.spacing();
                let w: Vec<f64> = (0..n)
                    .map(|i| if g.is_boundary(i) { 0.0 } else { u[i] - self.h.get(i) })
                    .collect();
                let mut rhs = vec![0.0; m];
                for i in 1..n - 1 {
                    let lap = (2.0 * w[i] - w[i - 1] - w[i + 1]) / dx2;
                    let v = self.v.get(i);
                    let src = if v == 0.0 { 0.0 } else { u[i].powf(q) * v };
                    rhs[i - 1] = -(lap + src);
                }
                let off = vec![-1.0 / dx2; m];
                let diag: Vec<f64> = dq.iter().map(|d| 2.0 / dx2 + d).collect();
                let x = solve_tridiagonal(&off, &diag, &off, &rhs)?;
                delta[1..n - 1].copy_from_slice(&x);
            }
            Kernel::Tabulated { .. } => {
                let t = self.picard(u);
                let mut jac = nalgebra::DMatrix::<f64>::identity(m, m);
                let unit_cols = |j: usize| {
                    let mut e = vec![0.0; n];
                    e[j] = 1.0;
                    self.kernel.apply(&g, &e)
                };
                for j in 1..n - 1 {
                    let col = unit_cols(j);
                    for i in 1..n - 1 {
                        jac[(i - 1, j - 1)] += col[i] * dq[j - 1];
                    }
                }
                let rhs = nalgebra::DVector::from_iterator(m, (1..n - 1).map(|i| t[i] - u[i]));
                let x = jac
                    .lu()
                    .solve(&rhs)
                    .ok_or_else(|| Error::SolverFailure("singular Newton matrix".into()))?;
                for i in 1..n - 1 {
                    delta[i] = x[i - 1];
                }
            }
        }
        Ok(delta)
    }
}

/// Solve `u + K(u^q V) = h` with default options except `tol` and `k_max`.
pub fn solve_integral_equation(
    kernel: &Kernel,
    h: &GridFn,
    v: &GridFn,
    q: f64,
    tol: f64,
    k_max: usize,
) -> Result<IterationTrace> {
    let opts = SolverOptions {
        tol: Some(tol),
        k_max,
        ..SolverOptions::default()
    };
    solve_integral_equation_with(kernel, h, v, q, &opts)
}

pub fn solve_integral_equation_with(
    kernel: &Kernel,
    h: &GridFn,
    v: &GridFn,
    q: f64,
    opts: &SolverOptions,
) -> Result<IterationTrace> {
    let regime = MonotoneRegime::of(q)?;
    h.check_same_grid(v)?;
    kernel.check_grid(h.grid())?;
    let g = *h.grid();
    let n = g.len();
    if let Some(i) = g.interior().find(|&i| !(h.get(i) > 0.0 && h.get(i).is_finite())) {
        return Err(Error::InvalidH(format!("h = {} at interior node {i}", h.get(i))));
    }
    let wrong_sign: Vec<usize> = g
        .interior()
        .filter(|&i| {
            let x = v.get(i);
            match regime {
                MonotoneRegime::Decreasing => !(x >= 0.0 && x.is_finite()),
                MonotoneRegime::Increasing => !(x <= 0.0 && x.is_finite()),
            }
        })
        .collect();
    if !wrong_sign.is_empty() {
        return Err(Error::InvalidSign { nodes: wrong_sign });
    }
    let op = Operator { kernel, h, v, q };
    let (a_star, x_star) = sharp_constants(q, regime)?;
    let khv = op.k_source(h.values());
    let sign = match regime {
        MonotoneRegime::Decreasing => 1.0,
        MonotoneRegime::Increasing => -1.0,
    };
    let mut violated = Vec::new();
    let mut a_measured = 0.0f64;
    for i in g.interior() {
        let ratio = sign * khv[i] / h.get(i);
        a_measured = a_measured.max(ratio);
        if ratio > a_star * (1.0 + 1e-12) {
            violated.push(i);
        }
    }
    if !violated.is_empty() {
        return Err(Error::PreconditionFailed {
            reason: format!(
                "{}K(h^q V) exceeds a*·h = {a_star}·h",
                if sign > 0.0 { "" } else { "-" }
            ),
            nodes: violated,
        });
    }
    let sup_h = h.sup_norm_inside();
    let tol = opts.tol.unwrap_or(1e-10 * sup_h);
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    let monotone = opts.start.is_none();
    let mut u: Vec<f64> = match &opts.start {
        Some(s) => {
            s.check_same_grid(h)?;
            let mut u = s.values().to_vec();
            u[0] = h.get(0);
            u[n - 1] = h.get(n - 1);
            if g.interior().any(|i| !(u[i] > 0.0)) {
                return Err(Error::InfeasibleStart("start must be positive inside".into()));
            }
            u
        }
        None => h.values().to_vec(),
    };

    let stride = opts.record_stride.max(1);
    let mut iterates = vec![GridFn::new(g, u.clone())?];
    let mut iterate_steps = vec![0];
    let mut residuals = Vec::new();
    let mut clamp_events = 0usize;
    let mut picard_steps = 0usize;
    let mut newton_steps = 0usize;
    let mut slow_run = 0usize;
    let mut converged = false;
    let mut use_newton = false;
    let mut k = 0usize;
    let mut prev_step = f64::INFINITY;
    let mut stagnant = 0usize;

    // keep u inside the proven bracket and moving in its monotone direction
    let clamp = |next: &mut [f64], cur: &[f64], events: &mut usize| {
        for i in g.interior() {
            let mut x = next[i];
            if monotone {
                x = match regime {
                    MonotoneRegime::Decreasing => x.min(cur[i]).min(h.get(i)),
                    MonotoneRegime::Increasing => x.max(cur[i]).max(h.get(i)),
                };
            }
            if !(x > 0.0) {
                x = match regime {
                    MonotoneRegime::Decreasing => x_star * h.get(i),
                    MonotoneRegime::Increasing => h.get(i),
                };
            }
            if x != next[i] {
                *events += 1;
                next[i] = x;
            }
        }
    };

    loop {
        let t = op.picard(&u);
        let r = g.interior().map(|i| (u[i] - t[i]).abs()).fold(0.0, f64::max);
        residuals.push(r);
        if use_newton {
            if r <= tol && prev_step <= opts.step_tol * sup_h {
                converged = true;
                break;
            }
        } else if r <= tol {
            converged = true;
            break;
        }
        if k >= opts.k_max {
            break;
        }
        if !use_newton && opts.newton_polish && k >= 1 {
            let rate = r / residuals[k - 1];
            slow_run = if rate > 0.9 { slow_run + 1 } else { 0 };
            if k >= 20 && slow_run >= 10 {
                use_newton = true;
            }
        }
        let mut next;
        if use_newton {
            let delta = op.newton_step(&u)?;
            next = u.clone();
            for i in g.interior() {
                next[i] += delta[i];
            }
            clamp(&mut next, &u, &mut clamp_events);
            let step = g
                .interior()
                .map(|i| (next[i] - u[i]).abs())
                .fold(0.0, f64::max);
            if step >= prev_step && r <= tol {
                stagnant += 1;
            }
            prev_step = step;
            newton_steps += 1;
        } else {
            next = t;
            clamp(&mut next, &u, &mut clamp_events);
            picard_steps += 1;
        }
        u = next;
        k += 1;
        if k.is_multiple_of(stride) {
            iterates.push(GridFn::new(g, u.clone())?);
            iterate_steps.push(k);
        }
        if stagnant >= 3 {
            // Newton has reached rounding level; accept if the residual holds
            let r = op.residual(&u);
            residuals.push(r);
            converged = r <= tol;
            break;
        }
    }
    if iterate_steps.last() != Some(&k) {
        iterates.push(GridFn::new(g, u.clone())?);
        iterate_steps.push(k);
    }
    let b_sequence = comparison_sequence(q, a_measured, regime, picard_steps);
    Ok(IterationTrace {
        regime,
        iterates,
        iterate_steps,
        residuals,
        b_sequence,
        a_measured,
        converged,
        k_stop: k,
        picard_steps,
        newton_steps,
        clamp_events,
        solution: GridFn::new(g, u)?,
        tol,
    })
}
