//! Finite-difference solver for `-u'' + V u^q = f` with Dirichlet data, and
//! discrete checks of sub/supersolutions and of the `φ`-substitution
//! identity.
//!
//! All second derivatives use [`second_difference`], the central stencil with
//! a `Δx²` denominator.

use serde::Serialize;

use crate::domain::{first_difference, second_difference, GridFn};
use crate::error::{Error, Result};
use crate::estimates::{Problem, SCHEMA};
use crate::green::potential;
use crate::linalg::solve_tridiagonal;
use crate::phi::PhiFamily;

/// Newton iterations allowed before giving up.
pub const MAX_NEWTON_ITERATIONS: usize = 200;

/// Step halvings allowed per Newton iteration.
pub const MAX_HALVINGS: usize = 40;

/// Positivity floor of the default start for `q < 0`.
pub const INIT_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub solution: GridFn,
    pub residual_norm: f64,
    pub iterations: usize,
    pub damping_events: usize,
    pub converged: bool,
    /// Sup-norm residual before each iteration and after the last.
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NewtonSummary {
    pub schema: &'static str,
    pub residual_norm: f64,
    pub iterations: usize,
    pub damping_events: usize,
    pub converged: bool,
}

impl NewtonReport {
    pub fn summary(&self) -> NewtonSummary {
        NewtonSummary {
            schema: SCHEMA,
            residual_norm: self.residual_norm,
            iterations: self.iterations,
            damping_events: self.damping_events,
            converged: self.converged,
        }
    }
}

fn needs_positive(q: f64) -> bool {
    q < 0.0 || q.fract() != 0.0
}

/// `u^q` with integer exponents evaluated exactly for any sign.
fn pow(u: f64, q: f64) -> f64 {
    if q.fract() == 0.0 && q.abs() < 64.0 {
        u.powi(q as i32)
    } else {
        u.powf(q)
    }
}

/// `-D²u + V u^q - f` at interior nodes; 0 at the boundary.
pub fn fd_residual(p: &Problem, u: &GridFn) -> GridFn {
    let d2 = second_difference(u);
    let g = *u.grid();
    let mut r = vec![0.0; g.len()];
    for i in g.interior() {
        let v = p.v.get(i);
        let src = if v == 0.0 { 0.0 } else { v * pow(u.get(i), p.q) };
        r[i] = -d2.get(i) + src - p.f.get(i);
    }
    GridFn::new(g, r).expect("same grid")
}

fn sup_inside(r: &GridFn) -> f64 {
    let m = r.sup_norm_inside();
    if r.grid().interior().any(|i| r.get(i).is_nan()) {
        f64::NAN
    } else {
        m
    }
}

/// The default start: `h = G f`, floored at [`INIT_FLOOR`] for `q < 0`.
pub fn default_init(p: &Problem) -> Result<GridFn> {
    let h = potential(&p.kernel, &p.f)?.value;
    if p.q < 0.0 {
        let g = *h.grid();
        let vals = (0..g.len())
            .map(|i| if g.is_boundary(i) { h.get(i) } else { h.get(i).max(INIT_FLOOR) })
            .collect();
        GridFn::new(g, vals)
    } else {
        Ok(h)
    }
}

/// Damped Newton on the central-difference discretization with boundary
/// values `boundary = (u(a), u(b))`.
pub fn fd_solve(p: &Problem, boundary: (f64, f64), init: &GridFn, tol: f64) -> Result<NewtonReport> {
    let g = *p.grid();
    init.check_same_grid(&p.v)?;
    let n = g.len();
    if let Some(i) = g
        .interior()
        .find(|&i| !p.v.get(i).is_finite() || !p.f.get(i).is_finite())
    {
        return Err(Error::Domain(format!("V or f is not finite at interior node {i}")));
    }
    let positive = needs_positive(p.q);
    if positive && g.interior().any(|i| !(init.get(i) > 0.0)) {
        return Err(Error::InfeasibleStart(
            "start must be positive inside for q < 0 or non-integer q".into(),
        ));
    }
    if positive && (boundary.0 < 0.0 || boundary.1 < 0.0) {
        return Err(Error::InfeasibleStart("negative boundary data".into()));
    }
    let mut vals = init.values().to_vec();
    vals[0] = boundary.0;
    vals[n - 1] = boundary.1;
    let mut u = GridFn::new(g, vals)?;
    let dx2 = g.spacing() * g.spacing();
    let m = n - 2;
    let lap_off = vec![-1.0 / dx2; m];
    let lap_diag = vec![2.0 / dx2; m];
    // residual measured through (-D²)^{-1}, the natural scaling of the
    // integral form; raw residuals near the boundary are O(Δx^{-2}) larger
    let merit = |r: &GridFn| -> Result<f64> {
        let rhs: Vec<f64> = (1..n - 1).map(|i| r.get(i)).collect();
        if rhs.iter().any(|x| x.is_nan()) {
            return Ok(f64::NAN);
        }
        let s = solve_tridiagonal(&lap_off, &lap_diag, &lap_off, &rhs)?;
        Ok(s.iter().fold(0.0f64, |a, x| a.max(x.abs())))
    };
    let mut res = fd_residual(p, &u);
    let mut norm = sup_inside(&res);
    let mut level = merit(&res)?;
    let mut history = vec![norm];
    let mut damping = 0usize;
    let mut iterations = 0usize;
    let q = p.q;
    while !(norm <= tol) && iterations < MAX_NEWTON_ITERATIONS {
        let diag: Vec<f64> = (1..n - 1)
            .map(|i| {
                let v = p.v.get(i);
                let d = if v == 0.0 { 0.0 } else { q * v * pow(u.get(i), q - 1.0) };
                2.0 / dx2 + d
            })
            .collect();
        let rhs: Vec<f64> = (1..n - 1).map(|i| -res.get(i)).collect();
        let newton = solve_tridiagonal(&lap_off, &diag, &lap_off, &rhs)?;
        // the Picard direction -(-D²)^{-1}F is the fallback when the
        // Jacobian is indefinite and Newton points uphill
        let picard = solve_tridiagonal(&lap_off, &lap_diag, &lap_off, &rhs)?;
        let mut accepted = None;
        let mut saw_positive = false;
        'dirs: for delta in [&newton, &picard] {
            let mut lambda = 1.0;
            for _ in 0..=MAX_HALVINGS {
                let mut trial = u.clone();
                for i in 1..n - 1 {
                    trial.values_mut()[i] += lambda * delta[i - 1];
                }
                let feasible = !positive || g.interior().all(|i| trial.get(i) > 0.0);
                if feasible {
                    saw_positive = true;
                    let r = fd_residual(p, &trial);
                    let lv = merit(&r)?;
                    let rn = sup_inside(&r);
                    if lv <= (1.0 - 1e-4 * lambda) * level || rn <= tol {
                        accepted = Some((trial, r, rn, lv));
                        break 'dirs;
                    }
                }
                lambda *= 0.5;
                damping += 1;
            }
        }
        iterations += 1;
        match accepted {
            Some((t, r, rn, lv)) => {
                u = t;
                res = r;
                norm = rn;
                level = lv;
                history.push(norm);
            }
            None if !saw_positive => {
                return Err(Error::InfeasibleStart(
                    "every damped step leaves the positive cone".into(),
                ))
            }
            // no descent left: rounding floor or a genuine stall
            None => break,
        }
    }
    Ok(NewtonReport {
        converged: norm <= tol,
        solution: u,
        residual_norm: norm,
        iterations,
        damping_events: damping,
        residual_history: history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubSuperCheck {
    /// `-D²sub + V sub^q ≤ f + tol` per node.
    pub sub_ok: Vec<bool>,
    /// `-D²sup + V sup^q ≥ f - tol` per node.
    pub super_ok: Vec<bool>,
}

impl SubSuperCheck {
    pub fn all_ok(&self) -> bool {
        self.sub_ok.iter().chain(&self.super_ok).all(|&b| b)
    }
}

/// Check an ordered pair of discrete sub- and supersolutions.
pub fn check_sub_super(sub: &GridFn, sup: &GridFn, p: &Problem, tol: f64) -> Result<SubSuperCheck> {
    sub.check_same_grid(sup)?;
    sub.check_same_grid(&p.v)?;
    let g = *sub.grid();
    let unordered: Vec<usize> = (0..g.len())
        .filter(|&i| !(sub.get(i) <= sup.get(i) + tol))
        .collect();
    if !unordered.is_empty() {
        return Err(Error::NotOrdered { nodes: unordered });
    }
    let rs = fd_residual(p, sub);
    let rp = fd_residual(p, sup);
    let mut sub_ok = vec![true; g.len()];
    let mut super_ok = vec![true; g.len()];
    for i in g.interior() {
        sub_ok[i] = rs.get(i) <= tol;
        super_ok[i] = rp.get(i) >= -tol;
    }
    Ok(SubSuperCheck { sub_ok, super_ok })
}

/// Largest interior discrepancy between the two sides of
/// `(hφ(v))'' = φ'(v)(hv)'' + φ''(v)(v')² h + (φ(v) - vφ'(v)) h''`
/// with every derivative taken by central differences.
pub fn lemma41_identity_check(h: &GridFn, v: &GridFn, fam: &PhiFamily) -> Result<f64> {
    h.check_same_grid(v)?;
    let g = *h.grid();
    let mut phi = vec![0.0; g.len()];
    for i in 0..g.len() {
        phi[i] = fam.eval(v.get(i))?;
    }
    let hphi = h.zip_with(&GridFn::new(g, phi.clone())?, |a, b| a * b)?;
    let hv = h.zip_with(v, |a, b| a * b)?;
    let lhs = second_difference(&hphi);
    let l_hv = second_difference(&hv);
    let l_h = second_difference(h);
    let dv = first_difference(v);
    let mut worst = 0.0f64;
    for i in g.interior() {
        let s = v.get(i);
        let (d1, d2) = fam.derivs(s)?;
        let rhs = d1 * l_hv.get(i) + d2 * dv.get(i).powi(2) * h.get(i) + (phi[i] - s * d1) * l_h.get(i);
        worst = worst.max((lhs.get(i) - rhs).abs());
    }
    Ok(worst)
}
