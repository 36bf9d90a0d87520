//! `greenbound` command-line front end.
//!
//! Exit codes: 0 success, 1 a precondition or condition fails, 2 a solver
//! did not converge, 3 malformed flags, config or input files, 4 an output
//! file could not be written.

mod config;
mod output;

use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use greenbound::bvp::{default_init, fd_residual, fd_solve, lemma41_identity_check};
use greenbound::estimates::{thm1_bound, thm4_conditions, Problem, Regime, SCHEMA};
use greenbound::fixedpoint::{
    scalar_recurrence, sharp_constants, solve_integral_equation_with, MonotoneRegime,
    SolverOptions,
};
use greenbound::scenarios::{build_scenario, run_scenario, ScenarioParams, ScenarioSpec};
use greenbound::{make_grid, potential, Error, Grid, GridFn, Interval, Kernel, PhiFamily};

use config::{Builtin, Cli, Command, Opts, ScenarioId};
use output::{emit, to_json};

#[derive(Debug)]
pub enum Failure {
    Condition(String),
    NonConvergence(String),
    Config(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Condition(_) => 1,
            Failure::NonConvergence(_) => 2,
            Failure::Config(_) => 3,
            Failure::Io(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Condition(m) => write!(f, "condition failure: {m}"),
            Failure::NonConvergence(m) => write!(f, "no convergence: {m}"),
            Failure::Config(m) => write!(f, "malformed input: {m}"),
            Failure::Io(m) => write!(f, "output error: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::PreconditionFailed { .. }
            | Error::InvalidSign { .. }
            | Error::DivergingBracket { .. }
            | Error::NotOrdered { .. }
            | Error::InvalidH(_)
            | Error::DegenerateSource { .. }
            | Error::Domain(_)
            | Error::NotIntegrable(_)
            | Error::Indeterminate(_)
            | Error::InfeasibleStart(_) => Failure::Condition(m),
            Error::SolverFailure(_) | Error::ResolutionInsufficient { .. } => {
                Failure::NonConvergence(m)
            }
            Error::InvalidInterval { .. }
            | Error::InvalidGrid(_)
            | Error::GridMismatch(_)
            | Error::InvalidScenario(_)
            | Error::WindowTooSmall { .. }
            | Error::Parse(_) => Failure::Config(m),
            Error::Io(_) => Failure::Io(m),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(Failure::Config(String::new()).code());
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("greenbound: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cmd: &Command) -> Outcome {
    let o = cmd.opts().merged()?;
    o.validate()?;
    match cmd {
        Command::Bound(_) => bound(&o),
        Command::SolveIntegral(_) => solve_integral(&o),
        Command::SolveBvp(_) => solve_bvp(&o),
        Command::Scenario(_) => scenario(&o),
        Command::Recurrence(_) => recurrence(&o),
        Command::IdentityCheck(_) => identity_check(&o),
    }
}

fn missing(flag: &str, what: &str) -> Failure {
    Failure::Config(format!("--{flag} is required {what}"))
}

fn scenario_spec(o: &Opts, id: ScenarioId, q: f64) -> Result<ScenarioSpec, Failure> {
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| missing(flag, "for this scenario"));
    let params = match id {
        ScenarioId::Ex1 => ScenarioParams::Ex1 {
            alpha: need(o.alpha, "alpha")?,
        },
        ScenarioId::Ex2 => ScenarioParams::Ex2 {
            lambda: need(o.lambda, "lambda")?,
            beta: need(o.beta, "beta")?,
        },
        ScenarioId::Ex3 => ScenarioParams::Ex3 {
            beta: need(o.beta, "beta")?,
        },
        ScenarioId::Ex4 => ScenarioParams::Ex4 {
            lambda: need(o.lambda, "lambda")?,
            gamma: need(o.gamma, "gamma")?,
        },
    };
    Ok(ScenarioSpec::new(params, q, o.n())?)
}

/// A function given either as a CSV file or as a built-in expression.
enum Source {
    File(GridFn),
    Builtin(Builtin),
}

impl Source {
    fn on(&self, grid: &Grid) -> Result<GridFn, Failure> {
        match self {
            Source::File(g) if g.grid() == grid => Ok(g.clone()),
            Source::File(_) => Err(Failure::Config("file data cannot be resampled".into())),
            Source::Builtin(b) => {
                let len = grid.interval().length();
                let vals = (0..grid.len())
                    .map(|i| b.eval(grid.from_left(i) * grid.from_right(i) / len))
                    .collect();
                Ok(GridFn::new(*grid, vals)?)
            }
        }
    }
}

fn read_file(path: &Path, grid: Option<&Grid>) -> Result<GridFn, Failure> {
    let file = std::fs::File::open(path)
        .map_err(|e| Failure::Config(format!("cannot open {}: {e}", path.display())))?;
    let g = match grid {
        Some(g) => GridFn::read_csv_on(file, g),
        None => GridFn::read_csv(file),
    };
    g.map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

/// `V` and `f` from files or built-ins, with the grid taken from the first
/// file given, else from `--n` and `--interval`.
fn sources(o: &Opts) -> Result<(Grid, Source, Source), Failure> {
    if o.v_file.is_some() && o.v.is_some() {
        return Err(Failure::Config("give either --V-file or --V".into()));
    }
    if o.f_file.is_some() && o.f.is_some() {
        return Err(Failure::Config("give either --f-file or --f".into()));
    }
    let mut grid = None;
    let v = match (&o.v_file, &o.v) {
        (Some(p), _) => {
            let g = read_file(p, None)?;
            grid = Some(*g.grid());
            Source::File(g)
        }
        (None, Some(s)) => Source::Builtin(Builtin::parse("V", s)?),
        (None, None) => return Err(missing("V", "(or --V-file, or --scenario)")),
    };
    let f = match (&o.f_file, &o.f) {
        (Some(p), _) => {
            let g = read_file(p, grid.as_ref())?;
            grid = Some(*g.grid());
            Source::File(g)
        }
        (None, Some(s)) => Source::Builtin(Builtin::parse("f", s)?),
        (None, None) => Source::Builtin(Builtin::Const(1.0)),
    };
    let grid = match grid {
        Some(g) => g,
        None => {
            let (a, b) = o.interval()?;
            make_grid(Interval::new(a, b)?, o.n())?
        }
    };
    Ok((grid, v, f))
}

/// The problem and, for scenarios with a closed-form solution, that solution.
fn problem(o: &Opts, q: f64) -> Result<(Problem, Option<GridFn>), Failure> {
    if let Some(id) = o.scenario {
        if o.v_file.is_some() || o.v.is_some() || o.f_file.is_some() || o.f.is_some() {
            return Err(Failure::Config("--scenario fixes V and f".into()));
        }
        let spec = scenario_spec(o, id, q)?;
        return Ok(build_scenario(&spec)?);
    }
    let (grid, v, f) = sources(o)?;
    let p = Problem::new(q, v.on(&grid)?, f.on(&grid)?, Kernel::closed_form(grid.interval()))?;
    Ok((p, None))
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> greenbound::Result<()>) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn columns_csv(names: &[&str], cols: &[&[f64]]) -> Vec<u8> {
    let mut s = names.join(",");
    s.push('\n');
    for i in 0..cols[0].len() {
        let row: Vec<String> = cols.iter().map(|c| greenbound::domain::fmt_real(c[i])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s.into_bytes()
}

fn list(nodes: &[usize]) -> String {
    nodes.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

fn bound(o: &Opts) -> Outcome {
    let q = o.require_q()?;
    let (p, exact) = problem(o, q)?;
    let rep = if o.sufficient {
        thm4_conditions(&p)?
    } else {
        let u = match (p.regime(), exact) {
            (Regime::Sublinear, None) => {
                // the sublinear bound needs the support of u
                let r = fd_solve(&p, (0.0, 0.0), &default_init(&p)?, o.tol.unwrap_or(1e-9))?;
                if !r.converged {
                    return Err(Failure::NonConvergence(format!(
                        "support solve stopped at residual {:e}",
                        r.residual_norm
                    )));
                }
                Some(r.solution)
            }
            (_, u) => u,
        };
        thm1_bound(&p, u.as_ref())?
    };
    let csv = csv_bytes(|w| rep.write_csv(w))?;
    let json = to_json(&rep.summary())?;
    emit(o.out.as_deref(), o.format(), &csv, &json)?;
    let bad = rep.violated_nodes();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Condition(format!(
            "bracket 1 + (q-1)G(h^q V)/h <= 0 at {} node(s): {}",
            bad.len(),
            list(&bad)
        )))
    }
}

fn solve_integral(o: &Opts) -> Outcome {
    let q = o.require_q()?;
    let (p, _) = problem(o, q)?;
    let h = p.h()?;
    let opts = SolverOptions {
        tol: o.tol,
        k_max: o.kmax.unwrap_or(SolverOptions::default().k_max),
        ..SolverOptions::default()
    };
    let t = solve_integral_equation_with(&p.kernel, &h, &p.v, q, &opts)?;
    let x = p.grid().nodes();
    let csv = columns_csv(&["x", "h", "u"], &[&x, h.values(), t.solution.values()]);
    let json = to_json(&json!({
        "schema": SCHEMA,
        "command": "solve-integral",
        "q": q,
        "n": x.len(),
        "regime": t.regime,
        "converged": t.converged,
        "tol": t.tol,
        "picard_steps": t.picard_steps,
        "newton_steps": t.newton_steps,
        "clamp_events": t.clamp_events,
        "a_measured": t.a_measured,
        "steps": t.steps(),
    }))?;
    emit(o.out.as_deref(), o.format(), &csv, &json)?;
    if t.converged {
        Ok(())
    } else {
        Err(Failure::NonConvergence(format!(
            "residual {:e} after {} steps",
            t.residuals.last().copied().unwrap_or(f64::NAN),
            t.residuals.len()
        )))
    }
}

fn solve_bvp(o: &Opts) -> Outcome {
    let q = o.require_q()?;
    let (p, exact) = problem(o, q)?;
    let r = fd_solve(&p, (0.0, 0.0), &default_init(&p)?, o.tol.unwrap_or(1e-9))?;
    let x = p.grid().nodes();
    let res = fd_residual(&p, &r.solution);
    let (csv, max_error) = match &exact {
        Some(e) => {
            let err = (0..x.len())
                .map(|i| (r.solution.get(i) - e.get(i)).abs())
                .fold(0.0, f64::max);
            let cols: [&[f64]; 4] = [&x, r.solution.values(), res.values(), e.values()];
            (columns_csv(&["x", "u", "residual", "exact"], &cols), Some(err))
        }
        None => (
            columns_csv(&["x", "u", "residual"], &[&x, r.solution.values(), res.values()]),
            None,
        ),
    };
    let mut summary = serde_json::to_value(r.summary()).map_err(|e| Failure::Io(e.to_string()))?;
    summary["command"] = json!("solve-bvp");
    summary["q"] = json!(q);
    summary["n"] = json!(x.len());
    summary["residual_history"] = json!(r.residual_history);
    if let Some(e) = max_error {
        summary["max_error_vs_exact"] = json!(e);
    }
    emit(o.out.as_deref(), o.format(), &csv, &to_json(&summary)?)?;
    if r.converged {
        Ok(())
    } else {
        Err(Failure::NonConvergence(format!(
            "Newton stopped at residual {:e} after {} iterations",
            r.residual_norm, r.iterations
        )))
    }
}

fn scenario(o: &Opts) -> Outcome {
    let id = o.scenario.ok_or_else(|| missing("scenario", ""))?;
    let q = match (o.q, id) {
        (Some(q), _) => q,
        // the first scenario is linear
        (None, ScenarioId::Ex1) => 1.0,
        (None, _) => return Err(missing("q", "for this scenario")),
    };
    let rep = run_scenario(&scenario_spec(o, id, q)?)?;
    let csv = csv_bytes(|w| rep.curves.write_csv(w))?;
    emit(o.out.as_deref(), o.format(), &csv, &to_json(&rep)?)
}

fn recurrence(o: &Opts) -> Outcome {
    let q = o.require_q()?;
    let a = o.a.ok_or_else(|| missing("a", ""))?;
    let k_max = o.kmax.unwrap_or(200);
    if MonotoneRegime::of(q).ok() != Some(MonotoneRegime::Decreasing) {
        return Err(Failure::Config(format!("the recurrence needs q < 0, got {q}")));
    }
    let (a_star, x_star) = sharp_constants(q, MonotoneRegime::Decreasing)?;
    let b = scalar_recurrence(q, a, k_max)?;
    let k: Vec<f64> = (0..b.len()).map(|k| k as f64).collect();
    let csv = columns_csv(&["k", "b"], &[&k, &b]);
    let json = to_json(&json!({
        "schema": SCHEMA,
        "command": "recurrence",
        "q": q,
        "a": a,
        "a_star": a_star,
        "x_star": x_star,
        "k_max": k_max,
        "last": b.last(),
        "b": b,
    }))?;
    emit(o.out.as_deref(), o.format(), &csv, &json)
}

/// Grids for the refinement study: `n` and two halvings of the spacing.
const IDENTITY_LEVELS: usize = 3;

fn identity_check(o: &Opts) -> Outcome {
    let q = o.require_q()?;
    if o.scenario.is_some() {
        return Err(Failure::Config("identity-check takes --V/--V-file, not --scenario".into()));
    }
    let fam = PhiFamily::new(q)?;
    let (grid, v, f) = sources(o)?;
    let resample = matches!((&v, &f), (Source::Builtin(_), Source::Builtin(_)));
    let levels = if resample { IDENTITY_LEVELS } else { 1 };
    let mut g = grid;
    let mut rows = Vec::new();
    let mut n_col = Vec::new();
    let mut d_col = Vec::new();
    for _ in 0..levels {
        let kernel = Kernel::closed_form(g.interval());
        let h = potential(&kernel, &f.on(&g)?)?.value;
        let d = lemma41_identity_check(&h, &v.on(&g)?, &fam)?;
        rows.push(json!({"n": g.len(), "max_discrepancy": d}));
        n_col.push(g.len() as f64);
        d_col.push(d);
        g = g.refined();
    }
    let reduction: Vec<f64> = d_col.windows(2).map(|w| w[0] / w[1]).collect();
    let csv = columns_csv(&["n", "max_discrepancy"], &[&n_col, &d_col]);
    let json = to_json(&json!({
        "schema": SCHEMA,
        "command": "identity-check",
        "q": q,
        "levels": rows,
        "reduction_factors": reduction,
    }))?;
    emit(o.out.as_deref(), o.format(), &csv, &json)
}
