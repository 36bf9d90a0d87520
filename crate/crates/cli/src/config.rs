//! Command-line flags and the flat `key=value` config file that mirrors them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::Failure;

#[derive(Debug, Parser)]
#[command(name = "greenbound", version, about = "Green-potential bounds for -u'' + V u^q = f")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pointwise bound h·φ(-G(h^q V)/h) and the conditions on the bracket.
    Bound(Opts),
    /// Picard iteration (with Newton polish) for u + G(u^q V) = h.
    SolveIntegral(Opts),
    /// Finite-difference Newton solve of -u'' + V u^q = f, u = 0 at the ends.
    SolveBvp(Opts),
    /// Closed-form study of one of the model scenarios ex1..ex4.
    Scenario(Opts),
    /// The comparison sequence b_{k+1} = 1 - a b_k^q for q < 0.
    Recurrence(Opts),
    /// Discrete check of the φ-substitution identity under refinement.
    IdentityCheck(Opts),
}

impl Command {
    pub fn opts(&self) -> &Opts {
        match self {
            Command::Bound(o)
            | Command::SolveIntegral(o)
            | Command::SolveBvp(o)
            | Command::Scenario(o)
            | Command::Recurrence(o)
            | Command::IdentityCheck(o) => o,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioId {
    Ex1,
    Ex2,
    Ex3,
    Ex4,
}

/// Flags shared by every command. Each one can also come from `--config`;
/// a flag on the command line wins over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    /// Flat key=value file; keys are the long flag names without dashes.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of grid nodes [default: 2001].
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub q: Option<f64>,
    /// Solver tolerance (absolute).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Interval as `left,right` [default: 0,1]; scenarios fix their own.
    #[arg(long, allow_hyphen_values = true)]
    pub interval: Option<String>,
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioId>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Potential V as an `x,value` CSV on a uniform grid.
    #[arg(long = "V-file")]
    pub v_file: Option<PathBuf>,
    /// Source f as an `x,value` CSV on a uniform grid.
    #[arg(long = "f-file")]
    pub f_file: Option<PathBuf>,
    /// Built-in V: `const:c` or `distpow:c,p`, meaning c·d(x)^p with the smooth
    /// boundary distance d(x) = (x - a)(b - x)/(b - a).
    #[arg(long = "V", allow_hyphen_values = true)]
    pub v: Option<String>,
    /// Built-in f, same forms as --V [default: const:1].
    #[arg(long = "f", allow_hyphen_values = true)]
    pub f: Option<String>,
    /// Recurrence coefficient.
    #[arg(long)]
    pub a: Option<f64>,
    /// Iteration cap.
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Also test the sufficient existence condition (q > 1 or q < 0).
    #[arg(long)]
    pub sufficient: bool,
    /// Output prefix; writes `<out>.csv` and `<out>.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// What to print on standard output [default: json].
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, Failure> {
    value
        .parse()
        .map_err(|_| Failure::Config(format!("bad value {value:?} for {key}")))
}

fn parse_enum<T: ValueEnum>(key: &str, value: &str) -> Result<T, Failure> {
    T::from_str(value, true).map_err(|_| Failure::Config(format!("bad value {value:?} for {key}")))
}

fn fill<T>(slot: &mut Option<T>, v: impl FnOnce() -> Result<T, Failure>) -> Result<(), Failure> {
    if slot.is_none() {
        *slot = Some(v()?);
    }
    Ok(())
}

/// Read `key=value` lines. Blank lines and `#` comments are skipped.
pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Failure::Config(format!("{}:{}: expected key=value", path.display(), lineno + 1))
        })?;
        let k = k.trim().trim_start_matches("--").to_string();
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Failure::Config(format!(
                "{}:{}: duplicate key {k}",
                path.display(),
                lineno + 1
            )));
        }
    }
    Ok(map)
}

impl Opts {
    /// Fill unset flags from the config file, if one was given.
    pub fn merged(&self) -> Result<Opts, Failure> {
        let mut o = self.clone();
        let Some(path) = &self.config else {
            return Ok(o);
        };
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        // relative paths in the file are taken relative to the file
        let rel = |v: &str| base.join(v);
        for (k, v) in read_config(path)? {
            let v = v.as_str();
            match k.as_str() {
                "n" => fill(&mut o.n, || parse(&k, v))?,
                "q" => fill(&mut o.q, || parse(&k, v))?,
                "tol" => fill(&mut o.tol, || parse(&k, v))?,
                "interval" => fill(&mut o.interval, || Ok(v.to_string()))?,
                "scenario" => fill(&mut o.scenario, || parse_enum(&k, v))?,
                "alpha" => fill(&mut o.alpha, || parse(&k, v))?,
                "beta" => fill(&mut o.beta, || parse(&k, v))?,
                "gamma" => fill(&mut o.gamma, || parse(&k, v))?,
                "lambda" => fill(&mut o.lambda, || parse(&k, v))?,
                "V-file" => fill(&mut o.v_file, || Ok(rel(v)))?,
                "f-file" => fill(&mut o.f_file, || Ok(rel(v)))?,
                "V" => fill(&mut o.v, || Ok(v.to_string()))?,
                "f" => fill(&mut o.f, || Ok(v.to_string()))?,
                "a" => fill(&mut o.a, || parse(&k, v))?,
                "kmax" => fill(&mut o.kmax, || parse(&k, v))?,
                "out" => fill(&mut o.out, || Ok(rel(v)))?,
                "format" => fill(&mut o.format, || parse_enum(&k, v))?,
                "sufficient" => o.sufficient |= parse::<bool>(&k, v)?,
                _ => return Err(Failure::Config(format!("unknown config key {k:?}"))),
            }
        }
        Ok(o)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if let Some(n) = self.n {
            if n < 3 {
                return Err(Failure::Config(format!("--n must be at least 3, got {n}")));
            }
        }
        if let Some(t) = self.tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Failure::Config(format!("--tol must be positive, got {t}")));
            }
        }
        if let Some(q) = self.q {
            if !q.is_finite() {
                return Err(Failure::Config(format!("--q must be finite, got {q}")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n.unwrap_or(2001)
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or(Format::Json)
    }

    pub fn require_q(&self) -> Result<f64, Failure> {
        self.q.ok_or_else(|| Failure::Config("--q is required".into()))
    }

    pub fn interval(&self) -> Result<(f64, f64), Failure> {
        let Some(s) = &self.interval else {
            return Ok((0.0, 1.0));
        };
        let bad = || Failure::Config(format!("--interval expects left,right, got {s:?}"));
        let (a, b) = s.split_once(',').ok_or_else(bad)?;
        Ok((
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        ))
    }
}

/// A built-in function of `x` on an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Builtin {
    Const(f64),
    /// `c · d(x)^p` with `d(x) = (x - a)(b - x)/(b - a)`.
    DistPow(f64, f64),
}

impl Builtin {
    pub fn parse(flag: &str, s: &str) -> Result<Builtin, Failure> {
        let bad = || Failure::Config(format!("--{flag}: expected const:c or distpow:c,p, got {s:?}"));
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        match (kind, nums.as_slice()) {
            ("const", [c]) => Ok(Builtin::Const(*c)),
            ("distpow", [c, p]) => Ok(Builtin::DistPow(*c, *p)),
            _ => Err(bad()),
        }
    }

    pub fn eval(&self, d: f64) -> f64 {
        match *self {
            Builtin::Const(c) => c,
            Builtin::DistPow(c, p) => c * d.powf(p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins() {
        assert_eq!(Builtin::parse("V", "const:2.5").unwrap(), Builtin::Const(2.5));
        assert_eq!(
            Builtin::parse("V", "distpow:-1,0.5").unwrap(),
            Builtin::DistPow(-1.0, 0.5)
        );
        assert!(Builtin::parse("V", "distpow:1").is_err());
        assert!(Builtin::parse("V", "sin:1").is_err());
    }

    #[test]
    fn command_line_wins_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nq = -1\nn=11\nout=res\n").unwrap();
        let o = Opts {
            config: Some(path),
            n: Some(21),
            ..Opts::default()
        }
        .merged()
        .unwrap();
        assert_eq!(o.n, Some(21));
        assert_eq!(o.q, Some(-1.0));
        assert_eq!(o.out, Some(dir.path().join("res")));
    }

    #[test]
    fn malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        for body in ["q -1\n", "bogus=1\n", "q=abc\n", "q=1\nq=2\n"] {
            let path = dir.path().join("bad.cfg");
            std::fs::write(&path, body).unwrap();
            let o = Opts {
                config: Some(path),
                ..Opts::default()
            };
            assert!(matches!(o.merged(), Err(Failure::Config(_))), "{body:?}");
        }
    }
}
