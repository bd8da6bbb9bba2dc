//! Command-line front end: `simulate`, `converge`, `eps-scan` and `energy`
//! subcommands over the harness.
//!
//! Parsing is strict: unknown flags are rejected with a usage message and
//! exit code 2. Grids accept either comma-separated values (`0.1,0.05`),
//! single dyadic powers (`2^-6`), or the dyadic range syntax `2^-4..2^-10`.

use crate::diagnostics::energy_series;
use crate::error::Result;
use crate::fields::{by_name, ProblemSpec};
use crate::harness::{
    convergence_study, default_eps_grid, default_h_grid, energy_csv, energy_study,
    eps_scaling_study, eps_scan_grid, integrate_trajectory, sweep_csv, trajectory_csv, write_text,
    SweepConfig,
};
use crate::integrators::{Method, RefSolverConfig};
use std::path::PathBuf;

const USAGE: &str = "\
cpd — splitting integrators for charged-particle dynamics in strong magnetic fields

USAGE:
    cpd <SUBCOMMAND> [FLAGS]

SUBCOMMANDS:
    simulate    integrate one trajectory and emit t,x1,x2,x3,v1,v2,v3,e_H rows
    converge    sweep h per eps and report observed-order slopes
    eps-scan    sweep eps at fixed h and report the eps-scaling slope
    energy      long-time energy-error series (t,e_H rows)

FLAGS:
    --problem <id>        p1-uniform | p2-q2 | p3-q15 | p4-q1 (required)
    --method <list>       s2new, s2vp, or s2new,s2vp
                          (required for simulate/energy; default both for sweeps)
    --eps <grid>          eps values: list, 2^-k, or range 2^-a..2^-b
    --h <grid>            step sizes, same syntax as --eps
    --t-end <t>           horizon (default 1; 100 for energy)
    --out <path>          write CSV here instead of standard output
    --record-every <n>    record cadence for simulate/energy (default 1)
    --jobs <n>            worker threads for sweep cells (default 1)
    --rtol <tol>          reference solver relative tolerance (default 1e-12)
    --atol <tol>          reference solver absolute tolerance (default 1e-12)
    --timing              fill the wall_time_ms CSV column (off by default,
                          so identical invocations are byte-identical)
    -h, --help            this text

Problems: p1-uniform (uniform field, Coulomb potential), p2-q2, p3-q15, p4-q1
(perturbed trigonometric field with q = 2, 1.5, 1). Methods: s2new (frozen-field
splitting), s2vp (drift/kick baseline).

Set CPD_NO_COLOR to disable ANSI colors in diagnostics.
";

/// A fully validated invocation.
#[derive(Debug)]
pub struct CliInvocation {
    pub command: Command,
}

#[derive(Debug)]
pub enum Command {
    Help,
    Simulate {
        problem: ProblemSpec,
        method: Method,
        eps: f64,
        h: f64,
        t_end: f64,
        record_every: usize,
        out: Option<PathBuf>,
    },
    Converge {
        problem: ProblemSpec,
        methods: Vec<Method>,
        eps_list: Vec<f64>,
        h_list: Vec<f64>,
        t_end: f64,
        ref_cfg: RefSolverConfig,
        jobs: usize,
        timing: bool,
        out: Option<PathBuf>,
    },
    EpsScan {
        problem: ProblemSpec,
        methods: Vec<Method>,
        eps_list: Vec<f64>,
        h: f64,
        t_end: f64,
        ref_cfg: RefSolverConfig,
        jobs: usize,
        timing: bool,
        out: Option<PathBuf>,
    },
    Energy {
        problem: ProblemSpec,
        method: Method,
        eps: f64,
        h: f64,
        t_end: f64,
        record_every: usize,
        out: Option<PathBuf>,
    },
}

/// A rejected invocation; `main` prints the message plus usage and exits 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

fn usage_err<T>(msg: impl Into<String>) -> std::result::Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

/// Parse `2^-6` style tokens.
fn parse_dyadic(tok: &str) -> Option<f64> {
    let exp = tok.strip_prefix("2^")?;
    let k: i32 = exp.parse().ok()?;
    Some(2f64.powi(k))
}

fn parse_value(tok: &str) -> std::result::Result<f64, UsageError> {
    if let Some(v) = parse_dyadic(tok) {
        return Ok(v);
    }
    tok.parse::<f64>()
        .map_err(|_| UsageError(format!("cannot parse '{tok}' as a number or 2^k power")))
}

/// Expand a grid argument: `2^-4..2^-10` becomes the dyadic values from
/// 2^-4 down to 2^-10; otherwise a comma-separated list of values.
pub fn parse_grid(arg: &str) -> std::result::Result<Vec<f64>, UsageError> {
    if let Some((lo, hi)) = arg.split_once("..") {
        let parse_exp = |tok: &str| -> std::result::Result<i32, UsageError> {
            tok.strip_prefix("2^")
                .and_then(|e| e.parse::<i32>().ok())
                .ok_or_else(|| {
                    UsageError(format!(
                        "range bounds must be dyadic powers like 2^-4, got '{tok}'"
                    ))
                })
        };
        let a = parse_exp(lo)?;
        let b = parse_exp(hi)?;
        let exponents: Vec<i32> = if a <= b {
            (a..=b).collect()
        } else {
            (b..=a).rev().collect()
        };
        return Ok(exponents.into_iter().map(|k| 2f64.powi(k)).collect());
    }
    arg.split(',').map(|tok| parse_value(tok.trim())).collect()
}

fn parse_methods(arg: &str) -> std::result::Result<Vec<Method>, UsageError> {
    arg.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<Method>()
                .map_err(|e| UsageError(e.to_string()))
        })
        .collect()
}

/// Raw flag values collected in a single pass; validated per subcommand.
#[derive(Default)]
struct Flags {
    problem: Option<String>,
    method: Option<String>,
    eps: Option<String>,
    h: Option<String>,
    t_end: Option<String>,
    out: Option<String>,
    record_every: Option<String>,
    jobs: Option<String>,
    rtol: Option<String>,
    atol: Option<String>,
    timing: bool,
    help: bool,
}

fn collect_flags(args: &[String]) -> std::result::Result<Flags, UsageError> {
    let mut flags = Flags::default();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let mut take = |name: &str| -> std::result::Result<String, UsageError> {
            it.next()
                .cloned()
                .ok_or_else(|| UsageError(format!("flag {name} expects a value")))
        };
        match arg.as_str() {
            "--problem" => flags.problem = Some(take("--problem")?),
            "--method" => flags.method = Some(take("--method")?),
            "--eps" => flags.eps = Some(take("--eps")?),
            "--h" => flags.h = Some(take("--h")?),
            "--t-end" => flags.t_end = Some(take("--t-end")?),
            "--out" => flags.out = Some(take("--out")?),
            "--record-every" => flags.record_every = Some(take("--record-every")?),
            "--jobs" => flags.jobs = Some(take("--jobs")?),
            "--rtol" => flags.rtol = Some(take("--rtol")?),
            "--atol" => flags.atol = Some(take("--atol")?),
            "--timing" => flags.timing = true,
            "--help" | "-h" => flags.help = true,
            other => return usage_err(format!("unknown flag '{other}'")),
        }
    }
    Ok(flags)
}

impl Flags {
    fn problem(&self) -> std::result::Result<ProblemSpec, UsageError> {
        let name = self
            .problem
            .as_deref()
            .ok_or_else(|| UsageError("--problem is required".into()))?;
        by_name(name).map_err(|e| UsageError(e.to_string()))
    }

    fn single_method(&self) -> std::result::Result<Method, UsageError> {
        let arg = self
            .method
            .as_deref()
            .ok_or_else(|| UsageError("--method is required".into()))?;
        let methods = parse_methods(arg)?;
        match methods.as_slice() {
            [one] => Ok(*one),
            _ => usage_err("this subcommand takes exactly one method"),
        }
    }

    fn methods_or_both(&self) -> std::result::Result<Vec<Method>, UsageError> {
        match self.method.as_deref() {
            Some(arg) => parse_methods(arg),
            None => Ok(Method::ALL.to_vec()),
        }
    }

    fn single_value(
        &self,
        field: &Option<String>,
        name: &str,
    ) -> std::result::Result<f64, UsageError> {
        let arg = field
            .as_deref()
            .ok_or_else(|| UsageError(format!("{name} is required")))?;
        let grid = parse_grid(arg)?;
        match grid.as_slice() {
            [one] => Ok(*one),
            _ => usage_err(format!("{name} takes exactly one value here")),
        }
    }

    fn grid_or(
        &self,
        field: &Option<String>,
        default: Vec<f64>,
    ) -> std::result::Result<Vec<f64>, UsageError> {
        match field.as_deref() {
            Some(arg) => parse_grid(arg),
            None => Ok(default),
        }
    }

    fn t_end_or(&self, default: f64) -> std::result::Result<f64, UsageError> {
        match self.t_end.as_deref() {
            Some(arg) => parse_value(arg),
            None => Ok(default),
        }
    }

    fn record_every(&self) -> std::result::Result<usize, UsageError> {
        match self.record_every.as_deref() {
            Some(arg) => arg
                .parse::<usize>()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| {
                    UsageError(format!(
                        "--record-every must be a positive integer, got '{arg}'"
                    ))
                }),
            None => Ok(1),
        }
    }

    fn jobs(&self) -> std::result::Result<usize, UsageError> {
        match self.jobs.as_deref() {
            Some(arg) => arg
                .parse::<usize>()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| {
                    UsageError(format!("--jobs must be a positive integer, got '{arg}'"))
                }),
            None => Ok(1),
        }
    }

    fn ref_cfg(&self) -> std::result::Result<RefSolverConfig, UsageError> {
        let mut cfg = RefSolverConfig::default();
        if let Some(arg) = self.rtol.as_deref() {
            cfg.rtol = parse_value(arg)?;
        }
        if let Some(arg) = self.atol.as_deref() {
            cfg.atol = parse_value(arg)?;
        }
        if !(cfg.rtol > 0.0 && cfg.atol > 0.0) {
            return usage_err("--rtol and --atol must be positive");
        }
        Ok(cfg)
    }

    fn out(&self) -> Option<PathBuf> {
        self.out.as_deref().map(PathBuf::from)
    }
}

fn check_eps_values(eps: &[f64]) -> std::result::Result<(), UsageError> {
    if eps.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        return usage_err("eps values must lie in (0, 1]");
    }
    Ok(())
}

fn check_h_values(hs: &[f64]) -> std::result::Result<(), UsageError> {
    if hs.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
        return usage_err("h values must be positive");
    }
    Ok(())
}

fn check_t_end(t: f64) -> std::result::Result<(), UsageError> {
    if !(t > 0.0 && t.is_finite()) {
        return usage_err("--t-end must be positive");
    }
    Ok(())
}

/// Strict argument parsing; anything invalid comes back as a `UsageError`.
pub fn parse_args(argv: &[String]) -> std::result::Result<CliInvocation, UsageError> {
    if argv.is_empty() {
        return usage_err("missing subcommand (simulate | converge | eps-scan | energy)");
    }
    if argv[0] == "--help" || argv[0] == "-h" || argv[0] == "help" {
        return Ok(CliInvocation {
            command: Command::Help,
        });
    }
    let sub = argv[0].as_str();
    let flags = collect_flags(&argv[1..])?;
    if flags.help {
        return Ok(CliInvocation {
            command: Command::Help,
        });
    }

    let command = match sub {
        "simulate" => {
            let eps = flags.single_value(&flags.eps, "--eps")?;
            let h = flags.single_value(&flags.h, "--h")?;
            let t_end = flags.t_end_or(1.0)?;
            check_eps_values(&[eps])?;
            check_h_values(&[h])?;
            check_t_end(t_end)?;
            Command::Simulate {
                problem: flags.problem()?,
                method: flags.single_method()?,
                eps,
                h,
                t_end,
                record_every: flags.record_every()?,
                out: flags.out(),
            }
        }
        "converge" => {
            let eps_list = flags.grid_or(&flags.eps, default_eps_grid())?;
            let h_list = flags.grid_or(&flags.h, default_h_grid())?;
            let t_end = flags.t_end_or(1.0)?;
            check_eps_values(&eps_list)?;
            check_h_values(&h_list)?;
            check_t_end(t_end)?;
            Command::Converge {
                problem: flags.problem()?,
                methods: flags.methods_or_both()?,
                eps_list,
                h_list,
                t_end,
                ref_cfg: flags.ref_cfg()?,
                jobs: flags.jobs()?,
                timing: flags.timing,
                out: flags.out(),
            }
        }
        "eps-scan" => {
            let eps_list = flags.grid_or(&flags.eps, eps_scan_grid())?;
            let h = match flags.h.as_deref() {
                Some(_) => flags.single_value(&flags.h, "--h")?,
                None => 2f64.powi(-8),
            };
            let t_end = flags.t_end_or(1.0)?;
            check_eps_values(&eps_list)?;
            check_h_values(&[h])?;
            check_t_end(t_end)?;
            Command::EpsScan {
                problem: flags.problem()?,
                methods: flags.methods_or_both()?,
                eps_list,
                h,
                t_end,
                ref_cfg: flags.ref_cfg()?,
                jobs: flags.jobs()?,
                timing: flags.timing,
                out: flags.out(),
            }
        }
        "energy" => {
            let eps = flags.single_value(&flags.eps, "--eps")?;
            let h = flags.single_value(&flags.h, "--h")?;
            let t_end = flags.t_end_or(100.0)?;
            check_eps_values(&[eps])?;
            check_h_values(&[h])?;
            check_t_end(t_end)?;
            Command::Energy {
                problem: flags.problem()?,
                method: flags.single_method()?,
                eps,
                h,
                t_end,
                record_every: flags.record_every()?,
                out: flags.out(),
            }
        }
        other => return usage_err(format!("unknown subcommand '{other}'")),
    };
    Ok(CliInvocation { command })
}

fn color_enabled() -> bool {
    std::env::var_os("CPD_NO_COLOR").is_none()
}

fn report_error(msg: &str) {
    if color_enabled() {
        eprintln!("\x1b[31merror:\x1b[0m {msg}");
    } else {
        eprintln!("error: {msg}");
    }
}

fn emit(out: Option<&PathBuf>, contents: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn execute(invocation: CliInvocation) -> Result<()> {
    match invocation.command {
        Command::Help => {
            print!("{USAGE}");
            Ok(())
        }
        Command::Simulate {
            problem,
            method,
            eps,
            h,
            t_end,
            record_every,
            out,
        } => {
            let trajectory = integrate_trajectory(&problem, method, eps, h, t_end, record_every)?;
            let series = energy_series(&problem, &trajectory)?;
            emit(out.as_ref(), &trajectory_csv(&trajectory, &series))
        }
        Command::Converge {
            problem,
            methods,
            eps_list,
            h_list,
            t_end,
            ref_cfg,
            jobs,
            timing,
            out,
        } => {
            let mut cfg = SweepConfig::new(problem, methods, eps_list, h_list);
            cfg.t_end = t_end;
            cfg.ref_cfg = ref_cfg;
            cfg.jobs = jobs;
            cfg.timing = timing;
            let study = convergence_study(&cfg)?;
            for (method, eps, fit) in &study.fits {
                eprintln!(
                    "{method} at eps = {eps:>12}: observed order {:.3} (r2 = {:.4})",
                    fit.slope, fit.r2
                );
            }
            emit(out.as_ref(), &sweep_csv(&study.rows))
        }
        Command::EpsScan {
            problem,
            methods,
            eps_list,
            h,
            t_end,
            ref_cfg,
            jobs,
            timing,
            out,
        } => {
            let mut cfg = SweepConfig::new(problem, methods, eps_list, vec![h]);
            cfg.t_end = t_end;
            cfg.ref_cfg = ref_cfg;
            cfg.jobs = jobs;
            cfg.timing = timing;
            let study = eps_scaling_study(&cfg)?;
            for (method, fit) in &study.fits {
                eprintln!(
                    "{method}: error ~ eps^{:.3} at h = {h} (r2 = {:.4})",
                    fit.slope, fit.r2
                );
            }
            emit(out.as_ref(), &sweep_csv(&study.rows))
        }
        Command::Energy {
            problem,
            method,
            eps,
            h,
            t_end,
            record_every,
            out,
        } => {
            let series = energy_study(&problem, method, eps, h, t_end, record_every)?;
            emit(out.as_ref(), &energy_csv(&series))
        }
    }
}

/// Entry point shared by the binary and the CLI tests.
/// Returns the process exit code: 0 success, 1 runtime failure, 2 usage error.
pub fn run(argv: &[String]) -> i32 {
    match parse_args(argv) {
        Ok(invocation) => match execute(invocation) {
            Ok(()) => 0,
            Err(e) => {
                report_error(&e.to_string());
                1
            }
        },
        Err(usage) => {
            report_error(&usage.0);
            eprint!("{USAGE}");
            2
        }
    }
}
