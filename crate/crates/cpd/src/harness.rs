//! Experiment orchestration: convergence sweeps over `(method, eps, h)`,
//! eps-scaling studies at fixed `h`, long-time energy studies, and CSV
//! emission.
//!
//! Sweeps are fully deterministic. Reference solutions are computed once per
//! `(problem, eps)` and shared across methods and step sizes; cells that fail
//! are recorded as error rows instead of aborting the run.

use crate::diagnostics::{
    energy_series, error_report, hamiltonian, loglog_slope, perp_error, EnergySeries, SlopeFit,
};
use crate::error::{Error, Result};
use crate::fields::ProblemSpec;
use crate::integrators::{
    integrate_horizon, reference_solve, Method, ParticleState, RefSolverConfig, SchemeContext,
};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

/// One sweep: a problem, a method subset, and dyadic (or arbitrary) grids of
/// `eps` and `h`.
#[derive(Clone)]
pub struct SweepConfig {
    pub problem: ProblemSpec,
    pub methods: Vec<Method>,
    pub eps_list: Vec<f64>,
    pub h_list: Vec<f64>,
    pub t_end: f64,
    pub ref_cfg: RefSolverConfig,
    /// Worker threads for independent cells. Any value produces the same
    /// rows; 1 runs serially.
    pub jobs: usize,
    /// Populate `wall_time_ms`. Off by default so that identical runs emit
    /// byte-identical CSV files.
    pub timing: bool,
}

impl SweepConfig {
    pub fn new(
        problem: ProblemSpec,
        methods: Vec<Method>,
        eps_list: Vec<f64>,
        h_list: Vec<f64>,
    ) -> Self {
        Self {
            problem,
            methods,
            eps_list,
            h_list,
            t_end: 1.0,
            ref_cfg: RefSolverConfig::default(),
            jobs: 1,
            timing: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods selected".into()));
        }
        if self.eps_list.is_empty() || self.h_list.is_empty() {
            return Err(Error::InvalidArgument("empty eps or h grid".into()));
        }
        if self.eps_list.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::InvalidArgument(
                "all eps values must lie in (0, 1]".into(),
            ));
        }
        if self.h_list.iter().any(|&h| !h.is_finite() || h <= 0.0) {
            return Err(Error::InvalidArgument(
                "all h values must be positive".into(),
            ));
        }
        if self.t_end.is_nan() || self.t_end <= 0.0 {
            return Err(Error::InvalidArgument("t_end must be positive".into()));
        }
        if self.jobs == 0 {
            return Err(Error::InvalidArgument("jobs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one `(method, eps, h)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    Error,
}

/// One experiment row. Metric fields are NaN on error rows.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub problem: String,
    pub method: Method,
    pub eps: f64,
    pub h: f64,
    pub errx: f64,
    pub errv_par: f64,
    pub errv_perp: f64,
    pub error: f64,
    pub e_h_final: f64,
    pub wall_time_ms: f64,
    pub status: CellStatus,
    pub reason: String,
}

/// Default dyadic grids from the published experiments.
pub fn default_h_grid() -> Vec<f64> {
    (4..=10).map(|k| 2f64.powi(-k)).collect()
}

pub fn default_eps_grid() -> Vec<f64> {
    vec![2f64.powi(-4), 2f64.powi(-6), 2f64.powi(-8), 2f64.powi(-10)]
}

pub fn eps_scan_grid() -> Vec<f64> {
    (4..=10).map(|k| 2f64.powi(-k)).collect()
}

fn sorted_desc_dedup(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v.dedup();
    v
}

fn run_cell(
    cfg: &SweepConfig,
    method: Method,
    eps: f64,
    h: f64,
    reference: &std::result::Result<ParticleState, String>,
) -> SweepResult {
    let mut row = SweepResult {
        problem: cfg.problem.name.to_string(),
        method,
        eps,
        h,
        errx: f64::NAN,
        errv_par: f64::NAN,
        errv_perp: f64::NAN,
        error: f64::NAN,
        e_h_final: f64::NAN,
        wall_time_ms: 0.0,
        status: CellStatus::Error,
        reason: String::new(),
    };

    let reference = match reference {
        Ok(r) => *r,
        Err(msg) => {
            row.reason = format!("reference: {msg}");
            return row;
        }
    };

    let started = Instant::now();
    let outcome = (|| -> Result<(ParticleState, f64)> {
        let ctx = SchemeContext::new(cfg.problem.clone(), eps, h)?;
        let traj = integrate_horizon(&ctx, method, cfg.t_end, usize::MAX)?;
        let initial = traj[0];
        let last = *traj.last().expect("trajectory is never empty");
        let h0 = hamiltonian(&cfg.problem, &initial)?;
        let hf = hamiltonian(&cfg.problem, &last)?;
        Ok((last, (hf - h0).abs() / h0.abs()))
    })();
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;

    match outcome {
        Ok((final_state, e_h_final)) => {
            match error_report(&cfg.problem, eps, &final_state, &reference) {
                Ok(report) => {
                    row.errx = report.errx;
                    row.errv_par = report.errv_par;
                    row.error = report.error;
                    row.errv_perp =
                        perp_error(&cfg.problem, eps, &final_state, &reference).unwrap_or(f64::NAN);
                    row.e_h_final = e_h_final;
                    row.wall_time_ms = if cfg.timing { elapsed_ms } else { 0.0 };
                    row.status = CellStatus::Ok;
                }
                Err(e) => row.reason = e.to_string(),
            }
        }
        Err(e) => row.reason = e.to_string(),
    }
    row
}

/// Run every `(method, eps, h)` cell of the sweep and return one row per
/// cell, ordered by (method, eps descending, h descending).
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepResult>> {
    cfg.validate()?;

    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let eps_values = sorted_desc_dedup(&cfg.eps_list);
    let h_values = sorted_desc_dedup(&cfg.h_list);

    // One reference per eps, shared by every method and step size.
    let references: Vec<(f64, std::result::Result<ParticleState, String>)> = eps_values
        .iter()
        .map(|&eps| {
            let r = reference_solve(&cfg.problem, eps, cfg.t_end, &cfg.ref_cfg)
                .map_err(|e| e.to_string());
            (eps, r)
        })
        .collect();

    let mut cells: Vec<(Method, f64, f64)> =
        Vec::with_capacity(methods.len() * eps_values.len() * h_values.len());
    for &m in &methods {
        for &eps in &eps_values {
            for &h in &h_values {
                cells.push((m, eps, h));
            }
        }
    }

    let results: Mutex<Vec<Option<SweepResult>>> = Mutex::new(vec![None; cells.len()]);
    let next = AtomicUsize::new(0);
    let workers = cfg.jobs.min(cells.len()).max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let (method, eps, h) = cells[i];
                let reference = &references
                    .iter()
                    .find(|(e, _)| *e == eps)
                    .expect("reference precomputed for every eps")
                    .1;
                let row = run_cell(cfg, method, eps, h, reference);
                results.lock().unwrap()[i] = Some(row);
            });
        }
    });

    Ok(results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every cell produced a row"))
        .collect())
}

/// A convergence study: error against `h`, one slope fit per (method, eps).
pub struct ConvergenceStudy {
    pub rows: Vec<SweepResult>,
    pub fits: Vec<(Method, f64, SlopeFit)>,
}

/// Sweep `h` for each `eps` and fit the observed order per method.
pub fn convergence_study(cfg: &SweepConfig) -> Result<ConvergenceStudy> {
    let rows = run_sweep(cfg)?;
    let eps_values = sorted_desc_dedup(&cfg.eps_list);
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let mut fits = Vec::with_capacity(methods.len() * eps_values.len());
    for &method in &methods {
        for &eps in &eps_values {
            let (hs, errs): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|r| r.method == method && r.eps == eps && r.status == CellStatus::Ok)
                .map(|r| (r.h, r.error))
                .unzip();
            if hs.len() < 3 {
                return Err(Error::InvalidArgument(format!(
                    "convergence fit for {method} at eps = {eps} has only {} usable cells",
                    hs.len()
                )));
            }
            fits.push((method, eps, loglog_slope(&hs, &errs)?));
        }
    }
    Ok(ConvergenceStudy { rows, fits })
}

/// An eps-scaling study: error against `eps` at fixed `h`, one fit per method.
pub struct EpsScalingStudy {
    pub rows: Vec<SweepResult>,
    pub fits: Vec<(Method, SlopeFit)>,
}

/// Sweep `eps` at a fixed step size and fit the eps-dependence of the error.
pub fn eps_scaling_study(cfg: &SweepConfig) -> Result<EpsScalingStudy> {
    if cfg.h_list.len() != 1 {
        return Err(Error::InvalidArgument(
            "eps-scaling study needs exactly one h".into(),
        ));
    }
    let rows = run_sweep(cfg)?;
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let mut fits = Vec::new();
    for method in methods {
        let (eps, errs): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.method == method && r.status == CellStatus::Ok)
            .map(|r| (r.eps, r.error))
            .unzip();
        if eps.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "eps-scaling fit for {method} has only {} usable cells",
                eps.len()
            )));
        }
        fits.push((method, loglog_slope(&eps, &errs)?));
    }
    Ok(EpsScalingStudy { rows, fits })
}

/// Long-time energy study: integrate to `t_end` and record the relative
/// energy error every `record_every` steps.
pub fn energy_study(
    problem: &ProblemSpec,
    method: Method,
    eps: f64,
    h: f64,
    t_end: f64,
    record_every: usize,
) -> Result<EnergySeries> {
    let ctx = SchemeContext::new(problem.clone(), eps, h)?;
    let trajectory = integrate_horizon(&ctx, method, t_end, record_every)?;
    energy_series(problem, &trajectory)
}

/// Single-trajectory driver behind the `simulate` subcommand.
pub fn integrate_trajectory(
    problem: &ProblemSpec,
    method: Method,
    eps: f64,
    h: f64,
    t_end: f64,
    record_every: usize,
) -> Result<Vec<ParticleState>> {
    let ctx = SchemeContext::new(problem.clone(), eps, h)?;
    integrate_horizon(&ctx, method, t_end, record_every)
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

/// Stable sweep CSV schema.
pub const SWEEP_CSV_HEADER: &str =
    "problem,method,eps,h,errx,errv_par,errv_perp,error,e_H_final,wall_time_ms,status,reason";

/// Quote a field per RFC 4180 when it contains a delimiter, quote or line
/// break.
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') || s.contains('\r') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Shortest round-trip decimal; NaN (unavailable metric) becomes an empty
/// field.
fn csv_float(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Render sweep rows as an RFC 4180 document (CRLF line endings, header row,
/// shortest round-trip floats). Deterministic for deterministic rows.
pub fn sweep_csv(rows: &[SweepResult]) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_CSV_HEADER);
    out.push_str("\r\n");
    for r in rows {
        let status = match r.status {
            CellStatus::Ok => "ok",
            CellStatus::Error => "error",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\r\n",
            csv_field(&r.problem),
            r.method,
            csv_float(r.eps),
            csv_float(r.h),
            csv_float(r.errx),
            csv_float(r.errv_par),
            csv_float(r.errv_perp),
            csv_float(r.error),
            csv_float(r.e_h_final),
            csv_float(r.wall_time_ms),
            status,
            csv_field(&r.reason),
        ));
    }
    out
}

/// Write sweep rows to `path`, creating parent directories.
pub fn write_csv(rows: &[SweepResult], path: &Path) -> Result<()> {
    write_text(path, &sweep_csv(rows))
}

/// Render an energy series as CSV.
pub fn energy_csv(series: &EnergySeries) -> String {
    let mut out = String::from("t,e_H\r\n");
    for (t, e) in series.times.iter().zip(&series.e_h) {
        out.push_str(&format!("{t},{e}\r\n"));
    }
    out
}

/// Render a trajectory with its running energy error as CSV.
pub fn trajectory_csv(trajectory: &[ParticleState], series: &EnergySeries) -> String {
    let mut out = String::from("t,x1,x2,x3,v1,v2,v3,e_H\r\n");
    for (s, e) in trajectory.iter().zip(&series.e_h) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\r\n",
            s.t, s.x.x, s.x.y, s.x.z, s.v.x, s.v.y, s.v.z, e
        ));
    }
    out
}

/// Write a rendered document to `path` with I/O errors carrying the path.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    let io_err = |source: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
    }
    let mut f = std::fs::File::create(path).map_err(io_err)?;
    f.write_all(contents.as_bytes()).map_err(io_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::by_name;

    fn tiny_config() -> SweepConfig {
        SweepConfig::new(
            by_name("p1-uniform").unwrap(),
            vec![Method::S2New],
            vec![2f64.powi(-4)],
            vec![2f64.powi(-5)],
        )
    }

    #[test]
    fn single_cell_sweep_yields_one_row() {
        let rows = run_sweep(&tiny_config()).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!(r.status, CellStatus::Ok);
        assert!(r.error > 0.0 && r.error.is_finite());
        assert!((r.error - (r.errx + r.errv_par)).abs() <= 1e-15);
    }

    #[test]
    fn halving_h_quarters_the_error() {
        let mut cfg = tiny_config();
        cfg.eps_list = vec![2f64.powi(-6)];
        cfg.h_list = vec![2f64.powi(-6), 2f64.powi(-7)];
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        // Rows are h-descending.
        let ratio = rows[0].error / rows[1].error;
        assert!(
            (2.5..6.0).contains(&ratio),
            "expected ~4x reduction, got {ratio:.2}"
        );
    }

    #[test]
    fn rows_are_ordered_method_then_eps_desc_then_h_desc() {
        let mut cfg = tiny_config();
        cfg.methods = vec![Method::S2Vp, Method::S2New];
        cfg.eps_list = vec![2f64.powi(-5), 2f64.powi(-3)];
        cfg.h_list = vec![2f64.powi(-6), 2f64.powi(-4)];
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 8);
        let key: Vec<(Method, f64, f64)> = rows.iter().map(|r| (r.method, r.eps, r.h)).collect();
        let mut expected = key.clone();
        expected.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then(b.1.partial_cmp(&a.1).unwrap())
                .then(b.2.partial_cmp(&a.2).unwrap())
        });
        assert_eq!(key, expected);
        // Every cell appears exactly once.
        let mut dedup = key.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 8);
    }

    #[test]
    fn parallel_execution_matches_serial() {
        let mut cfg = tiny_config();
        cfg.methods = vec![Method::S2New, Method::S2Vp];
        cfg.h_list = vec![2f64.powi(-4), 2f64.powi(-5), 2f64.powi(-6)];
        let serial = run_sweep(&cfg).unwrap();
        cfg.jobs = 4;
        let parallel = run_sweep(&cfg).unwrap();
        assert_eq!(sweep_csv(&serial), sweep_csv(&parallel));
    }

    #[test]
    fn reference_caching_is_observationally_invisible() {
        // A cell computed inside a multi-cell sweep (cached reference) equals
        // the same cell computed alone (fresh reference).
        let mut cfg = tiny_config();
        cfg.h_list = vec![2f64.powi(-4), 2f64.powi(-5)];
        let combined = run_sweep(&cfg).unwrap();
        cfg.h_list = vec![2f64.powi(-5)];
        let alone = run_sweep(&cfg).unwrap();
        let from_combined = combined.iter().find(|r| r.h == 2f64.powi(-5)).unwrap();
        assert_eq!(from_combined.errx, alone[0].errx);
        assert_eq!(from_combined.errv_par, alone[0].errv_par);
        assert_eq!(from_combined.e_h_final, alone[0].e_h_final);
    }

    #[test]
    fn sweep_runs_are_byte_identical() {
        let mut cfg = tiny_config();
        cfg.h_list = vec![2f64.powi(-4), 2f64.powi(-5)];
        let a = sweep_csv(&run_sweep(&cfg).unwrap());
        let b = sweep_csv(&run_sweep(&cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn failed_cells_become_error_rows() {
        // A problem whose trajectory starts at the Coulomb singularity fails
        // per cell without aborting the sweep.
        let mut broken = by_name("p1-uniform").unwrap();
        broken.x0 = crate::smallmat::Vec3::ZERO;
        let mut cfg = SweepConfig::new(
            broken,
            vec![Method::S2New],
            vec![2f64.powi(-4)],
            vec![2f64.powi(-4)],
        );
        cfg.t_end = 0.5;
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].status, CellStatus::Error);
        assert!(!rows[0].reason.is_empty());
        assert!(rows[0].errx.is_nan());
        let csv = sweep_csv(&rows);
        assert!(csv.contains(",error,"));
    }

    #[test]
    fn csv_shape_and_quoting() {
        let rows = run_sweep(&tiny_config()).unwrap();
        let csv = sweep_csv(&rows);
        let lines: Vec<&str> = csv.split("\r\n").filter(|l| !l.is_empty()).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], SWEEP_CSV_HEADER);
        assert_eq!(lines[1].split(',').count(), 12);

        assert_eq!(sweep_csv(&[]), format!("{SWEEP_CSV_HEADER}\r\n"));
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }

    #[test]
    fn convergence_study_fits_second_order() {
        let mut cfg = tiny_config();
        cfg.eps_list = vec![2f64.powi(-4)];
        cfg.h_list = vec![2f64.powi(-4), 2f64.powi(-5), 2f64.powi(-6), 2f64.powi(-7)];
        let study = convergence_study(&cfg).unwrap();
        assert_eq!(study.fits.len(), 1);
        let (method, eps, fit) = study.fits[0];
        assert_eq!(method, Method::S2New);
        assert_eq!(eps, 2f64.powi(-4));
        assert!(
            (1.6..2.4).contains(&fit.slope),
            "slope {} out of band",
            fit.slope
        );
    }

    #[test]
    fn energy_study_of_two_samples_starts_at_zero() {
        let p = by_name("p1-uniform").unwrap();
        let h = 2f64.powi(-6);
        let series = energy_study(&p, Method::S2New, 2f64.powi(-4), h, h, 1).unwrap();
        assert_eq!(series.e_h.len(), 2);
        assert_eq!(series.e_h[0], 0.0);
    }
}
