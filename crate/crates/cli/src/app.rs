//! Orchestration behind the `run`, `sweep` and `check` commands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use mixhess_core::exprs::ScalarField;
use mixhess_core::hessop::{g_lambda, g_value, operator, trace_bounds_lambda, CoefficientSample};
use mixhess_core::sampling::{random_admissible_matrix, random_alpha, random_in_cone, random_tuple};
use mixhess_core::solver::{continuation, initial_guess, Problem, SolverError};
use mixhess_core::symfun::{sigma, sigma_del1, ConeLevel};
use mixhess_core::verify::{gradient_bound_audit, hessian_bound_audit, AuditReport};

use crate::config::{ConfigError, RunConfig};
use crate::output::{
    admissibility_margin, fmt_opt, format_gnuplot_grid, format_solution_csv, observed_orders, path_out, solution_rows,
};

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver: {0}")]
    Solver(#[from] SolverError),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl AppError {
    /// 1 for usage, configuration and I/O problems, 2 for solver failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) | AppError::Io { .. } => 1,
            AppError::Solver(_) => 2,
        }
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), AppError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| AppError::Io { path, source })
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub h: f64,
    pub eps_min: f64,
    pub c: f64,
    pub c_last: f64,
    pub newton_iterations: usize,
    pub levels: usize,
    /// `None` with audits off
    pub audits_passed: Option<bool>,
    pub linf_error: Option<f64>,
    pub c_error: Option<f64>,
}

/// Solves one configuration and writes every output file into `out`.
pub fn run(cfg: &RunConfig, out: &Path, audits: bool) -> Result<RunSummary, AppError> {
    let prepared = cfg.prepare()?;
    let grid = &prepared.grid;
    let problem = Problem::new(grid, prepared.k, &prepared.field).map_err(|e| match e {
        SolverError::BadProblem(m) => AppError::Config(ConfigError::Invalid(m)),
        SolverError::Data { .. } => AppError::Config(ConfigError::Invalid(e.to_string())),
        other => AppError::Solver(other),
    })?;
    fs::create_dir_all(out).map_err(|source| AppError::Io { path: out.into(), source })?;
    let res = continuation(&problem, &prepared.schedule, &initial_guess(&problem), audits)?;
    let last = res.records.last().expect("at least one level");

    write(out, "solution.csv", &format_solution_csv(&solution_rows(grid, &res.limit.v)))?;
    let json = serde_json::to_string_pretty(&path_out(&problem, &res)).expect("plain data serializes");
    write(out, "path.json", &(json + "\n"))?;
    write(out, "u.dat", &format_gnuplot_grid(grid, |m| Some(res.limit.v[m])))?;
    write(out, "residual.dat", &format_gnuplot_grid(grid, |m| Some(last.state.residual[m])))?;
    let margin = admissibility_margin(grid, &last.state, prepared.k);
    write(out, "margin.dat", &format_gnuplot_grid(grid, |m| margin[m]))?;

    let audits_passed = if audits {
        let mut text = String::new();
        let mut ok = true;
        for r in &res.records {
            let rep = r.audit.as_ref().expect("audited run");
            ok &= rep.passed();
            let _ = writeln!(text, "== eps = {:e}", r.eps);
            let _ = write!(text, "{rep}");
        }
        let path = AuditReport {
            entries: vec![
                gradient_bound_audit(&res.records, prepared.schedule.eps0),
                hessian_bound_audit(&res.records, prepared.schedule.eps0),
            ],
        };
        ok &= path.passed();
        let _ = writeln!(text, "== path");
        let _ = write!(text, "{path}");
        let _ = writeln!(text, "== overall {}", if ok { "PASS" } else { "FAIL" });
        write(out, "audit.txt", &text)?;
        Some(ok)
    } else {
        None
    };

    let (mut linf_error, mut c_error) = (None, None);
    if let Some((u_ref, c_ref)) = &prepared.reference {
        let exact: Vec<f64> = grid
            .unknown_points()
            .map(|p| u_ref.value(p))
            .collect::<Result<_, _>>()
            .map_err(|e| AppError::Config(ConfigError::Invalid(format!("reference.u: {e}"))))?;
        let mean = grid.mean(&exact);
        let err = res.limit.v.iter().zip(&exact).fold(0.0f64, |m, (v, e)| m.max((v - (e - mean)).abs()));
        linf_error = Some(err);
        c_error = c_ref.map(|c| (res.limit.c - c).abs());
        let mut csv = String::from("h,linf_error,c_error\n");
        let _ = writeln!(csv, "{},{},{}", grid.h(), err, fmt_opt(c_error));
        write(out, "convergence.csv", &csv)?;
    }

    Ok(RunSummary {
        h: grid.h(),
        eps_min: prepared.schedule.eps_min,
        c: res.limit.c,
        c_last: res.limit.c_last,
        newton_iterations: res.records.iter().map(|r| r.stats.iterations).sum(),
        levels: res.records.len(),
        audits_passed,
        linf_error,
        c_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    H,
    EpsMin,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::H => "h",
            SweepParam::EpsMin => "eps_min",
        }
    }
}

/// Repeats [`run`] over `values`, each into its own subdirectory of `out`,
/// and writes `sweep.csv`. Returns the per-value summaries.
pub fn sweep(
    cfg: &RunConfig,
    param: SweepParam,
    values: &[f64],
    out: &Path,
    audits: bool,
) -> Result<Vec<RunSummary>, AppError> {
    if values.is_empty() {
        return Err(AppError::Config(ConfigError::Invalid("sweep needs at least one value".into())));
    }
    let mut runs = Vec::with_capacity(values.len());
    for (i, &v) in values.iter().enumerate() {
        let mut c = cfg.clone();
        match param {
            SweepParam::H => c.h = v,
            SweepParam::EpsMin => c.schedule.eps_min = v,
        }
        let dir = out.join(format!("{:02}_{}_{}", i, param.name(), v));
        runs.push(run(&c, &dir, audits)?);
    }
    let mut csv = String::new();
    match param {
        SweepParam::H => {
            let h: Vec<f64> = runs.iter().map(|r| r.h).collect();
            let err: Vec<f64> = runs.iter().map(|r| r.linf_error.unwrap_or(f64::NAN)).collect();
            let cerr: Vec<f64> = runs.iter().map(|r| r.c_error.unwrap_or(f64::NAN)).collect();
            let orders = observed_orders(&h, &err);
            let c_orders = observed_orders(&h, &cerr);
            csv.push_str("h,c,c_last,linf_error,order,c_error,c_order,audits\n");
            for (i, r) in runs.iter().enumerate() {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{}",
                    r.h,
                    r.c,
                    r.c_last,
                    fmt_opt(r.linf_error),
                    fmt_opt(orders[i]),
                    fmt_opt(r.c_error),
                    fmt_opt(c_orders[i]),
                    audit_label(r.audits_passed)
                );
            }
        }
        SweepParam::EpsMin => {
            csv.push_str("eps_min,c_last,c,c_last_change,linf_error,audits\n");
            for (i, r) in runs.iter().enumerate() {
                let change = (i > 0).then(|| (r.c_last - runs[i - 1].c_last).abs());
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    r.eps_min,
                    r.c_last,
                    r.c,
                    fmt_opt(change),
                    fmt_opt(r.linf_error),
                    audit_label(r.audits_passed)
                );
            }
        }
    }
    fs::create_dir_all(out).map_err(|source| AppError::Io { path: out.into(), source })?;
    write(out, "sweep.csv", &csv)?;
    Ok(runs)
}

fn audit_label(a: Option<bool>) -> &'static str {
    match a {
        Some(true) => "pass",
        Some(false) => "fail",
        None => "off",
    }
}

#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Seeded property sampling of the pointwise algebra: symmetric-function
/// identities, the operator gradient against central differences, and the
/// trace bounds at on-equation points.
pub fn check(seed: u64, samples: usize) -> Vec<CheckLine> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut lines = Vec::new();

    let mut worst = 0.0f64;
    for _ in 0..samples {
        let n = rng.gen_range(1..=8);
        let lam = random_tuple(&mut rng, n, 10.0);
        let abs = lam.abs();
        for m in 1..=n as isize {
            let scale = sigma(m, &abs).max(f64::MIN_POSITIVE);
            for i in 0..n {
                let lhs = sigma(m, &lam);
                let rhs = sigma_del1(m, &lam, i).unwrap() + lam.get(i) * sigma_del1(m - 1, &lam, i).unwrap();
                worst = worst.max((lhs - rhs).abs() / scale);
            }
        }
    }
    lines.push(CheckLine {
        name: "sigma_expansion",
        passed: worst <= 1e-12,
        detail: format!("max relative defect {worst:.3e} over {samples} tuples"),
    });

    let mut worst = 0.0f64;
    for _ in 0..samples {
        let n = rng.gen_range(2..=3);
        let k = rng.gen_range(2..=n);
        let (w, lam) = random_admissible_matrix(&mut rng, n, ConeLevel::new(k, n).unwrap(), 3.0);
        if (1..=k as isize).any(|j| sigma(j, &lam) < 0.05) {
            continue;
        }
        let alpha = random_alpha(&mut rng, k, 0.05, 2.0);
        let grad = operator(&w, &alpha).unwrap().grad;
        let t = 1e-5;
        let mut scale = 0.0f64;
        let mut err = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let (mut wp, mut wm) = (w, w);
                wp.set(i, j, w.get(i, j) + t);
                wm.set(i, j, w.get(i, j) - t);
                let d = (g_value(&wp, &alpha).unwrap() - g_value(&wm, &alpha).unwrap()) / (2.0 * t);
                let fd = if i == j { d } else { 0.5 * d };
                err = err.max((fd - grad.get(i, j)).abs());
                scale = scale.max(grad.get(i, j).abs());
            }
        }
        worst = worst.max(err / scale);
    }
    lines.push(CheckLine {
        name: "operator_gradient",
        passed: worst <= 1e-6,
        detail: format!("max relative deviation from central differences {worst:.3e}"),
    });

    let mut worst = f64::INFINITY;
    let mut done = 0;
    while done < samples {
        let n = rng.gen_range(2..=8);
        let k = rng.gen_range(2..=n);
        let lam = random_in_cone(&mut rng, n, ConeLevel::new(k, n).unwrap(), 5.0);
        let mut a: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
        let g = g_lambda(&lam, &CoefficientSample::new(&a).unwrap()).unwrap().g;
        if g <= 0.0 {
            continue;
        }
        a[k - 1] = g;
        let tb = trace_bounds_lambda(&g_lambda(&lam, &CoefficientSample::new(&a).unwrap()).unwrap());
        worst = worst.min((tb.trace - tb.lower).min(tb.upper - tb.trace) / tb.upper);
        done += 1;
    }
    lines.push(CheckLine {
        name: "trace_bounds",
        passed: worst >= -1e-12,
        detail: format!("min relative margin {worst:.3e} over {samples} on-equation tuples"),
    });
    lines
}
