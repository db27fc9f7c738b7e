//! Plain-text outputs: solution CSV (with a reader), path JSON, gnuplot
//! grids and convergence tables.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a file back reproduces every value bit for bit.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use mixhess_core::grid::{Grid, NodeKind, Role};
use mixhess_core::hessop::spectral;
use mixhess_core::solver::{ContinuationResult, DiscreteState, Problem};
use mixhess_core::symfun::sigma;

pub const SOLUTION_HEADER: &str = "i,j,x,y,kind,v,grad_norm,uxx,uxy,uyy,lambda1,lambda2";

/// One line of `solution.csv`. Derivative columns are empty on boundary
/// nodes, where no centred stencil exists.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionRow {
    pub i: usize,
    pub j: usize,
    pub x: f64,
    pub y: f64,
    pub kind: String,
    pub v: f64,
    pub derivs: Option<Derivs>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivs {
    pub grad_norm: f64,
    pub uxx: f64,
    pub uxy: f64,
    pub uyy: f64,
    pub lambda: [f64; 2],
}

pub fn solution_rows(grid: &Grid, v: &[f64]) -> Vec<SolutionRow> {
    let (nx, _) = grid.dims();
    (0..grid.num_unknowns())
        .map(|m| {
            let g = grid.grid_index(m);
            let p = grid.point_of_unknown(m);
            let (kind, derivs) = match grid.role(m) {
                Role::Interior(i) => {
                    let node = &grid.interior()[i];
                    let w = grid.hessian_at(v, node);
                    let gr = grid.gradient_at(v, node);
                    let e = spectral(&w).eigenvalues;
                    let d = Derivs {
                        grad_norm: gr[0].hypot(gr[1]),
                        uxx: w.get(0, 0),
                        uxy: w.get(0, 1),
                        uyy: w.get(1, 1),
                        lambda: [e.get(0), e.get(1)],
                    };
                    (NodeKind::Interior, Some(d))
                }
                Role::Boundary(_) => (NodeKind::Boundary, None),
            };
            SolutionRow { i: g % nx, j: g / nx, x: p[0], y: p[1], kind: kind.label().into(), v: v[m], derivs }
        })
        .collect()
}

pub fn format_solution_csv(rows: &[SolutionRow]) -> String {
    let mut s = String::new();
    s.push_str(SOLUTION_HEADER);
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{},{},{},{},{}", r.i, r.j, r.x, r.y, r.kind, r.v);
        match &r.derivs {
            Some(d) => {
                let _ = writeln!(s, ",{},{},{},{},{},{}", d.grad_norm, d.uxx, d.uxy, d.uyy, d.lambda[0], d.lambda[1]);
            }
            None => s.push_str(",,,,,,\n"),
        }
    }
    s
}

#[derive(Debug, thiserror::Error)]
#[error("solution.csv line {line}: {message}")]
pub struct CsvError {
    pub line: usize,
    pub message: String,
}

/// Reads what [`format_solution_csv`] writes.
pub fn parse_solution_csv(text: &str) -> Result<Vec<SolutionRow>, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SOLUTION_HEADER => {}
        _ => return Err(CsvError { line: 1, message: format!("expected header {SOLUTION_HEADER}") }),
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| CsvError { line: n + 1, message };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(err(format!("expected 12 fields, found {}", f.len())));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|e| err(format!("field {}: {e}", k + 1)));
        let idx = |k: usize| f[k].parse::<usize>().map_err(|e| err(format!("field {}: {e}", k + 1)));
        let derivs = if f[6..].iter().all(|s| s.is_empty()) {
            None
        } else {
            Some(Derivs {
                grad_norm: num(6)?,
                uxx: num(7)?,
                uxy: num(8)?,
                uyy: num(9)?,
                lambda: [num(10)?, num(11)?],
            })
        };
        rows.push(SolutionRow { i: idx(0)?, j: idx(1)?, x: num(2)?, y: num(3)?, kind: f[4].into(), v: num(5)?, derivs });
    }
    Ok(rows)
}

pub fn read_solution_csv(path: &Path) -> io::Result<Vec<SolutionRow>> {
    let text = std::fs::read_to_string(path)?;
    parse_solution_csv(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Gnuplot grid blocks `x y value`, one block per grid row, separated by
/// blank lines. Nodes without a value are written as `NaN`.
pub fn format_gnuplot_grid(grid: &Grid, value: impl Fn(usize) -> Option<f64>) -> String {
    let (nx, ny) = grid.dims();
    let mut s = String::new();
    for j in 0..ny {
        for i in 0..nx {
            let g = j * nx + i;
            let p = grid.grid_point(g);
            let v = grid.unknown_at(g).and_then(&value).unwrap_or(f64::NAN);
            let _ = writeln!(s, "{} {} {}", p[0], p[1], if v.is_nan() { "NaN".into() } else { v.to_string() });
        }
        s.push('\n');
    }
    s
}

/// `min_{1≤i≤k} σ_i(λ)` at each interior node; positive means admissible.
pub fn admissibility_margin(grid: &Grid, state: &DiscreteState, k: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; grid.num_unknowns()];
    for (node, w) in grid.interior().iter().zip(&state.hessians) {
        let e = spectral(w).eigenvalues;
        out[node.unknown] = Some((1..=k as isize).map(|i| sigma(i, &e)).fold(f64::INFINITY, f64::min));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathRecordOut {
    pub eps: f64,
    pub c_est: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub damping: Vec<f64>,
    pub residual_inf: f64,
    pub linear_residual: f64,
    pub sup_eps_u: f64,
    pub sup_grad: f64,
    pub sup_hessian: f64,
    pub audit_passed: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitOut {
    pub c: f64,
    pub c_last: f64,
    pub interior_residual: f64,
    pub boundary_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathOut {
    pub h: f64,
    pub k: usize,
    pub unknowns: usize,
    pub records: Vec<PathRecordOut>,
    pub limit: LimitOut,
    pub cauchy: f64,
    pub cauchy_steps: Vec<f64>,
    pub sup_grad: f64,
}

pub fn path_out(problem: &Problem<'_>, res: &ContinuationResult) -> PathOut {
    let grid = problem.grid();
    PathOut {
        h: grid.h(),
        k: problem.k(),
        unknowns: grid.num_unknowns(),
        records: res
            .records
            .iter()
            .map(|r| PathRecordOut {
                eps: r.eps,
                c_est: r.c_est,
                iterations: r.stats.iterations,
                residual_history: r.stats.residual_history.clone(),
                damping: r.stats.damping.clone(),
                residual_inf: r.state.residual_inf(),
                linear_residual: r.stats.linear_residual,
                sup_eps_u: r.sup_eps_u,
                sup_grad: r.sup_grad,
                sup_hessian: r.sup_hessian,
                audit_passed: r.audit.as_ref().map(|a| a.passed()),
            })
            .collect(),
        limit: LimitOut {
            c: res.limit.c,
            c_last: res.limit.c_last,
            interior_residual: res.limit.interior_residual,
            boundary_residual: res.limit.boundary_residual,
        },
        cauchy: res.cauchy,
        cauchy_steps: res.cauchy_steps.clone(),
        sup_grad: res.sup_grad,
    }
}

/// `log(e_a/e_b) / log(h_a/h_b)` between consecutive rows.
pub fn observed_orders(h: &[f64], err: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None];
    for w in 0..h.len().saturating_sub(1) {
        let o = (err[w] / err[w + 1]).ln() / (h[w] / h[w + 1]).ln();
        out.push(o.is_finite().then_some(o));
    }
    out
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mixhess_core::grid::DomainSpec;

    #[test]
    fn solution_csv_round_trips_bit_for_bit() {
        let grid = Grid::build(DomainSpec::ellipse(1.0, 0.8), 1.0 / 20.0).unwrap();
        let v: Vec<f64> = grid.unknown_points().map(|p| (p[0] * 3.1).sin() / 7.0 + p[1] * p[1] / 3.0).collect();
        let rows = solution_rows(&grid, &v);
        let back = parse_solution_csv(&format_solution_csv(&rows)).unwrap();
        assert_eq!(rows, back);
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.v.to_bits(), b.v.to_bits());
        }
    }

    #[test]
    fn reader_rejects_bad_files() {
        assert!(parse_solution_csv("x,y\n").is_err());
        let bad = format!("{SOLUTION_HEADER}\n1,2,0.5\n");
        assert_eq!(parse_solution_csv(&bad).unwrap_err().line, 2);
    }

    #[test]
    fn orders_from_halving() {
        let o = observed_orders(&[0.1, 0.05, 0.025], &[4e-2, 1e-2, 2.5e-3]);
        assert!(o[0].is_none());
        assert!((o[1].unwrap() - 2.0).abs() < 1e-12 && (o[2].unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gnuplot_blocks_cover_the_grid() {
        let grid = Grid::build(DomainSpec::disk(1.0), 1.0 / 16.0).unwrap();
        let s = format_gnuplot_grid(&grid, |m| Some(m as f64));
        let (nx, ny) = grid.dims();
        assert_eq!(s.lines().filter(|l| !l.is_empty()).count(), nx * ny);
        assert_eq!(s.lines().filter(|l| l.is_empty()).count(), ny);
        assert_eq!(s.lines().filter(|l| l.ends_with("NaN")).count(), nx * ny - grid.num_unknowns());
    }
}
