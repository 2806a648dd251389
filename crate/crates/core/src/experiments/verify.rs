use rand::Rng;

use super::config::ExperimentConfig;
use super::report::{Report, Table};
use super::{rng_for, RunContext};
use crate::error::Error;
use crate::geometry::Grid;
use crate::materials::{MaterialSpec, TensorSpec};
use crate::oracle::{convergence_study, SolutionSpec};
use crate::solver::incidence::{curl, div, grad};

pub const MIMETIC_VECTORS: usize = 100;

fn default_solution() -> SolutionSpec {
    SolutionSpec::PlaneWave { direction: [1.0, 2.0, 2.0], polarization: [[2.0, 0.0], [-1.0, 0.0], [0.0, 0.0]] }
}

fn scalar_medium(spec: &MaterialSpec) -> Result<(f64, f64), Error> {
    match spec {
        MaterialSpec::Constant { eps: TensorSpec::Scalar(e), mu: TensorSpec::Scalar(m) } => Ok((*e, *m)),
        _ => Err(Error::Experiment("verify_solver needs a constant isotropic material".into())),
    }
}

/// Largest `|div(curl e)|` and `|curl(grad φ)|` over random integer vectors; zero means
/// exact cancellation.
pub fn mimetic_defect(grid: &Grid<f64>, seed: u64, vectors: usize) -> (i64, i64) {
    let mut worst = (0i64, 0i64);
    for k in 0..vectors {
        let mut rng = rng_for(seed, "mimetic", k as u64);
        let e: Vec<i64> = (0..grid.edge_count()).map(|_| rng.random_range(-1_000_000..=1_000_000)).collect();
        let phi: Vec<i64> = (0..grid.node_count()).map(|_| rng.random_range(-1_000_000..=1_000_000)).collect();
        let dc = div(grid, &curl(grid, &e)).into_iter().map(i64::abs).max().unwrap_or(0);
        let cg = curl(grid, &grad(grid, &phi)).into_iter().map(i64::abs).max().unwrap_or(0);
        worst = (worst.0.max(dc), worst.1.max(cg));
    }
    worst
}

pub fn run_verify_solver(cfg: &ExperimentConfig, _ctx: &RunContext) -> Result<Report, Error> {
    let mut report = Report::new(cfg);
    let (eps0, mu0) = scalar_medium(&cfg.material)?;
    let sol = cfg.verify.solution.clone().unwrap_or_else(default_solution).build(cfg.omega, eps0, mu0)?;
    let base = cfg.grid.build()?;
    let extent = base.h() * base.n()[0] as f64;
    let grids: Vec<Grid<f64>> = cfg
        .verify
        .grids
        .iter()
        .map(|&n| {
            let m = base.n().map(|k| k * n / base.n()[0]);
            Grid::new(m, extent / n as f64, base.origin())
        })
        .collect::<Result<_, _>>()?;
    let rows = convergence_study(&sol, &grids, &cfg.solver.options())?;
    let mut t = Table::new("convergence", &["n", "h", "error", "order"]);
    for r in &rows {
        t.push(vec![r.n[0] as f64, r.h, r.error, r.order.unwrap_or(0.0)]);
    }
    report.tables.push(t);
    report.note("order is 0 on the coarsest grid, where it is undefined");
    let min_order = rows.iter().filter_map(|r| r.order).fold(f64::INFINITY, f64::min);
    report.check_ge("min_convergence_order", min_order, cfg.tolerances.order_min);

    let (dc, cg) = mimetic_defect(&base, cfg.seed(), MIMETIC_VECTORS);
    let mut m = Table::new("mimetic", &["vectors", "max_div_curl", "max_curl_grad"]);
    m.push(vec![MIMETIC_VECTORS as f64, dc as f64, cg as f64]);
    report.tables.push(m);
    report.check("div_curl_exact", dc as f64, "== 0", dc == 0);
    report.check("curl_grad_exact", cg as f64, "== 0", cg == 0);
    Ok(report)
}
