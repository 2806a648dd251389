use super::config::{BallsConfig, ExperimentConfig};
use super::report::{Report, Table};
use super::{build_system, complex_gaussian, rng_for, RunContext};
use crate::analysis::{fit_holder, hcurl_norm_e, FitResult};
use crate::error::{Error, GeometryError};
use crate::geometry::{carve_region, Grid, Region, Role, Shape};
use crate::solver::SystemMatrix;

pub(crate) fn ball(grid: &Grid<f64>, center: [f64; 3], r: f64) -> Result<Region<f64>, Error> {
    Ok(carve_region(grid, &Shape::Ball { center, radius: r }, Role::Ball)?)
}

/// Concentric balls with `r1 < r2 < r3/2`, the largest inside `Ω`.
pub fn concentric_balls(grid: &Grid<f64>, b: &BallsConfig) -> Result<[Region<f64>; 3], Error> {
    if !(b.r1 > 0.0 && b.r1 < b.r2 && b.r2 < 0.5 * b.r3) {
        return Err(GeometryError::Hypothesis(format!("ball radii must satisfy 0 < r1 < r2 < r3/2, got {}, {}, {}", b.r1, b.r2, b.r3)).into());
    }
    if grid.distance_to_boundary(b.center) < b.r3 {
        return Err(GeometryError::Hypothesis("ball B3 leaves the domain".into()).into());
    }
    Ok([ball(grid, b.center, b.r1)?, ball(grid, b.center, b.r2)?, ball(grid, b.center, b.r3)?])
}

/// Random homogeneous solutions from Gaussian data on every boundary edge.
pub(crate) fn random_solutions(sys: &SystemMatrix<f64>, seed: u64, stream: &str, count: usize) -> Result<Vec<crate::solver::FieldPair<f64>>, Error> {
    let nb = sys.boundary_edges().len();
    let ubs: Vec<_> = (0..count).map(|k| complex_gaussian(&mut rng_for(seed, stream, k as u64), nb)).collect();
    let mut out = Vec::with_capacity(count);
    for chunk in ubs.chunks(64) {
        out.extend(sys.solve_boundary_values(chunk)?);
    }
    Ok(out)
}

/// Largest `log(a2) − τ log(a1) − (1−τ) log(a3) − log C`; nonpositive iff the bound holds.
pub fn holder_residual(fit: &FitResult, t: &[(f64, f64, f64)]) -> f64 {
    let tau = fit.exponent;
    t.iter().map(|&(a, b, c)| b.ln() - tau * a.ln() - (1.0 - tau) * c.ln() - fit.c.ln()).fold(f64::NEG_INFINITY, f64::max)
}

pub fn run_three_balls(cfg: &ExperimentConfig, _ctx: &RunContext) -> Result<Report, Error> {
    let mut report = Report::new(cfg);
    let b = cfg.regions.balls.clone().ok_or_else(|| Error::Experiment("regions.balls is required".into()))?;
    let sys = build_system(cfg)?;
    let balls = concentric_balls(sys.grid(), &b)?;
    report.note(format!("ball cell counts {}, {}, {}", balls[0].cell_count(), balls[1].cell_count(), balls[2].cell_count()));
    let sols = random_solutions(&sys, cfg.seed(), "three-balls", cfg.samples)?;
    let mut t = Table::new("three_balls", &["sample", "norm_b1", "norm_b2", "norm_b3"]);
    let mut triples = Vec::new();
    for (k, s) in sols.iter().enumerate() {
        let n = [hcurl_norm_e(&balls[0], &s.e)?, hcurl_norm_e(&balls[1], &s.e)?, hcurl_norm_e(&balls[2], &s.e)?];
        t.push(vec![k as f64, n[0], n[1], n[2]]);
        triples.push((n[0], n[1], n[2]));
    }
    report.tables.push(t);
    let fit = fit_holder(&triples)?;
    report.check("tau_in_open_unit_interval", fit.exponent, "in (0, 1)", fit.exponent > 0.0 && fit.exponent < 1.0);
    report.check_le("max_log_residual", holder_residual(&fit, &triples), 0.0);
    if let Some(f) = &fit.flag {
        report.note(f.clone());
    }
    let tau = fit.exponent;
    report.fit("holder", fit);

    if b.m0 > 0.0 {
        let m0 = b.m0;
        let shifted: Vec<_> = triples.iter().map(|&(a, x, c)| (a + m0, x + m0, c + m0)).collect();
        let worst = shifted.iter().map(|&(a, _, c)| m0.ln() - tau * a.ln() - (1.0 - tau) * c.ln()).fold(f64::NEG_INFINITY, f64::max);
        report.check_le("source_offset_trivial_bound", worst, 0.0);
        let f2 = fit_holder(&shifted)?;
        report.check_le("source_offset_max_log_residual", holder_residual(&f2, &shifted), 0.0);
        report.fit("holder_with_m0", f2);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_constraint_is_enforced() {
        let g = Grid::unit_cube(8).unwrap();
        let bad = BallsConfig { center: [0.5; 3], r0: None, r1: 0.1, r2: 0.3, r3: 0.45, m0: 0.0 };
        assert!(concentric_balls(&g, &bad).is_err());
        let out = BallsConfig { center: [0.3, 0.5, 0.5], r0: None, r1: 0.05, r2: 0.1, r3: 0.4, m0: 0.0 };
        assert!(concentric_balls(&g, &out).is_err());
    }

    #[test]
    fn equal_norms_give_unit_constant() {
        let t = vec![(2.0, 2.0, 2.0); 5];
        let f = fit_holder(&t).unwrap();
        assert!((f.c - 1.0).abs() < 1e-12);
        assert!(holder_residual(&f, &t) <= 1e-12);
    }
}
