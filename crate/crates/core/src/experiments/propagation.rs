use super::config::ExperimentConfig;
use super::report::{Report, Table};
use super::three_balls::{ball, holder_residual};
use super::{build_patch, build_system, carve, complex_gaussian, rng_for, RunContext};
use crate::analysis::{fit_power, hcurl_norm_e};
use crate::error::{Error, GeometryError};
use crate::geometry::{chain_of_balls, cube_cover, volume_bound, Region, Role};
use crate::solver::TangentialTrace;

/// Chains from `x0` to every cover-cube center of `g`, each checked against its invariants.
/// Returns `(chains, longest chain, volume bound)`.
pub fn chains_for(
    g: &Region<f64>,
    host: &Region<f64>,
    x0: [f64; 3],
    r1: f64,
    radii: Option<(f64, f64)>,
) -> Result<(usize, usize, f64), Error> {
    let cubes = cube_cover(g, r1)?;
    let mut longest = 0;
    for c in &cubes {
        let chain = chain_of_balls(&[x0, c.center()], r1, host, radii)?;
        chain.check_invariants(host)?;
        longest = longest.max(chain.len());
    }
    Ok((cubes.len(), longest, volume_bound(host, r1)))
}

pub fn run_propagation(cfg: &ExperimentConfig, _ctx: &RunContext) -> Result<Report, Error> {
    let mut report = Report::new(cfg);
    let b = cfg.regions.balls.clone().ok_or_else(|| Error::Experiment("regions.balls is required".into()))?;
    let r0 = b.r0.ok_or_else(|| Error::Experiment("regions.balls.r0 is required".into()))?;
    let sys = build_system(cfg)?;
    let grid = sys.grid().clone();
    let g = carve(&grid, cfg.regions.g.as_ref(), "G", Role::ProbeG)?;
    let h = grid.h();
    if !g.contains_ball(b.center, 0.5 * r0) {
        return Err(GeometryError::Hypothesis("B(x0, r0/2) is not contained in G".into()).into());
    }
    if !g.is_compactly_contained() {
        return Err(GeometryError::Hypothesis("dist(G, boundary) must exceed one cell".into()).into());
    }
    if h > 0.5 * r0 {
        return Err(GeometryError::Hypothesis(format!("h = {h} exceeds r0/2 = {}", 0.5 * r0)).into());
    }
    let omega = Region::omega(&grid);
    let (chains, longest, bound) = chains_for(&g, &omega, b.center, b.r1, Some((b.r2, b.r3)))?;
    report.check("chain_invariants", chains as f64, "all chains valid", true);
    report.note(format!("{chains} chains, longest {longest} balls, volume bound {bound:.3e}"));

    let data_ball = ball(&grid, b.center, r0)?;
    let patch = build_patch(cfg, &grid)?;
    let traces: Vec<TangentialTrace<f64>> = (0..cfg.samples)
        .map(|k| TangentialTrace::new(patch.clone(), complex_gaussian(&mut rng_for(cfg.seed(), "propagation", k as u64), patch.len())))
        .collect::<Result<_, _>>()?;
    let mut sols = Vec::with_capacity(traces.len());
    for chunk in traces.chunks(64) {
        sols.extend(sys.solve_bvp_many(chunk)?);
    }
    let m0 = b.m0;
    let mut t = Table::new("propagation", &["sample", "eta", "zeta", "norm_g"]);
    let mut triples = Vec::new();
    for (k, s) in sols.iter().enumerate() {
        let eta = hcurl_norm_e(&data_ball, &s.e)?;
        let zeta = hcurl_norm_e(&omega, &s.e)?;
        let ng = hcurl_norm_e(&g, &s.e)?;
        t.push(vec![k as f64, eta, zeta, ng]);
        triples.push((eta + m0, ng + m0, zeta + m0));
    }
    report.tables.push(t);
    let fit = fit_power(&triples)?;
    report.check("delta_in_open_unit_interval", fit.exponent, "in (0, 1)", fit.exponent > 0.0 && fit.exponent < 1.0);
    report.check_le("max_log_residual", holder_residual(&fit, &triples), 0.0);
    report.fit("propagation", fit);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{carve_region, Grid, Shape};

    #[test]
    fn chains_cover_a_box() {
        let grid = Grid::unit_cube(12).unwrap();
        let g = carve_region(&grid, &Shape::Box { lo: [0.3; 3], hi: [0.7; 3] }, Role::ProbeG).unwrap();
        let (n, longest, bound) = chains_for(&g, &Region::omega(&grid), [0.5; 3], 0.025, None).unwrap();
        assert!(n > 0 && longest >= 2 && (longest as f64) <= bound);
    }

    #[test]
    fn region_inside_the_data_ball_is_bounded_by_it() {
        let grid = Grid::unit_cube(8).unwrap();
        let inner = ball(&grid, [0.5; 3], 0.15).unwrap();
        let outer = ball(&grid, [0.5; 3], 0.3).unwrap();
        let e: Vec<_> = complex_gaussian(&mut rng_for(3, "t", 0), grid.edge_count());
        assert!(hcurl_norm_e(&inner, &e).unwrap() <= hcurl_norm_e(&outer, &e).unwrap());
    }
}
