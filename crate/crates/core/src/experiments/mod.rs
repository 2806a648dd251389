//! Experiment drivers. Each takes a resolved config and returns a [`Report`].

pub mod cauchy;
pub mod config;
pub mod localization;
pub mod propagation;
pub mod report;
pub mod runge;
pub mod three_balls;
pub mod verify;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::analysis::{build_norm_weights, NormWeights};
use crate::error::Error;
use crate::geometry::{boundary_patch, carve_region, BoundaryPatch, Grid, Region, Role, Shape};
use crate::materials::make_material;
use crate::runge_op::{
    assemble_restriction, load_operator, load_svd, provenance_hash, store_operator, store_svd, weighted_svd,
    RestrictionOperator, SvdBundle,
};
use crate::scalar::{Complex, Fnv1a};
use crate::solver::SystemMatrix;

pub use cauchy::{cauchy_reconstruct, run_cauchy, CauchyData, CauchyProblem, Reconstruction};
pub use config::{echo, parse_config, ExperimentConfig, Strategy, Tag};
pub use localization::run_localization;
pub use propagation::run_propagation;
pub use report::{config_from_sidecar, Check, NamedFit, Report, StabilityBudget, Table};
pub use runge::run_runge;
pub use three_balls::run_three_balls;
pub use verify::run_verify_solver;

/// Settings that affect where work happens but never the numbers produced.
#[derive(Clone, Debug, Default)]
pub struct RunContext {
    /// Directory for operator and SVD caches; `None` disables caching.
    pub cache: Option<PathBuf>,
}

/// Runs the experiment named by the config tag and stamps the wall clock.
pub fn run(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Report, Error> {
    let start = Instant::now();
    let mut report = match cfg.experiment {
        Tag::Runge => run_runge(cfg, ctx),
        Tag::Cauchy => run_cauchy(cfg, ctx),
        Tag::ThreeBalls => run_three_balls(cfg, ctx),
        Tag::Propagation => run_propagation(cfg, ctx),
        Tag::Localization => run_localization(cfg, ctx),
        Tag::VerifySolver => run_verify_solver(cfg, ctx),
    }?;
    report.finish();
    report.wall_clock = start.elapsed().as_secs_f64();
    Ok(report)
}

pub(crate) fn build_system(cfg: &ExperimentConfig) -> Result<SystemMatrix<f64>, Error> {
    let grid = cfg.grid.build()?;
    let mat = make_material(&grid, &cfg.material)?;
    Ok(SystemMatrix::assemble_with(&grid, &mat, cfg.omega, cfg.solver.options())?)
}

pub(crate) fn build_patch(cfg: &ExperimentConfig, grid: &Grid<f64>) -> Result<BoundaryPatch<f64>, Error> {
    Ok(boundary_patch(grid, &cfg.patch.specs())?.with_rim(cfg.patch.rim)?)
}

pub(crate) fn carve(grid: &Grid<f64>, shape: Option<&Shape>, name: &str, role: Role) -> Result<Region<f64>, Error> {
    let shape = shape.ok_or_else(|| Error::Experiment(format!("regions.{name} is required for this experiment")))?;
    Ok(carve_region(grid, shape, role)?)
}

/// Independent deterministic stream for `(seed, stream, index)`.
pub(crate) fn rng_for(seed: u64, stream: &str, index: u64) -> ChaCha8Rng {
    let mut h = Fnv1a::new();
    h.write_u64(seed);
    h.write(stream.as_bytes());
    h.write_u64(index);
    ChaCha8Rng::seed_from_u64(h.finish())
}

/// Circular complex Gaussian entries with unit variance.
pub(crate) fn complex_gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex<f64>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex::new(s * re, s * im)
        })
        .collect()
}

fn cache_path(dir: &Path, what: &str, provenance: u64) -> PathBuf {
    dir.join(format!("{what}-{provenance:016x}.rgfo"))
}

/// Restriction operator and its weighted SVD, read from the cache when a valid entry exists.
pub(crate) fn operator_and_svd(
    sys: &SystemMatrix<f64>,
    weights: &NormWeights<f64>,
    ctx: &RunContext,
) -> Result<(RestrictionOperator<f64>, SvdBundle<f64>), Error> {
    let prov = provenance_hash(sys, weights);
    let Some(dir) = &ctx.cache else {
        let op = assemble_restriction(sys, weights)?;
        let svd = weighted_svd(&op)?;
        return Ok((op, svd));
    };
    std::fs::create_dir_all(dir)?;
    let op_path = cache_path(dir, "operator", prov);
    let op = match load_operator(&op_path, weights, prov) {
        Ok(op) => op,
        Err(e) => {
            if op_path.exists() {
                log::warn!("discarding cache entry {}: {e}", op_path.display());
            }
            let op = assemble_restriction(sys, weights)?;
            store_operator(&op, &op_path)?;
            op
        }
    };
    let svd_path = cache_path(dir, "svd", prov);
    let svd = match load_svd(&svd_path, prov) {
        Ok(s) => s,
        Err(_) => {
            let s = weighted_svd(&op)?;
            store_svd(&s, &svd_path)?;
            s
        }
    };
    Ok((op, svd))
}

pub(crate) fn weights_for(patch: &BoundaryPatch<f64>, region: &Region<f64>) -> Result<NormWeights<f64>, Error> {
    Ok(build_norm_weights(patch, region)?)
}

/// Length of the longest run of strict decreases.
pub(crate) fn longest_strict_decrease(v: &[f64]) -> usize {
    let mut best = 0;
    let mut run = 0;
    for w in v.windows(2) {
        if w[1] < w[0] {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_independent_and_reproducible() {
        let a = complex_gaussian(&mut rng_for(1, "x", 0), 4);
        assert_eq!(a, complex_gaussian(&mut rng_for(1, "x", 0), 4));
        assert_ne!(a, complex_gaussian(&mut rng_for(1, "x", 1), 4));
        assert_ne!(a, complex_gaussian(&mut rng_for(1, "y", 0), 4));
    }

    #[test]
    fn run_lengths_and_median() {
        assert_eq!(longest_strict_decrease(&[5.0, 4.0, 4.0, 3.0, 2.0, 1.0, 1.5]), 3);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
