//! Command-line front end: `run`, `verify` and `cache {ls|rm}`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::Error;
use crate::experiments::{self, parse_config, ExperimentConfig, RunContext, Tag};
use crate::store::{clear_cache, list_cache, Kind};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_TOLERANCE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "maxwell-runge", version, about = "Runge approximation and Cauchy stability experiments for time-harmonic Maxwell")]
pub struct Cli {
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Operator cache directory; overrides `output.cache`.
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Worker threads for parallel ladders.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Master seed; overrides `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log filter, e.g. `info` or `maxwell_runge=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment named by the config.
    Run { config: PathBuf },
    /// Run the solver verification on the config's grid and material.
    Verify { config: PathBuf },
    /// Inspect or clear the operator cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum CacheAction {
    Ls,
    Rm,
}

pub const DEFAULT_OUT: &str = "results";
pub const DEFAULT_CACHE: &str = "cache";

/// Everything a run needs besides the config contents.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub config: PathBuf,
    pub tag: Tag,
    pub out: PathBuf,
    pub cache: PathBuf,
    pub jobs: Option<usize>,
    pub log_level: String,
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Experiment(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn manifest(cli: &Cli, config: &Path, cfg: &ExperimentConfig) -> RunManifest {
    RunManifest {
        config: config.to_path_buf(),
        tag: cfg.experiment,
        out: cli.out.clone().or_else(|| cfg.output.dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| DEFAULT_OUT.into()),
        cache: cli.cache.clone().or_else(|| cfg.output.cache.as_ref().map(PathBuf::from)).unwrap_or_else(|| DEFAULT_CACHE.into()),
        jobs: cli.jobs,
        log_level: cli.log_level.clone(),
    }
}

fn run_config(cli: &Cli, path: &Path, force: Option<Tag>) -> Result<i32, Error> {
    let mut cfg = load(path, cli.seed)?;
    if let Some(tag) = force {
        cfg.experiment = tag;
        cfg = cfg.resolve()?;
    }
    let m = manifest(cli, path, &cfg);
    log::info!("running {} from {}", m.tag.name(), m.config.display());
    let report = experiments::run(&cfg, &RunContext { cache: Some(m.cache.clone()) })?;
    let files = report.write(&m.out)?;
    print!("{}", report.summary());
    for f in files {
        println!("  wrote {}", f.display());
    }
    Ok(if report.passed() { EXIT_PASS } else { EXIT_TOLERANCE })
}

fn cache_cmd(cli: &Cli, action: &CacheAction) -> Result<i32, Error> {
    let dir = cli.cache.clone().unwrap_or_else(|| DEFAULT_CACHE.into());
    match action {
        CacheAction::Ls => {
            for e in list_cache(&dir)? {
                match e.header {
                    Some(h) => {
                        let kind = Kind::from_u32(h.kind).map_or("unknown", Kind::name);
                        println!("{}\t{kind}\tv{}\t{:016x}\t{} bytes", e.path.display(), h.version, h.provenance, e.size);
                    }
                    None => println!("{}\tunreadable\t{} bytes", e.path.display(), e.size),
                }
            }
        }
        CacheAction::Rm => println!("removed {} entries from {}", clear_cache(&dir)?, dir.display()),
    }
    Ok(EXIT_PASS)
}

fn init(cli: &Cli) {
    let _ = env_logger::Builder::new().parse_filters(&cli.log_level).try_init();
    if let Some(n) = cli.jobs {
        // Set once per process; later calls keep the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Parses `argv` (program name first) and returns the process exit status.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_PASS };
        }
    };
    init(&cli);
    let res = match &cli.command {
        Command::Run { config } => run_config(&cli, config, None),
        Command::Verify { config } => run_config(&cli, config, Some(Tag::VerifySolver)),
        Command::Cache { action } => cache_cmd(&cli, action),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flags_anywhere() {
        let c = Cli::try_parse_from(["m", "run", "a.json", "--jobs", "2", "--seed", "9"]).unwrap();
        assert_eq!(c.jobs, Some(2));
        assert_eq!(c.seed, Some(9));
        assert!(matches!(c.command, Command::Run { .. }));
        assert!(Cli::try_parse_from(["m", "cache", "purge"]).is_err());
    }

    #[test]
    fn missing_config_is_an_error() {
        assert_eq!(run_cli(["m", "run", "/nonexistent/config.json"]), EXIT_ERROR);
    }
}
