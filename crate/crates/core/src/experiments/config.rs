use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::geometry::{Grid, PatchSpec, Rim, Shape, Side, Window};
use crate::materials::MaterialSpec;
use crate::oracle::SolutionSpec;
use crate::solver::SolverOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Runge,
    Cauchy,
    ThreeBalls,
    Propagation,
    Localization,
    VerifySolver,
}

impl Tag {
    pub fn name(self) -> &'static str {
        match self {
            Tag::Runge => "runge",
            Tag::Cauchy => "cauchy",
            Tag::ThreeBalls => "three_balls",
            Tag::Propagation => "propagation",
            Tag::Localization => "localization",
            Tag::VerifySolver => "verify_solver",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cells {
    Cube(usize),
    Box([usize; 3]),
}

impl Cells {
    pub fn dims(self) -> [usize; 3] {
        match self {
            Cells::Cube(n) => [n; 3],
            Cells::Box(n) => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: Cells,
    /// Defaults to `1/n_x` (unit cube along x).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default)]
    pub origin: [f64; 3],
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: Cells::Cube(12), h: None, origin: [0.0; 3] }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid<f64>, crate::error::GeometryError> {
        let n = self.n.dims();
        Grid::new(n, self.h.unwrap_or(1.0 / n[0] as f64), self.origin)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchConfig {
    pub side: Side,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
    /// Further sides or windows joined to the patch.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub also: Vec<PatchSpec>,
    #[serde(default)]
    pub rim: Rim,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig { side: Side::XMinus, window: None, also: Vec::new(), rim: Rim::Exclude }
    }
}

impl PatchConfig {
    pub fn specs(&self) -> Vec<PatchSpec> {
        let mut v = vec![PatchSpec { side: self.side, window: self.window }];
        v.extend(self.also.iter().cloned());
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallsConfig {
    pub center: [f64; 3],
    /// Data-ball radius for propagation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    /// Source-size offset added to every factor.
    #[serde(default)]
    pub m0: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionsConfig {
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Shape>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Shape>,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Shape>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Shape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balls: Option<BallsConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exponents {
    #[serde(default = "d_p")]
    pub p: f64,
    #[serde(default = "d_q")]
    pub q: f64,
    #[serde(default = "d_q0")]
    pub q0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

fn d_p() -> f64 {
    4.0
}
fn d_q() -> f64 {
    3.0
}
fn d_q0() -> f64 {
    4.0
}

impl Default for Exponents {
    fn default() -> Self {
        Exponents { p: d_p(), q: d_q(), q0: d_q0(), theta: None }
    }
}

/// Solves `1/q = (1−θ)/2 + θ/q₀` for `θ`.
pub fn theta_from(q: f64, q0: f64) -> f64 {
    (0.5 - 1.0 / q) / (0.5 - 1.0 / q0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Relative noise levels `η/(ζ+η)`.
    #[serde(default = "d_etas")]
    pub etas: Vec<f64>,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
}

fn d_etas() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
}
fn d_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { etas: d_etas(), seeds: d_seeds() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RungeConfig {
    #[serde(default = "d_js")]
    pub js: Vec<usize>,
    #[serde(rename = "C", default = "d_c")]
    pub c: f64,
    #[serde(default = "d_m")]
    pub m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<SolutionSpec>,
}

fn d_js() -> Vec<usize> {
    (1..=10).collect()
}
fn d_c() -> f64 {
    std::f64::consts::E
}
fn d_m() -> f64 {
    2.0
}

impl Default for RungeConfig {
    fn default() -> Self {
        RungeConfig { js: d_js(), c: d_c(), m: d_m(), target: None }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Morozov,
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regularization {
    #[serde(default)]
    pub strategy: Strategy,
    /// Fixed value, and the value used at zero noise; relative to the largest eigenvalue
    /// of the data normal matrix.
    #[serde(default = "d_lambda")]
    pub lambda: f64,
}

fn d_lambda() -> f64 {
    1e-12
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization { strategy: Strategy::Morozov, lambda: d_lambda() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CauchyConfig {
    /// Defaults to a magnetic dipole outside the far side of the patch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<SolutionSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationConfig {
    /// Relative to the largest eigenvalue of `A_D† G_D A_D` against `G_V`.
    #[serde(default = "d_eps_reg")]
    pub eps_reg: f64,
    #[serde(default = "d_cutoffs")]
    pub cutoffs: Vec<usize>,
}

fn d_eps_reg() -> f64 {
    1e-6
}
fn d_cutoffs() -> Vec<usize> {
    vec![5, 10, 20, 50]
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        LocalizationConfig { eps_reg: d_eps_reg(), cutoffs: d_cutoffs() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "d_grids")]
    pub grids: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<SolutionSpec>,
}

fn d_grids() -> Vec<usize> {
    vec![8, 16, 32]
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { grids: d_grids(), solution: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "d_tol")]
    pub tol: f64,
    #[serde(default = "d_direct")]
    pub direct_limit: usize,
    #[serde(default = "d_threshold")]
    pub resonance_threshold: f64,
}

fn d_tol() -> f64 {
    1e-10
}
fn d_direct() -> usize {
    200_000
}
fn d_threshold() -> f64 {
    1e-6
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: d_tol(), direct_limit: d_direct(), resonance_threshold: d_threshold() }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            direct_limit: self.direct_limit,
            resonance_threshold: self.resonance_threshold,
            ..SolverOptions::default()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "d_order")]
    pub order_min: f64,
    #[serde(default = "d_adjoint")]
    pub adjoint: f64,
    #[serde(default = "d_orth")]
    pub orthonormality: f64,
    #[serde(default = "d_orth")]
    pub reconstruction: f64,
    #[serde(default = "d_run")]
    pub strict_run: usize,
    #[serde(default = "d_r2")]
    pub r2_min: f64,
    #[serde(default = "d_growth_r2")]
    pub growth_r2_min: f64,
    /// Localization quotient required at the largest cutoff.
    #[serde(default = "d_quotient")]
    pub quotient_min: f64,
    #[serde(default = "d_zero_noise")]
    pub zero_noise_factor: f64,
    #[serde(default = "d_morozov")]
    pub morozov_factor: f64,
}

fn d_order() -> f64 {
    1.8
}
fn d_adjoint() -> f64 {
    1e-8
}
fn d_orth() -> f64 {
    1e-10
}
fn d_run() -> usize {
    6
}
fn d_r2() -> f64 {
    0.8
}
fn d_growth_r2() -> f64 {
    0.9
}
fn d_quotient() -> f64 {
    10.0
}
fn d_zero_noise() -> f64 {
    10.0
}
fn d_morozov() -> f64 {
    2.0
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            order_min: d_order(),
            adjoint: d_adjoint(),
            orthonormality: d_orth(),
            reconstruction: d_orth(),
            strict_run: d_run(),
            r2_min: d_r2(),
            growth_r2_min: d_growth_r2(),
            quotient_min: d_quotient(),
            zero_noise_factor: d_zero_noise(),
            morozov_factor: d_morozov(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Tag,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "MaterialSpec::vacuum")]
    pub material: MaterialSpec,
    #[serde(default = "d_omega")]
    pub omega: f64,
    #[serde(default)]
    pub patch: PatchConfig,
    #[serde(default)]
    pub regions: RegionsConfig,
    #[serde(default)]
    pub exponents: Exponents,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub runge: RungeConfig,
    #[serde(default)]
    pub regularization: Regularization,
    #[serde(default)]
    pub cauchy: CauchyConfig,
    #[serde(default)]
    pub localization: LocalizationConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Random solutions drawn by the three-ball and propagation drivers.
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Master seed; generated and recorded when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn d_omega() -> f64 {
    2.0
}
fn d_samples() -> usize {
    24
}

impl ExperimentConfig {
    /// A config for `tag` with every default filled.
    pub fn new(tag: Tag) -> Self {
        serde_json::from_value(serde_json::json!({ "experiment": tag })).expect("defaults deserialize")
    }

    pub fn theta(&self) -> f64 {
        theta_from(self.exponents.q, self.exponents.q0)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Checks every invariant and fills `theta` and `seed`.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let e = &self.exponents;
        if !(e.q > 2.0 && e.q < e.q0) {
            return bad(format!("exponents: need 2 < q < q0, got q = {}, q0 = {}", e.q, e.q0));
        }
        if !(e.q0 <= e.p) {
            return bad(format!("exponents: need q0 <= p, got q0 = {}, p = {}", e.q0, e.p));
        }
        let theta = theta_from(e.q, e.q0);
        if let Some(t) = e.theta {
            if (t - theta).abs() > 1e-12 {
                return bad(format!(
                    "exponents: theta = {t} violates 1/q = (1-theta)/2 + theta/q0, which gives theta = {theta}"
                ));
            }
        }
        self.exponents.theta = Some(theta);
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return bad(format!("omega must be positive, got {}", self.omega));
        }
        if self.grid.n.dims().iter().any(|&n| n < 4) {
            return bad(format!("grid: every axis needs at least 4 cells, got {:?}", self.grid.n.dims()));
        }
        if self.grid.h.is_some_and(|h| !(h > 0.0)) {
            return bad("grid: h must be positive".into());
        }
        if self.noise.etas.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return bad("noise: relative levels must lie in (0, 1)".into());
        }
        if self.noise.seeds.is_empty() {
            return bad("noise: at least one seed is required".into());
        }
        if self.runge.js.is_empty() || self.runge.js.contains(&0) {
            return bad("runge: js must be a nonempty list of positive integers".into());
        }
        if !(self.runge.c > 0.0 && self.runge.m > 0.0) {
            return bad("runge: C and m must be positive".into());
        }
        if !(self.regularization.lambda > 0.0) {
            return bad("regularization: lambda must be positive".into());
        }
        if !(self.localization.eps_reg > 0.0) {
            return bad("localization: eps_reg must be positive".into());
        }
        if self.experiment == Tag::ThreeBalls && self.samples < 20 {
            return bad(format!("samples: three_balls needs at least 20 solutions, got {}", self.samples));
        }
        if self.experiment == Tag::VerifySolver && self.verify.grids.len() < 3 {
            return bad("verify: at least three grids are required".into());
        }
        if self.seed.is_none() {
            self.seed = Some(rand::random());
        }
        Ok(self)
    }
}

/// Parses and resolves a config; diagnostics name the offending field path and position.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.inner();
        ConfigError::Parse { path, message: inner.to_string(), line: inner.line(), column: inner.column() }
    })?;
    cfg.resolve()
}

/// Canonical JSON echo; re-parses to an equal config.
pub fn echo(cfg: &ExperimentConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config(r#"{"experiment": "runge"}"#).unwrap();
        assert_eq!((c.exponents.p, c.exponents.q, c.exponents.q0), (4.0, 3.0, 4.0));
        assert!((c.exponents.theta.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.material, MaterialSpec::vacuum());
        assert!(c.seed.is_some());
        assert_eq!(c.runge.js, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn invariant_violations() {
        let e = parse_config(r#"{"experiment": "runge", "exponents": {"q": 3.5, "q0": 3.2}}"#).unwrap_err();
        assert!(e.to_string().contains("q < q0"));
        let e = parse_config(r#"{"experiment": "runge", "exponents": {"theta": 0.5}}"#).unwrap_err();
        assert!(e.to_string().contains("1/q = (1-theta)/2 + theta/q0"));
        assert!(parse_config(r#"{"experiment": "three_balls", "samples": 5}"#).is_err());
    }

    #[test]
    fn diagnostics_name_the_field() {
        let e = parse_config("{\"experiment\": \"runge\",\n \"grid\": {\"n\": 8, \"spacing\": 2}}").unwrap_err();
        match e {
            ConfigError::Parse { path, line, .. } => {
                assert!(path.starts_with("grid"), "{path}");
                assert_eq!(line, 2);
            }
            other => panic!("{other}"),
        }
        let e = parse_config(r#"{"experiment": "runge", "omega": "fast"}"#).unwrap_err();
        assert!(e.to_string().contains("omega"));
        let e = parse_config(r#"{"experiment": "runge", "omega": 1.0,"#).unwrap_err();
        assert!(matches!(e, ConfigError::Parse { .. }));
    }

    #[test]
    fn echo_round_trips() {
        let text = r#"{"experiment": "cauchy", "grid": {"n": [8, 8, 10], "h": 0.125},
            "material": {"kind": "smooth", "seed": 3}, "patch": {"side": "y+", "window": {"lo": [0.1, 0.1], "hi": [0.9, 0.9]}},
            "regions": {"A": {"shape": "ball", "center": [0.5, 0.5, 0.5], "radius": 0.2}}, "seed": 17}"#;
        let c = parse_config(text).unwrap();
        assert_eq!(parse_config(&echo(&c)).unwrap(), c);
        assert_eq!(c.seed, Some(17));
    }
}
