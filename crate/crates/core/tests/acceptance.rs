//! Acceptance criteria at spec tolerance. Each test prints one PASS/FAIL line.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use maxwell_runge::analysis::build_norm_weights;
use maxwell_runge::experiments::{self, config_from_sidecar, parse_config, Report, RunContext};
use maxwell_runge::geometry::{
    boundary_patch, carve_region, chain_of_balls, volume_bound, PatchSpec, Role, Shape, Side,
};
use maxwell_runge::materials::MaterialField;
use maxwell_runge::runge_op::{apply_adjoint, assemble_restriction, load_operator, store_operator, weighted_svd};
use maxwell_runge::solver::incidence::{curl, div};
use maxwell_runge::solver::SystemMatrix;
use maxwell_runge::{Grid, Region, C64};
use nalgebra::DMatrix;
use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: usize, name: &str, pass: bool, detail: String) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{} criterion {n} ({name}): {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = out.flush();
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"))
}

fn run_reference(name: &str) -> Report {
    let text = std::fs::read_to_string(config(name)).unwrap();
    let cfg = parse_config(&text).unwrap();
    experiments::run(&cfg, &RunContext::default()).unwrap()
}

fn check_summary(r: &Report, names: &[&str]) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for n in names {
        let c = r.get_check(n).unwrap_or_else(|| panic!("missing check {n}"));
        pass &= c.pass;
        parts.push(format!("{n} = {:.4e} ({})", c.value, c.rule));
    }
    (pass, parts.join(", "))
}

fn runge_setup() -> (SystemMatrix<f64>, maxwell_runge::NormWeights) {
    let g = Grid::unit_cube(12).unwrap();
    let sys = SystemMatrix::assemble(&g, &MaterialField::vacuum(&g), 2.0).unwrap();
    let p = boundary_patch(&g, &[PatchSpec { side: Side::XMinus, window: None }]).unwrap().without_rim().unwrap();
    let a = carve_region(&g, &Shape::Ball { center: [0.55, 0.5, 0.5], radius: 0.18 }, Role::SubdomainA).unwrap();
    let w = build_norm_weights(&p, &a).unwrap();
    (sys, w)
}

fn random_complex(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

#[test]
fn criterion_01_solver_convergence() {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let t = Instant::now();
    let r = pool.install(|| run_reference("verify_solver"));
    let secs = t.elapsed().as_secs_f64();
    let orders = r.tables[0].column("order").unwrap();
    let (pass, detail) = check_summary(&r, &["min_convergence_order"]);
    verdict(1, "solver verification", pass && secs <= 300.0, format!("{detail}, orders {:?}, {secs:.1} s", &orders[1..]));
}

#[test]
fn criterion_02_mimetic_identity() {
    let g = Grid::unit_cube(6).unwrap();
    let t = Instant::now();
    let mut worst_int = 0i64;
    let mut rational_ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in 0..100 {
        if k % 2 == 0 {
            let e: Vec<i64> = (0..g.edge_count()).map(|_| rng.random_range(-1_000_000..=1_000_000)).collect();
            worst_int = worst_int.max(div(&g, &curl(&g, &e)).into_iter().map(i64::abs).max().unwrap());
        } else {
            let e: Vec<Rational64> =
                (0..g.edge_count()).map(|_| Rational64::new(rng.random_range(-999..=999), rng.random_range(1..=97))).collect();
            rational_ok &= div(&g, &curl(&g, &e)).iter().all(|v| *v == Rational64::from_integer(0));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        2,
        "mimetic identity",
        worst_int == 0 && rational_ok && secs <= 1.0,
        format!("max |div curl| over 50 integer vectors = {worst_int}, 50 rational vectors exact = {rational_ok}, {secs:.3} s"),
    );
}

#[test]
fn criterion_03_adjoint_fidelity() {
    let t = Instant::now();
    let (sys, w) = runge_setup();
    let op = assemble_restriction(&sys, &w).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut worst_dual: f64 = 0.0;
    for _ in 0..20 {
        let x = random_complex(&mut rng, w.x_len());
        let f = random_complex(&mut rng, w.v_len());
        let pde = apply_adjoint(&sys, &w, &x).unwrap();
        let mat = op.matrix_adjoint(&x);
        let d: Vec<C64> = pde.iter().zip(&mat).map(|(a, b)| a - b).collect();
        worst = worst.max(w.norm_v(&d) / w.norm_v(&mat));
        let lhs = w.inner_x(&op.apply(&f), &x);
        let rhs = w.inner_v(&f, &pde);
        worst_dual = worst_dual.max((lhs - rhs).norm() / (w.norm_x(&op.apply(&f)) * w.norm_x(&x)));
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        3,
        "adjoint fidelity",
        worst <= 1e-8 && worst_dual <= 1e-8 && secs <= 600.0,
        format!("max relative |A*_pde - G_V^-1 A^H G_X| = {worst:.3e}, duality defect {worst_dual:.3e}, {secs:.1} s"),
    );
}

#[test]
fn criterion_04_svd_structure() {
    let (sys, w) = runge_setup();
    let op = assemble_restriction(&sys, &w).unwrap();
    let t = Instant::now();
    let svd = weighted_svd(&op).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let gv = w.gram_v().map(|v| C64::new(v, 0.0));
    let gx = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(w.x_len(), w.gram_x().iter().map(|v| C64::new(*v, 0.0))));
    let r = svd.rank();
    let eye = DMatrix::<C64>::identity(r, r);
    let orth_v = (svd.phi.adjoint() * &gv * &svd.phi - &eye).camax();
    let orth_x = (svd.psi.adjoint() * &gx * &svd.psi - &eye).camax();
    let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(r, svd.sigma.iter().map(|s| C64::new(*s, 0.0))));
    let rec = (&svd.psi * sigma * svd.phi.adjoint() * &gv - &op.matrix).camax() / op.matrix.camax();
    let desc = svd.sigma.windows(2).all(|p| p[0] >= p[1]);
    verdict(
        4,
        "SVD structure",
        orth_v <= 1e-10 && orth_x <= 1e-10 && rec <= 1e-10 && desc && secs <= 60.0,
        format!("V-orthonormality {orth_v:.3e}, X-orthonormality {orth_x:.3e}, reconstruction {rec:.3e}, descending {desc}, {secs:.2} s"),
    );
}

#[test]
fn criterion_05_runge_decay() {
    let t = Instant::now();
    let r = run_reference("runge");
    let secs = t.elapsed().as_secs_f64();
    let (pass, detail) =
        check_summary(&r, &["error_nonincreasing", "strict_decrease_run", "v_norm_nondecreasing", "termwise_bound_ratio"]);
    verdict(5, "Runge decay", pass && secs <= 900.0, format!("{detail}, {secs:.1} s"));
}

#[test]
fn criterion_06_cauchy_stability() {
    let t = Instant::now();
    let r = run_reference("cauchy");
    let secs = t.elapsed().as_secs_f64();
    let (pass, detail) = check_summary(
        &r,
        &["median_error_monotone_in_eta", "log_modulus_m_positive", "log_modulus_r2", "zero_noise_error_over_discretization"],
    );
    verdict(6, "Cauchy stability shape", pass && secs <= 1800.0, format!("{detail}, {secs:.1} s"));
}

#[test]
fn criterion_07_three_balls() {
    let t = Instant::now();
    let r = run_reference("three_balls");
    let secs = t.elapsed().as_secs_f64();
    let n = r.tables[0].rows.len();
    let (pass, detail) = check_summary(&r, &["tau_in_open_unit_interval", "max_log_residual"]);
    verdict(7, "three-ball feasibility", pass && n >= 20 && secs <= 600.0, format!("{n} samples, {detail}, {secs:.1} s"));
}

#[test]
fn criterion_08_chain_invariants() {
    let g = Grid::unit_cube(12).unwrap();
    let host = Region::omega(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t = Instant::now();
    let r1 = 0.02;
    let bound = volume_bound(&host, r1);
    let mut failures = 0;
    let mut longest = 0;
    for _ in 0..100 {
        let k = rng.random_range(2..=5);
        let path: Vec<[f64; 3]> = (0..k).map(|_| [0; 3].map(|_| rng.random_range(0.2..0.8))).collect();
        let chain = chain_of_balls(&path, r1, &host, None).unwrap();
        if chain.check_invariants(&host).is_err() || chain.len() as f64 > bound {
            failures += 1;
        }
        longest = longest.max(chain.len());
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        8,
        "chain-of-balls invariants",
        failures == 0 && secs <= 10.0,
        format!("100 paths, {failures} violations, longest chain {longest}, volume bound {bound:.3e}, {secs:.2} s"),
    );
}

#[test]
fn criterion_09_determinism() {
    let mut mismatched = Vec::new();
    for name in ["verify_solver", "runge", "cauchy", "three_balls", "propagation", "localization"] {
        let first = run_reference(name);
        let a = tempfile::tempdir().unwrap();
        let fa = first.write(a.path()).unwrap();
        let echo = config_from_sidecar(&first.sidecar()).unwrap();
        let second = experiments::run(&echo, &RunContext::default()).unwrap();
        let b = tempfile::tempdir().unwrap();
        let fb = second.write(b.path()).unwrap();
        for (x, y) in fa.iter().zip(&fb) {
            if x.to_string_lossy().ends_with(".timing.json") {
                continue;
            }
            if std::fs::read(x).unwrap() != std::fs::read(y).unwrap() {
                mismatched.push(x.file_name().unwrap().to_string_lossy().into_owned());
            }
        }
    }
    verdict(9, "determinism", mismatched.is_empty(), format!("six reports rerun from their echo, mismatched files: {mismatched:?}"));
}

#[test]
fn criterion_10_cache_integrity() {
    let t = Instant::now();
    let g = Grid::unit_cube(8).unwrap();
    let sys = SystemMatrix::assemble(&g, &MaterialField::vacuum(&g), 2.0).unwrap();
    let p = boundary_patch(&g, &[PatchSpec { side: Side::XMinus, window: None }]).unwrap().without_rim().unwrap();
    let a = carve_region(&g, &Shape::Ball { center: [0.6, 0.5, 0.5], radius: 0.25 }, Role::SubdomainA).unwrap();
    let w = build_norm_weights(&p, &a).unwrap();
    let op = assemble_restriction(&sys, &w).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("op.rgfo");
    store_operator(&op, &path).unwrap();
    let back = load_operator(&path, &w, op.provenance).unwrap();
    let exact = back.matrix.iter().zip(op.matrix.iter()).all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits());
    let mut bytes = std::fs::read(&path).unwrap();
    let k = bytes.len() / 2;
    bytes[k] ^= 0x01;
    std::fs::write(&path, &bytes).unwrap();
    let detected = load_operator(&path, &w, op.provenance).is_err();
    let secs = t.elapsed().as_secs_f64();
    verdict(
        10,
        "cache integrity",
        exact && detected && secs <= 10.0,
        format!("round trip bit-exact = {exact}, corrupted byte detected = {detected}, {secs:.2} s"),
    );
}
