use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    Holder,
    LogModulus,
    Power,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub c: f64,
    /// `τ`, `m` or `δ` depending on the model.
    pub exponent: f64,
    pub r2: f64,
    pub n: usize,
    /// Largest log-residual of the data against the fitted bound.
    pub max_residual: f64,
    /// Mean gap between the fitted bound and the data, in log scale.
    pub mean_slack: f64,
    pub flag: Option<String>,
}

/// Largest admissible Hölder constant before a fit is flagged.
pub const HOLDER_C_LIMIT: f64 = 1e6;
const TAU_LO: f64 = 1e-6;
const TAU_HI: f64 = 1.0 - 1e-6;

fn r_squared(y: &[f64], resid: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = resid.iter().map(|r| r * r).sum();
    if ss_tot <= 1e-300 {
        if ss_res <= 1e-24 { 1.0 } else { 0.0 }
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    }
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if b - a < 1e-13 {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// Fits `a2 ≤ C a1^τ a3^{1−τ}`. For each `τ` the constant is the smallest one making
/// the bound hold for every triple; `τ` minimizes the mean log-slack (a convex
/// function of `τ`), so tight log-linear data is recovered exactly.
pub fn fit_holder(triples: &[(f64, f64, f64)]) -> Result<FitResult, AnalysisError> {
    if triples.len() < 3 {
        return Err(AnalysisError::InsufficientData { need: 3, got: triples.len() });
    }
    for &(a, b, c) in triples {
        for v in [a, b, c] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(AnalysisError::BadInput(v));
            }
        }
    }
    let logs: Vec<(f64, f64, f64)> = triples.iter().map(|&(a, b, c)| (a.ln(), b.ln(), c.ln())).collect();
    let g = |tau: f64| -> Vec<f64> { logs.iter().map(|&(l1, l2, l3)| l2 - tau * l1 - (1.0 - tau) * l3).collect() };
    let slack = |tau: f64| {
        let v = g(tau);
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        v.iter().map(|x| m - x).sum::<f64>() / v.len() as f64
    };
    let tau = golden_min(slack, TAU_LO, TAU_HI);
    let gv = g(tau);
    // a few ulps of headroom so `ln C` from the rounded `C` still dominates every sample
    let c = gv.iter().cloned().fold(f64::NEG_INFINITY, f64::max).exp() * (1.0 + 8.0 * f64::EPSILON);
    let log_c = c.ln();
    let resid: Vec<f64> = gv.iter().map(|x| x - log_c).collect();
    let y: Vec<f64> = logs.iter().map(|t| t.1).collect();
    let flag = (c > HOLDER_C_LIMIT).then(|| format!("no Hölder bound with C ≤ {HOLDER_C_LIMIT:e}; best C = {c:.6e}"));
    Ok(FitResult {
        model: FitModel::Holder,
        c,
        exponent: tau,
        r2: r_squared(&y, &resid),
        n: triples.len(),
        max_residual: resid.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mean_slack: slack(tau),
        flag,
    })
}

/// Fits `y ≤ C x^δ z^{1−δ}` with `z` pinned to the measured a-priori bound, reusing
/// the Hölder envelope fit on `(x, y, z)`.
pub fn fit_power(triples: &[(f64, f64, f64)]) -> Result<FitResult, AnalysisError> {
    let mut r = fit_holder(triples)?;
    r.model = FitModel::Power;
    Ok(r)
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

/// Least squares of `log e` against `log log(1/t)`: `e ≈ C (log(1/t))^{−m}`.
pub fn fit_log_modulus(pairs: &[(f64, f64)]) -> Result<FitResult, AnalysisError> {
    if pairs.len() < 4 {
        return Err(AnalysisError::InsufficientData { need: 4, got: pairs.len() });
    }
    for &(t, e) in pairs {
        if !(t > 0.0 && t < 1.0) {
            return Err(AnalysisError::BadInput(t));
        }
        if !(e > 0.0) || !e.is_finite() {
            return Err(AnalysisError::BadInput(e));
        }
    }
    let x: Vec<f64> = pairs.iter().map(|&(t, _)| (-t.ln()).ln()).collect();
    let y: Vec<f64> = pairs.iter().map(|&(_, e)| e.ln()).collect();
    let (a, b) = least_squares(&x, &y);
    let resid: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| yi - a - b * xi).collect();
    let m = -b;
    let flag = (m <= 1e-12).then(|| "non-decaying: fitted m ≤ 0".to_string());
    Ok(FitResult {
        model: FitModel::LogModulus,
        c: a.exp(),
        exponent: m,
        r2: r_squared(&y, &resid),
        n: pairs.len(),
        max_residual: resid.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mean_slack: resid.iter().map(|r| r.abs()).sum::<f64>() / resid.len() as f64,
        flag,
    })
}

/// Ordinary least squares `y ≈ c + exponent·x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<FitResult, AnalysisError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(AnalysisError::InsufficientData { need: 2, got: x.len().min(y.len()) });
    }
    if let Some(v) = x.iter().chain(y).find(|v| !v.is_finite()) {
        return Err(AnalysisError::BadInput(*v));
    }
    let (a, b) = least_squares(x, y);
    let resid: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| yi - a - b * xi).collect();
    Ok(FitResult {
        model: FitModel::Linear,
        c: a,
        exponent: b,
        r2: r_squared(y, &resid),
        n: x.len(),
        max_residual: resid.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mean_slack: resid.iter().map(|r| r.abs()).sum::<f64>() / resid.len() as f64,
        flag: None,
    })
}
