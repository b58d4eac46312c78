//! Sparse non-negative ensemble weights.
//!
//! The objective is
//!
//! ```text
//! J(w) = (λ/m) Σ_s (sgn(H_s w) − y_s)² + (1/l) Σ_r |w_r| + (β/l) Σ_r max(−w_r, 0)
//! ```
//!
//! Each iteration freezes an anchor `ŵ` (the previous iterate) and replaces
//! every non-smooth piece with a local convex model around it:
//!
//! - `sgn(H_s w) ≈ S_s H_s w` with `S_s = 1 / (|H_s ŵ| + ε)`;
//! - `|w_r|` and `β max(−w_r, 0)` by log-sum-exp smoothings whose sharpness
//!   `γ_r = γ / (|ŵ_r| + ε)` shrinks as the anchor grows, which bounds every
//!   exponent argument by `γ`;
//! - the smoothed penalty by its second-order Taylor expansion at `ŵ_r`;
//! - plus a proximal term `(1/l)‖w − ŵ‖²`.
//!
//! The resulting quadratic has an SPD Hessian, so each iteration is one
//! Cholesky solve, followed by clamping to `w ≥ 0`. After the last iteration,
//! weights whose smoothed non-negativity penalty is still above a small target
//! are set to exactly zero.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, DiagonalMatrix};
use crate::math;
use crate::tree::PredictionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdwecParams {
    /// Data-fidelity weight λ.
    pub lambda: f64,
    /// Non-negativity penalty β.
    pub beta: f64,
    /// Smoothing sharpness γ.
    pub gamma: f64,
    /// Relaxation floor ε.
    pub epsilon: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_threshold_target")]
    pub threshold_target: f64,
    /// Stop once the largest weight change falls below 1e-8 relative.
    #[serde(default)]
    pub early_stop: bool,
    #[serde(default)]
    pub threshold_rule: ThresholdRule,
}

/// Which sharpness the final thresholding evaluates the penalty with.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// One scalar threshold for every weight, using the sharpness a weight
    /// anchored at zero gets: `γ_r = γ / ε`.
    #[default]
    ZeroAnchor,
    /// Per-weight thresholds using each weight's `γ_r` from the last anchor.
    FinalAnchor,
}

fn default_max_iter() -> usize {
    25
}

fn default_threshold_target() -> f64 {
    1e-3
}

impl SdwecParams {
    pub fn new(lambda: f64, beta: f64, gamma: f64, epsilon: f64) -> Self {
        Self {
            lambda,
            beta,
            gamma,
            epsilon,
            max_iter: default_max_iter(),
            threshold_target: default_threshold_target(),
            early_stop: false,
            threshold_rule: ThresholdRule::default(),
        }
    }

    /// Dense ensemble (λ=0.1, β=35, γ=5, ε=0.1).
    pub fn preset_a() -> Self {
        Self::new(0.1, 35.0, 5.0, 0.1)
    }

    /// Sparse ensemble (λ=10, β=15, γ=15, ε=1).
    pub fn preset_b() -> Self {
        Self::new(10.0, 15.0, 15.0, 1.0)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "A" | "a" | "sdwec-a" => Some(Self::preset_a()),
            "B" | "b" | "sdwec-b" => Some(Self::preset_b()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("epsilon", self.epsilon),
            ("threshold_target", self.threshold_target),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParams("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// `S_s = 1 / (|H_s ŵ| + ε)`.
#[inline]
pub fn relax_sign_factor(h_dot_what: f64, epsilon: f64) -> f64 {
    1.0 / (h_dot_what.abs() + epsilon)
}

/// `γ_r = γ / (|ŵ_r| + ε)`.
#[inline]
pub fn adaptive_gamma(w_hat_r: f64, gamma: f64, epsilon: f64) -> f64 {
    gamma / (w_hat_r.abs() + epsilon)
}

/// Smoothed non-negativity penalty `P(w) = (β/γ_r) ln(e^{−γ_r w} + 1)`.
#[inline]
pub fn penalty_value(w_r: f64, beta: f64, gamma_r: f64) -> f64 {
    beta / gamma_r * math::softplus(-gamma_r * w_r)
}

/// Smoothed per-weight penalty: the log-sum-exp surrogate of `|w|` plus
/// [`penalty_value`].
#[inline]
pub fn smoothed_penalty(w: f64, beta: f64, gamma_r: f64) -> f64 {
    math::log_sum_exp_pair(gamma_r * w) / gamma_r + penalty_value(w, beta, gamma_r)
}

/// First derivative of [`smoothed_penalty`]: `tanh(γ_r w) − β σ(−γ_r w)`.
#[inline]
pub fn smoothed_penalty_d1(w: f64, beta: f64, gamma_r: f64) -> f64 {
    let a = gamma_r * w;
    a.tanh() - beta * math::sigmoid(-a)
}

/// Second derivative of [`smoothed_penalty`]:
/// `γ_r sech²(γ_r w) + β γ_r σ(γ_r w) σ(−γ_r w)`.
#[inline]
pub fn smoothed_penalty_d2(w: f64, beta: f64, gamma_r: f64) -> f64 {
    let a = gamma_r * w;
    gamma_r * math::sech_squared(a) + beta * gamma_r * math::sigmoid(a) * math::sigmoid(-a)
}

/// Coefficients of the Taylor quadratic `A + B w + C w²` around an anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl TaylorCoeffs {
    pub fn eval(&self, w: f64) -> f64 {
        self.a + self.b * w + self.c * w * w
    }
}

pub fn taylor_coeffs(w_hat_r: f64, gamma_r: f64, beta: f64) -> TaylorCoeffs {
    let f0 = smoothed_penalty(w_hat_r, beta, gamma_r);
    let f1 = smoothed_penalty_d1(w_hat_r, beta, gamma_r);
    let f2 = smoothed_penalty_d2(w_hat_r, beta, gamma_r);
    TaylorCoeffs {
        a: f0 - f1 * w_hat_r + 0.5 * f2 * w_hat_r * w_hat_r,
        b: f1 - f2 * w_hat_r,
        c: 0.5 * f2,
    }
}

#[inline]
fn sgn(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn check_dims(h: &DenseMatrix, y: &[i8], w: &[f64]) -> Result<()> {
    if y.len() != h.rows() {
        return Err(Error::DimensionMismatch {
            expected: h.rows(),
            actual: y.len(),
        });
    }
    if w.len() != h.cols() {
        return Err(Error::DimensionMismatch {
            expected: h.cols(),
            actual: w.len(),
        });
    }
    Ok(())
}

/// The original objective with exact `sgn`, `|·|` and `max(·, 0)`.
/// `sgn(0)` counts as +1.
pub fn cost_nonconvex(h: &PredictionMatrix, y: &[i8], w: &[f64], params: &SdwecParams) -> Result<f64> {
    cost_nonconvex_dense(&h.to_dense(), y, w, params)
}

pub(crate) fn cost_nonconvex_dense(h: &DenseMatrix, y: &[i8], w: &[f64], params: &SdwecParams) -> Result<f64> {
    check_dims(h, y, w)?;
    let (m, l) = (h.rows() as f64, h.cols() as f64);
    let data: f64 = (0..h.rows())
        .map(|s| {
            let d = sgn(linalg::dot(h.row(s), w)) - f64::from(y[s]);
            d * d
        })
        .sum();
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    let neg: f64 = w.iter().map(|v| (-v).max(0.0)).sum();
    Ok(params.lambda / m * data + l1 / l + params.beta / l * neg)
}

/// Everything the quadratic model of one iteration is built from.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationState {
    /// 1-based index of the iteration that produced `w`.
    pub iteration: usize,
    /// Iterate after back-projection.
    pub w: Vec<f64>,
    /// Anchor the model was expanded around.
    pub w_hat: Vec<f64>,
    pub gamma_r: Vec<f64>,
    pub s_diag: Vec<f64>,
    pub taylor: Vec<TaylorCoeffs>,
}

impl IterationState {
    pub fn v_b(&self) -> Vec<f64> {
        self.taylor.iter().map(|t| t.b).collect()
    }

    pub fn c_diag(&self) -> Vec<f64> {
        self.taylor.iter().map(|t| t.c).collect()
    }
}

/// Relaxed objective of one iteration (data term with frozen `S`, Taylor
/// penalty, proximal term), evaluated at `w`.
pub fn cost_relaxed(h: &DenseMatrix, y: &[i8], state: &IterationState, w: &[f64], params: &SdwecParams) -> Result<f64> {
    check_dims(h, y, w)?;
    let (m, l) = (h.rows() as f64, h.cols() as f64);
    let data: f64 = (0..h.rows())
        .map(|s| {
            let d = state.s_diag[s] * linalg::dot(h.row(s), w) - f64::from(y[s]);
            d * d
        })
        .sum();
    let taylor: f64 = state.taylor.iter().zip(w).map(|(t, &v)| t.eval(v)).sum();
    let prox: f64 = w
        .iter()
        .zip(&state.w_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(params.lambda / m * data + taylor / l + prox / l)
}

/// `M = (2λ/m)(SH)ᵀ(SH) + diag((2C + 2)/l)` and
/// `b = (2λ/m)(SH)ᵀy + (2ŵ − v_B)/l`.
pub fn build_system(
    h: &DenseMatrix,
    y: &[i8],
    s_diag: &[f64],
    w_hat: &[f64],
    v_b: &[f64],
    c_diag: &[f64],
    params: &SdwecParams,
) -> Result<(DenseMatrix, Vec<f64>)> {
    let (m, l) = (h.rows(), h.cols());
    check_dims(h, y, w_hat)?;
    for v in [v_b, c_diag] {
        if v.len() != l {
            return Err(Error::DimensionMismatch {
                expected: l,
                actual: v.len(),
            });
        }
    }
    let x = linalg::scale_rows(&DiagonalMatrix(s_diag.to_vec()), h)?;
    let scale = 2.0 * params.lambda / m as f64;
    let mut mat = linalg::gram(&x)?;
    let lf = l as f64;
    for r in 0..l {
        for q in 0..l {
            mat[(r, q)] *= scale;
        }
        mat[(r, r)] += (2.0 * c_diag[r] + 2.0) / lf;
    }
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let xty = x.tr_mul_vec(&yf)?;
    let b: Vec<f64> = (0..l)
        .map(|r| scale * xty[r] + (2.0 * w_hat[r] - v_b[r]) / lf)
        .collect();
    if !mat.is_finite() {
        return Err(Error::NonFinite { stage: "system matrix" });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { stage: "right-hand side" });
    }
    Ok((mat, b))
}

/// Thresholded, non-negative weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Fraction of weights that are exactly zero.
    pub fn sparsity(&self) -> f64 {
        if self.weights.is_empty() {
            return 0.0;
        }
        self.weights.iter().filter(|&&v| v == 0.0).count() as f64 / self.weights.len() as f64
    }

    pub fn nonzero(&self) -> Vec<usize> {
        (0..self.weights.len())
            .filter(|&r| self.weights[r] != 0.0)
            .collect()
    }
}

/// The weight at which `P(w) = target`, or 0 when that point is not positive.
pub fn threshold_point(gamma_r: f64, beta: f64, target: f64) -> f64 {
    let t = -math::log_expm1(gamma_r * target / beta) / gamma_r;
    if t > 0.0 {
        t
    } else {
        0.0
    }
}

/// Zeroes every weight that does not exceed its threshold point.
pub fn threshold_weights(w: &[f64], gamma_r: &[f64], params: &SdwecParams) -> WeightVector {
    let weights = w
        .iter()
        .zip(gamma_r)
        .map(|(&v, &g)| {
            if v > threshold_point(g, params.beta, params.threshold_target) {
                v
            } else {
                0.0
            }
        })
        .collect();
    WeightVector { weights }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub iterations_seconds: f64,
    pub threshold_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Original objective at the end of each iteration.
    pub cost_nonconvex: Vec<f64>,
    /// Relaxed objective of each iteration at its own solution.
    pub cost_relaxed: Vec<f64>,
    /// Relative residual of every linear solve.
    pub solve_residuals: Vec<f64>,
    /// Solves that needed the diagonal bump.
    pub diagonal_bumps: usize,
    /// Per-weight threshold points used at the end.
    pub thresholds: Vec<f64>,
    /// Weights before thresholding.
    pub raw_weights: Vec<f64>,
    pub times: StageTimes,
}

impl FitDiagnostics {
    pub fn iterations(&self) -> usize {
        self.cost_nonconvex.len()
    }

    pub fn max_residual(&self) -> f64 {
        self.solve_residuals.iter().copied().fold(0.0, f64::max)
    }

    /// `iteration,cost_nonconvex,cost_relaxed` rows, 1-based.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,cost_nonconvex,cost_relaxed\n");
        for (i, (a, b)) in self.cost_nonconvex.iter().zip(&self.cost_relaxed).enumerate() {
            out.push_str(&format!("{},{a:.12e},{b:.12e}\n", i + 1));
        }
        out
    }
}

fn ensure_finite(values: &[f64], stage: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { stage })
    }
}

/// Stepwise driver. [`fit`] runs it for `max_iter` steps and thresholds.
#[derive(Debug)]
pub struct Solver<'a> {
    h: DenseMatrix,
    y: &'a [i8],
    params: SdwecParams,
    w: Vec<f64>,
    last: Option<IterationState>,
    diagnostics: FitDiagnostics,
}

impl<'a> Solver<'a> {
    pub fn new(h: &PredictionMatrix, y: &'a [i8], params: SdwecParams) -> Result<Self> {
        params.validate()?;
        if h.rows() == 0 || h.cols() == 0 {
            return Err(Error::EmptyInput);
        }
        if y.len() != h.rows() {
            return Err(Error::DimensionMismatch {
                expected: h.rows(),
                actual: y.len(),
            });
        }
        if let Some(&bad) = y.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::InvalidParams(format!("label {bad} is not ±1")));
        }
        Ok(Self {
            w: vec![1.0; h.cols()],
            h: h.to_dense(),
            y,
            params,
            last: None,
            diagnostics: FitDiagnostics::default(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn last_state(&self) -> Option<&IterationState> {
        self.last.as_ref()
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    /// One anchor refresh, linear solve and back-projection.
    pub fn step(&mut self) -> Result<&IterationState> {
        let iteration = self.diagnostics.iterations() + 1;
        self.step_inner(iteration).map_err(|e| Error::Iteration {
            iteration,
            source: Box::new(e),
        })?;
        Ok(self.last.as_ref().expect("state set by step"))
    }

    fn step_inner(&mut self, iteration: usize) -> Result<()> {
        let p = &self.params;
        let w_hat = std::mem::take(&mut self.w);
        let gamma_r: Vec<f64> = w_hat
            .iter()
            .map(|&v| adaptive_gamma(v, p.gamma, p.epsilon))
            .collect();
        ensure_finite(&gamma_r, "adaptive gamma")?;
        let hw = self.h.mul_vec(&w_hat)?;
        let s_diag: Vec<f64> = hw.iter().map(|&v| relax_sign_factor(v, p.epsilon)).collect();
        ensure_finite(&s_diag, "sign relaxation")?;
        let taylor: Vec<TaylorCoeffs> = w_hat
            .iter()
            .zip(&gamma_r)
            .map(|(&v, &g)| taylor_coeffs(v, g, p.beta))
            .collect();
        let v_b: Vec<f64> = taylor.iter().map(|t| t.b).collect();
        let c_diag: Vec<f64> = taylor.iter().map(|t| t.c).collect();
        ensure_finite(&v_b, "taylor linear coefficients")?;
        ensure_finite(&c_diag, "taylor quadratic coefficients")?;
        ensure_finite(&taylor.iter().map(|t| t.a).collect::<Vec<_>>(), "taylor constants")?;

        let (m, b) = build_system(&self.h, self.y, &s_diag, &w_hat, &v_b, &c_diag, p)?;
        let (mut w, bumped) = linalg::solve_spd_with_retry(&m, &b)?;
        ensure_finite(&w, "solution")?;
        let residual = linalg::relative_residual(&m, &w, &b);
        debug_assert!(residual <= 1e-8, "solve residual {residual:e} at iteration {iteration}");
        self.diagnostics.solve_residuals.push(residual);
        if bumped {
            self.diagnostics.diagonal_bumps += 1;
        }
        for v in &mut w {
            *v = v.max(0.0);
        }

        let state = IterationState {
            iteration,
            w,
            w_hat,
            gamma_r,
            s_diag,
            taylor,
        };
        let nonconvex = cost_nonconvex_dense(&self.h, self.y, &state.w, p)?;
        let relaxed = cost_relaxed(&self.h, self.y, &state, &state.w, p)?;
        if !nonconvex.is_finite() || !relaxed.is_finite() {
            return Err(Error::NonFinite { stage: "cost" });
        }
        self.diagnostics.cost_nonconvex.push(nonconvex);
        self.diagnostics.cost_relaxed.push(relaxed);
        self.w = state.w.clone();
        self.last = Some(state);
        Ok(())
    }

    fn converged(&self) -> bool {
        let Some(state) = &self.last else {
            return false;
        };
        let scale = state.w_hat.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-300);
        let change = state
            .w
            .iter()
            .zip(&state.w_hat)
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
        change / scale < 1e-8
    }

    /// Runs the remaining iterations and thresholds the result.
    pub fn finish(mut self) -> Result<(WeightVector, FitDiagnostics)> {
        let start = Instant::now();
        while self.diagnostics.iterations() < self.params.max_iter {
            self.step()?;
            if self.params.early_stop && self.converged() {
                break;
            }
        }
        self.diagnostics.times.iterations_seconds = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let state = self.last.as_ref().expect("at least one iteration");
        let p = &self.params;
        let gamma_r = match p.threshold_rule {
            ThresholdRule::ZeroAnchor => vec![p.gamma / p.epsilon; state.w.len()],
            ThresholdRule::FinalAnchor => state.gamma_r.clone(),
        };
        self.diagnostics.thresholds = gamma_r
            .iter()
            .map(|&g| threshold_point(g, p.beta, p.threshold_target))
            .collect();
        self.diagnostics.raw_weights = state.w.clone();
        let weights = threshold_weights(&state.w, &gamma_r, p);
        self.diagnostics.times.threshold_seconds = start.elapsed().as_secs_f64();
        Ok((weights, self.diagnostics))
    }
}

/// Fits combination weights for the vote matrix `h` against labels `y`.
pub fn fit(h: &PredictionMatrix, y: &[i8], params: &SdwecParams) -> Result<(WeightVector, FitDiagnostics)> {
    Solver::new(h, y, *params)?.finish()
}
