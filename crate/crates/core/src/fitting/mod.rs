//! Robust fitting of loss-law coefficients to training runs.
//!
//! Coefficients are fitted by minimizing the mean Huber penalty of the
//! residuals plus an L2 penalty on the internal parameter vector, using BFGS
//! from every point of a multistart grid. Internally the positive scale
//! coefficients `a`, `b`, `g` are optimized as natural logs, exponents are
//! kept in `(0, 2]` and the irreducible loss `c` is kept nonnegative.

mod bootstrap;
mod smoothing;
mod validation;

pub use bootstrap::{bootstrap_fit, percentile_interval};
pub use smoothing::{smooth_curve, DEFAULT_HALF_LIFE};
pub use validation::validation_split;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_at_least_one, ensure_positive, Error, Result};
use crate::laws::{DenseCoefficients, MoeCoefficients};
use crate::optim::bfgs::{self, BfgsSettings, Bound};
use crate::shapes::{active_params, total_params, ModelShape};

/// One experiment: a trained model and its final smoothed loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub n_total: f64,
    pub n_active: f64,
    pub granularity: f64,
    pub expansion: f64,
    pub tokens: f64,
    pub loss: f64,
    /// Architecture the counts were derived from, when known.
    pub shape: Option<ModelShape>,
}

impl TrainingRun {
    pub fn from_shape(shape: ModelShape, tokens: f64, loss: f64) -> Result<Self> {
        let run = Self {
            n_total: total_params(&shape),
            n_active: active_params(&shape),
            granularity: shape.granularity(),
            expansion: shape.expansion(),
            tokens,
            loss,
            shape: Some(shape),
        };
        run.validate()?;
        Ok(run)
    }

    pub fn from_counts(
        n_total: f64,
        n_active: f64,
        granularity: f64,
        expansion: f64,
        tokens: f64,
        loss: f64,
    ) -> Result<Self> {
        let run = Self {
            n_total,
            n_active,
            granularity,
            expansion,
            tokens,
            loss,
            shape: None,
        };
        run.validate()?;
        Ok(run)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("n_total", self.n_total)?;
        ensure_positive("n_active", self.n_active)?;
        ensure_at_least_one("granularity", self.granularity)?;
        ensure_at_least_one("expansion", self.expansion)?;
        ensure_positive("tokens", self.tokens)?;
        ensure_positive("loss", self.loss)?;
        if self.n_total < self.n_active {
            return Err(Error::domain(format!(
                "n_total ({}) must be at least n_active ({})",
                self.n_total, self.n_active
            )));
        }
        Ok(())
    }

    pub fn is_dense(&self) -> bool {
        self.granularity == 1.0 && self.expansion == 1.0
    }
}

/// Initial point for one BFGS descent. Dense fits ignore `log_g` and `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartPoint {
    pub log_a: f64,
    pub alpha: f64,
    pub log_b: f64,
    pub beta: f64,
    pub log_g: f64,
    pub gamma: f64,
    pub c: f64,
}

impl From<&MoeCoefficients> for StartPoint {
    fn from(k: &MoeCoefficients) -> Self {
        Self {
            log_a: k.a.ln(),
            alpha: k.alpha,
            log_b: k.b.ln(),
            beta: k.beta,
            log_g: k.g.ln(),
            gamma: k.gamma,
            c: k.c,
        }
    }
}

impl From<&DenseCoefficients> for StartPoint {
    fn from(k: &DenseCoefficients) -> Self {
        Self {
            log_a: k.a.ln(),
            alpha: k.alpha,
            log_b: k.b.ln(),
            beta: k.beta,
            log_g: 0.0,
            gamma: 0.5,
            c: k.c,
        }
    }
}

/// Full factorial initialization grid, thinned by a fixed stride to at most
/// `max_starts` points.
///
/// Axes: `alpha, beta in {0.05, 0.15, 0.3}`, `gamma in {0.3, 0.6, 1.0}`,
/// `ln a, ln b, ln g in {0, 2, 4}`, `c in {0.3, 0.7}` (1458 points). The
/// stride is the smallest value that respects the cap and is coprime with
/// every axis length, so the thinned grid still visits every level of every
/// axis.
pub fn multistart_grid(max_starts: usize) -> Vec<StartPoint> {
    let exponents = [0.05, 0.15, 0.3];
    let gammas = [0.3, 0.6, 1.0];
    let logs = [0.0, 2.0, 4.0];
    let offsets = [0.3, 0.7];
    let mut full = Vec::with_capacity(1458);
    for &alpha in &exponents {
        for &beta in &exponents {
            for &gamma in &gammas {
                for &log_a in &logs {
                    for &log_b in &logs {
                        for &log_g in &logs {
                            for &c in &offsets {
                                full.push(StartPoint {
                                    log_a,
                                    alpha,
                                    log_b,
                                    beta,
                                    log_g,
                                    gamma,
                                    c,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    let max_starts = max_starts.max(1);
    let mut stride = full.len().div_ceil(max_starts);
    while stride % 2 == 0 || stride % 3 == 0 {
        stride += 1;
    }
    full.into_iter().step_by(stride).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub huber_delta: f64,
    pub weight_decay: f64,
    pub multistart_grid: Vec<StartPoint>,
    pub max_iterations: usize,
    /// Residuals are `ln(predicted) - ln(observed)` when set, raw differences
    /// otherwise.
    pub log_space: bool,
}

pub const DEFAULT_MAX_STARTS: usize = 256;

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            huber_delta: 0.1,
            weight_decay: 5e-4,
            multistart_grid: multistart_grid(DEFAULT_MAX_STARTS),
            max_iterations: 2000,
            log_space: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("huber_delta", self.huber_delta)?;
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::domain("weight_decay must be nonnegative"));
        }
        if self.multistart_grid.is_empty() {
            return Err(Error::domain("multistart grid is empty"));
        }
        if self.max_iterations == 0 {
            return Err(Error::domain("max_iterations must be positive"));
        }
        Ok(())
    }

    fn bfgs_settings(&self) -> BfgsSettings {
        BfgsSettings {
            max_iterations: self.max_iterations,
            ..BfgsSettings::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<L> {
    pub coefficients: L,
    pub objective_value: f64,
    pub rmse: f64,
    pub n_runs: usize,
    pub converged: bool,
    /// Position of the winning start among the distinct grid points.
    pub start_index: usize,
}

/// Per-run quantities the objective needs, computed once per fit.
#[doc(hidden)]
#[derive(Debug, Clone, Copy)]
pub struct Features {
    ln_n: f64,
    ln_d: f64,
    ln_g: f64,
    loss: f64,
    ln_loss: f64,
}

impl Features {
    fn of(run: &TrainingRun) -> Self {
        Self {
            ln_n: run.n_total.ln(),
            ln_d: run.tokens.ln(),
            ln_g: run.granularity.ln(),
            loss: run.loss,
            ln_loss: run.loss.ln(),
        }
    }
}

const EXPONENT_BOUND: Bound = Bound {
    lower: 1e-9,
    upper: 2.0,
};
const OFFSET_BOUND: Bound = Bound {
    lower: 0.0,
    upper: f64::INFINITY,
};

/// A loss law whose coefficients can be fitted to runs.
pub trait FittableLaw: Sized + Clone + Send + Sync {
    const N_PARAMS: usize;
    const NAME: &'static str;

    fn theta_from_start(start: &StartPoint) -> Vec<f64>;
    fn from_theta(theta: &[f64]) -> Self;
    fn to_theta(&self) -> Vec<f64>;
    fn bounds() -> Vec<Bound>;
    /// Whether each internal coordinate is subject to weight decay.
    fn penalized() -> &'static [bool];
    /// Named exponents, for reporting and interval estimation.
    fn exponents(&self) -> Vec<(&'static str, f64)>;
    fn check_design(runs: &[TrainingRun]) -> Result<()>;
    fn predict(&self, run: &TrainingRun) -> f64;
    #[doc(hidden)]
    fn predict_with_gradient(theta: &[f64], x: &Features, grad: &mut [f64]) -> f64;
}

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

fn check_common_design(runs: &[TrainingRun], min_runs: usize) -> Result<()> {
    if runs.is_empty() {
        return Err(Error::EmptyRuns);
    }
    for run in runs {
        run.validate()?;
    }
    if runs.len() < min_runs {
        return Err(Error::Unidentifiable(format!(
            "need at least {min_runs} runs, got {}",
            runs.len()
        )));
    }
    if distinct(runs.iter().map(|r| r.n_total)) < 2 {
        return Err(Error::Unidentifiable("all runs share a single N".into()));
    }
    if distinct(runs.iter().map(|r| r.tokens)) < 2 {
        return Err(Error::Unidentifiable("all runs share a single D".into()));
    }
    Ok(())
}

impl FittableLaw for MoeCoefficients {
    const N_PARAMS: usize = 7;
    const NAME: &'static str = "moe";

    fn theta_from_start(s: &StartPoint) -> Vec<f64> {
        vec![s.log_a, s.alpha, s.log_b, s.beta, s.log_g, s.gamma, s.c]
    }

    fn from_theta(t: &[f64]) -> Self {
        Self {
            a: t[0].exp(),
            alpha: t[1],
            b: t[2].exp(),
            beta: t[3],
            g: t[4].exp(),
            gamma: t[5],
            c: t[6],
        }
    }

    fn to_theta(&self) -> Vec<f64> {
        Self::theta_from_start(&StartPoint::from(self))
    }

    fn bounds() -> Vec<Bound> {
        vec![
            Bound::FREE,
            EXPONENT_BOUND,
            Bound::FREE,
            EXPONENT_BOUND,
            Bound::FREE,
            EXPONENT_BOUND,
            OFFSET_BOUND,
        ]
    }

    fn penalized() -> &'static [bool] {
        &[true, true, true, true, true, true, false]
    }

    fn exponents(&self) -> Vec<(&'static str, f64)> {
        vec![("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)]
    }

    fn check_design(runs: &[TrainingRun]) -> Result<()> {
        check_common_design(runs, 8)?;
        if distinct(runs.iter().map(|r| r.granularity)) < 2 {
            return Err(Error::Unidentifiable("all runs share a single G".into()));
        }
        Ok(())
    }

    fn predict(&self, run: &TrainingRun) -> f64 {
        self.c + self.a_of_granularity(run.granularity) / run.n_total.powf(self.alpha) + self.b / run.tokens.powf(self.beta)
    }

    fn predict_with_gradient(t: &[f64], x: &Features, grad: &mut [f64]) -> f64 {
        let n_term = (-t[1] * x.ln_n).exp();
        let d_term = (t[2] - t[3] * x.ln_d).exp();
        let a = t[0].exp();
        let g_part = (t[4] - t[5] * x.ln_g).exp();
        let numerator = g_part + a;
        grad[0] = a * n_term;
        grad[1] = -numerator * n_term * x.ln_n;
        grad[2] = d_term;
        grad[3] = -d_term * x.ln_d;
        grad[4] = g_part * n_term;
        grad[5] = -g_part * x.ln_g * n_term;
        grad[6] = 1.0;
        t[6] + numerator * n_term + d_term
    }
}

impl FittableLaw for DenseCoefficients {
    const N_PARAMS: usize = 5;
    const NAME: &'static str = "dense";

    fn theta_from_start(s: &StartPoint) -> Vec<f64> {
        vec![s.log_a, s.alpha, s.log_b, s.beta, s.c]
    }

    fn from_theta(t: &[f64]) -> Self {
        Self {
            a: t[0].exp(),
            alpha: t[1],
            b: t[2].exp(),
            beta: t[3],
            c: t[4],
        }
    }

    fn to_theta(&self) -> Vec<f64> {
        Self::theta_from_start(&StartPoint::from(self))
    }

    fn bounds() -> Vec<Bound> {
        vec![Bound::FREE, EXPONENT_BOUND, Bound::FREE, EXPONENT_BOUND, OFFSET_BOUND]
    }

    fn penalized() -> &'static [bool] {
        &[true, true, true, true, false]
    }

    fn exponents(&self) -> Vec<(&'static str, f64)> {
        vec![("alpha", self.alpha), ("beta", self.beta)]
    }

    fn check_design(runs: &[TrainingRun]) -> Result<()> {
        if runs.iter().any(|r| !r.is_dense()) {
            return Err(Error::DenseRequiresUnitGranularity);
        }
        check_common_design(runs, 6)
    }

    fn predict(&self, run: &TrainingRun) -> f64 {
        self.c + self.a / run.n_total.powf(self.alpha) + self.b / run.tokens.powf(self.beta)
    }

    fn predict_with_gradient(t: &[f64], x: &Features, grad: &mut [f64]) -> f64 {
        let n_term = (t[0] - t[1] * x.ln_n).exp();
        let d_term = (t[2] - t[3] * x.ln_d).exp();
        grad[0] = n_term;
        grad[1] = -n_term * x.ln_n;
        grad[2] = d_term;
        grad[3] = -d_term * x.ln_d;
        grad[4] = 1.0;
        t[4] + n_term + d_term
    }
}

pub fn huber(residual: f64, delta: f64) -> f64 {
    let r = residual.abs();
    if r <= delta {
        0.5 * r * r
    } else {
        delta * (r - 0.5 * delta)
    }
}

fn huber_slope(residual: f64, delta: f64) -> f64 {
    residual.clamp(-delta, delta)
}

fn residual(predicted: f64, observed: f64, ln_observed: f64, log_space: bool) -> f64 {
    if log_space {
        predicted.ln() - ln_observed
    } else {
        predicted - observed
    }
}

/// Objective value and gradient over prepared features.
fn evaluate<L: FittableLaw>(theta: &[f64], features: &[Features], config: &FitConfig, grad: &mut [f64]) -> f64 {
    let n = L::N_PARAMS;
    let mut dpred = [0.0; 8];
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut total = 0.0;
    for x in features {
        let pred = L::predict_with_gradient(theta, x, &mut dpred[..n]);
        if !(pred > 0.0 && pred.is_finite()) {
            return f64::INFINITY;
        }
        let r = residual(pred, x.loss, x.ln_loss, config.log_space);
        total += huber(r, config.huber_delta);
        let chain = huber_slope(r, config.huber_delta) * if config.log_space { 1.0 / pred } else { 1.0 };
        for (g, dp) in grad.iter_mut().zip(&dpred[..n]) {
            *g += chain * dp;
        }
    }
    let count = features.len() as f64;
    grad.iter_mut().for_each(|g| *g /= count);
    let mut value = total / count;
    for (i, &on) in L::penalized().iter().enumerate() {
        if on {
            value += config.weight_decay * theta[i] * theta[i];
            grad[i] += 2.0 * config.weight_decay * theta[i];
        }
    }
    value
}

fn prepare(runs: &[TrainingRun]) -> Result<Vec<Features>> {
    if runs.is_empty() {
        return Err(Error::EmptyRuns);
    }
    runs.iter()
        .map(|r| {
            r.validate()?;
            Ok(Features::of(r))
        })
        .collect()
}

fn check_theta<L: FittableLaw>(theta: &[f64]) -> Result<()> {
    if theta.len() != L::N_PARAMS {
        return Err(Error::domain(format!(
            "{} law expects {} parameters, got {}",
            L::NAME,
            L::N_PARAMS,
            theta.len()
        )));
    }
    Ok(())
}

/// Fitting objective at internal parameter vector `theta`.
pub fn objective<L: FittableLaw>(theta: &[f64], runs: &[TrainingRun], config: &FitConfig) -> Result<f64> {
    check_theta::<L>(theta)?;
    let features = prepare(runs)?;
    let mut grad = vec![0.0; L::N_PARAMS];
    Ok(evaluate::<L>(theta, &features, config, &mut grad))
}

/// Analytic gradient of [`objective`] with respect to `theta`.
pub fn objective_gradient<L: FittableLaw>(theta: &[f64], runs: &[TrainingRun], config: &FitConfig) -> Result<Vec<f64>> {
    check_theta::<L>(theta)?;
    let features = prepare(runs)?;
    let mut grad = vec![0.0; L::N_PARAMS];
    evaluate::<L>(theta, &features, config, &mut grad);
    Ok(grad)
}

pub fn rmse<L: FittableLaw>(coeffs: &L, runs: &[TrainingRun], log_space: bool) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::EmptyRuns);
    }
    let mut sum = 0.0;
    for run in runs {
        run.validate()?;
        let r = residual(coeffs.predict(run), run.loss, run.loss.ln(), log_space);
        sum += r * r;
    }
    Ok((sum / runs.len() as f64).sqrt())
}

/// Multistart BFGS fit of any [`FittableLaw`].
pub fn fit<L: FittableLaw>(runs: &[TrainingRun], config: &FitConfig) -> Result<FitResult<L>> {
    config.validate()?;
    L::check_design(runs)?;
    let features = prepare(runs)?;
    let bounds = L::bounds();
    let settings = config.bfgs_settings();

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(config.multistart_grid.len());
    for start in &config.multistart_grid {
        let theta = L::theta_from_start(start);
        if !starts.contains(&theta) {
            starts.push(theta);
        }
    }

    let outcomes: Vec<bfgs::BfgsOutcome> = starts
        .par_iter()
        .map(|x0| {
            bfgs::minimize(
                |theta, grad| evaluate::<L>(theta, &features, config, grad),
                x0,
                &bounds,
                &settings,
            )
        })
        .collect();

    let (start_index, best) = outcomes
        .iter()
        .enumerate()
        .filter(|(_, o)| o.fx.is_finite())
        .min_by(|(i, a), (j, b)| a.fx.total_cmp(&b.fx).then(i.cmp(j)))
        .ok_or_else(|| Error::Unidentifiable("objective is non-finite from every start".into()))?;

    let coefficients = L::from_theta(&best.x);
    let rmse = rmse(&coefficients, runs, config.log_space)?;
    Ok(FitResult {
        coefficients,
        objective_value: best.fx,
        rmse,
        n_runs: runs.len(),
        converged: best.converged,
        start_index,
    })
}

pub fn fit_moe(runs: &[TrainingRun], config: &FitConfig) -> Result<FitResult<MoeCoefficients>> {
    fit::<MoeCoefficients>(runs, config)
}

pub fn fit_dense(runs: &[TrainingRun], config: &FitConfig) -> Result<FitResult<DenseCoefficients>> {
    fit::<DenseCoefficients>(runs, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::bfgs::numerical_gradient;

    const MOE: MoeCoefficients = MoeCoefficients::PUBLISHED_E64;

    fn synthetic_moe(coeffs: &MoeCoefficients) -> Vec<TrainingRun> {
        let mut runs = Vec::new();
        for n in [1e8, 1e9, 1e10] {
            for d in [1e9, 4e9, 1.6e10, 6.4e10] {
                for g in [1.0, 4.0, 16.0, 64.0] {
                    let mut run = TrainingRun::from_counts(n, n / 43.0, g, 64.0, d, 1.0).unwrap();
                    run.loss = coeffs.predict(&run);
                    runs.push(run);
                }
            }
        }
        runs
    }

    fn synthetic_dense(coeffs: &DenseCoefficients) -> Vec<TrainingRun> {
        let mut runs = Vec::new();
        for n in [3e6, 2.5e7, 1e8, 1e9] {
            for d in [1.6e10, 3.3e10, 6.6e10] {
                let mut run = TrainingRun::from_counts(n, n, 1.0, 1.0, d, 1.0).unwrap();
                run.loss = coeffs.predict(&run);
                runs.push(run);
            }
        }
        runs
    }

    fn unregularized(max_starts: usize) -> FitConfig {
        FitConfig {
            weight_decay: 0.0,
            multistart_grid: multistart_grid(max_starts),
            ..FitConfig::default()
        }
    }

    #[test]
    fn huber_examples() {
        assert_eq!(huber(0.0, 0.1), 0.0);
        assert!((huber(0.05, 0.1) - 0.00125).abs() < 1e-15);
        assert!((huber(0.2, 0.1) - 0.015).abs() < 1e-15);
        assert!((huber(-0.2, 0.1) - 0.015).abs() < 1e-15);
    }

    #[test]
    fn huber_is_c1_at_the_kink() {
        let delta = 0.1;
        for eps in [1e-6, 1e-9, 1e-12] {
            assert!((huber(delta + eps, delta) - huber(delta - eps, delta)).abs() < 2.0 * eps);
        }
        let h = 1e-8;
        let slope = |r: f64| (huber(r + h, delta) - huber(r - h, delta)) / (2.0 * h);
        for side in [1.0, -1.0] {
            let kink = side * delta;
            assert!((slope(kink - 10.0 * h) - slope(kink + 10.0 * h)).abs() < 1e-6);
        }
    }

    #[test]
    fn grid_defaults() {
        let grid = multistart_grid(DEFAULT_MAX_STARTS);
        assert!(grid.len() <= 256 && grid.len() > 128, "{}", grid.len());
        for c in [0.3, 0.7] {
            assert!(grid.iter().any(|s| s.c == c));
        }
        for v in [0.0, 2.0, 4.0] {
            assert!(grid.iter().any(|s| s.log_g == v));
            assert!(grid.iter().any(|s| s.log_a == v));
        }
        assert_eq!(multistart_grid(1).len(), 1);
    }

    #[test]
    fn objective_examples() {
        let runs = synthetic_moe(&MOE);
        let theta = MOE.to_theta();
        let cfg = unregularized(1);
        assert!(objective::<MoeCoefficients>(&theta, &runs, &cfg).unwrap() < 1e-28);

        let decayed = FitConfig { weight_decay: 5e-4, ..cfg.clone() };
        let penalty: f64 = theta[..6].iter().map(|t| t * t).sum::<f64>() * 5e-4;
        let value = objective::<MoeCoefficients>(&theta, &runs, &decayed).unwrap();
        assert!((value - penalty).abs() < 1e-15);

        let mut one = runs[0];
        one.loss *= 0.03f64.exp();
        let value = objective::<MoeCoefficients>(&theta, &[one], &cfg).unwrap();
        assert!((value - huber(-0.03, 0.1)).abs() < 1e-14);

        assert!(objective::<MoeCoefficients>(&theta[..3], &runs, &cfg).is_err());
        assert!(matches!(objective::<MoeCoefficients>(&theta, &[], &cfg), Err(Error::EmptyRuns)));
        let mut bad = runs[0];
        bad.loss = 0.0;
        assert!(objective::<MoeCoefficients>(&theta, &[bad], &cfg).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut runs = synthetic_moe(&MOE);
        for (i, run) in runs.iter_mut().enumerate() {
            run.loss *= (0.02 * ((i as f64) * 1.7).sin()).exp();
        }
        let cfg = FitConfig {
            weight_decay: 5e-4,
            multistart_grid: multistart_grid(1),
            ..FitConfig::default()
        };
        for raw in [false, true] {
            let cfg = FitConfig { log_space: !raw, ..cfg.clone() };
            for theta in [
                vec![2.5, 0.12, 3.3, 0.15, 0.5, 0.6, 0.4],
                vec![1.0, 0.2, 2.0, 0.1, 1.5, 0.3, 0.9],
            ] {
                let analytic = objective_gradient::<MoeCoefficients>(&theta, &runs, &cfg).unwrap();
                let fd = numerical_gradient(|t| objective::<MoeCoefficients>(t, &runs, &cfg).unwrap(), &theta);
                for (a, f) in analytic.iter().zip(&fd) {
                    assert!((a - f).abs() <= 1e-5 * a.abs().max(1e-3), "{analytic:?} vs {fd:?}");
                }
            }
        }
    }

    #[test]
    fn recovers_moe_exponents_from_noiseless_grid() {
        let runs = synthetic_moe(&MOE);
        let fit = fit_moe(&runs, &unregularized(32)).unwrap();
        let k = fit.coefficients;
        assert!((k.alpha - MOE.alpha).abs() < 0.01, "{k:?}");
        assert!((k.beta - MOE.beta).abs() < 0.01, "{k:?}");
        assert!((k.gamma - MOE.gamma).abs() < 0.01, "{k:?}");
        assert!(fit.rmse < 1e-4, "{}", fit.rmse);
        assert_eq!(fit.n_runs, 48);
        assert_eq!(fit.rmse, rmse(&k, &runs, true).unwrap());
    }

    #[test]
    fn recovers_dense_exponents() {
        let truth = DenseCoefficients::PUBLISHED;
        let runs = synthetic_dense(&truth);
        let fit = fit_dense(&runs, &unregularized(32)).unwrap();
        let k = fit.coefficients;
        assert!((k.alpha - truth.alpha).abs() < 0.01, "{k:?}");
        assert!((k.beta - truth.beta).abs() < 0.01, "{k:?}");
        assert_eq!(fit.rmse, rmse(&k, &runs, true).unwrap());
    }

    #[test]
    fn design_errors() {
        let cfg = unregularized(4);
        assert!(matches!(fit_moe(&[], &cfg), Err(Error::EmptyRuns)));

        let runs = synthetic_moe(&MOE);
        let single_n: Vec<_> = runs.iter().copied().filter(|r| r.n_total == 1e9).collect();
        assert!(matches!(fit_moe(&single_n, &cfg), Err(Error::Unidentifiable(_))));
        let single_d: Vec<_> = runs.iter().copied().filter(|r| r.tokens == 1.6e10).collect();
        assert!(matches!(fit_moe(&single_d, &cfg), Err(Error::Unidentifiable(_))));
        assert!(matches!(fit_dense(&runs, &cfg), Err(Error::DenseRequiresUnitGranularity)));

        let empty_grid = FitConfig { multistart_grid: vec![], ..cfg };
        assert!(fit_moe(&runs, &empty_grid).is_err());
    }

    #[test]
    fn rmse_examples() {
        let runs = synthetic_moe(&MOE);
        assert!(rmse(&MOE, &runs, true).unwrap() < 1e-15);
        let mut one = runs[0];
        one.loss = MOE.predict(&one) * (-0.03f64).exp();
        assert!((rmse(&MOE, &[one], true).unwrap() - 0.03).abs() < 1e-12);
        let (mut up, mut down) = (runs[1], runs[2]);
        up.loss = MOE.predict(&up) + 0.04;
        down.loss = MOE.predict(&down) - 0.04;
        assert!((rmse(&MOE, &[up, down], false).unwrap() - 0.04).abs() < 1e-12);
        assert!(rmse(&MOE, &[], true).is_err());
    }

    #[test]
    fn refitting_from_previous_result_never_worsens() {
        let mut runs = synthetic_moe(&MOE);
        for (i, run) in runs.iter_mut().enumerate() {
            run.loss *= (0.01 * ((i as f64) * 2.3).cos()).exp();
        }
        let cfg = FitConfig {
            multistart_grid: multistart_grid(8),
            ..FitConfig::default()
        };
        let first = fit_moe(&runs, &cfg).unwrap();
        let mut grid = cfg.multistart_grid.clone();
        grid.push(StartPoint::from(&first.coefficients));
        let second = fit_moe(&runs, &FitConfig { multistart_grid: grid, ..cfg }).unwrap();
        assert!(second.objective_value <= first.objective_value);
    }

    #[test]
    fn token_rescaling_moves_only_b() {
        let runs = synthetic_moe(&MOE);
        let k = 4.0;
        let scaled: Vec<_> = runs
            .iter()
            .map(|r| TrainingRun { tokens: r.tokens * k, ..*r })
            .collect();
        let cfg = unregularized(32);
        let base = fit_moe(&runs, &cfg).unwrap().coefficients;
        let moved = fit_moe(&scaled, &cfg).unwrap().coefficients;
        assert!((moved.alpha - base.alpha).abs() < 0.01);
        assert!((moved.beta - base.beta).abs() < 0.01);
        assert!((moved.gamma - base.gamma).abs() < 0.01);
        let expected_b = MOE.b * k.powf(MOE.beta);
        assert!(((moved.b - expected_b) / expected_b).abs() < 0.05, "{} vs {expected_b}", moved.b);
    }
}
