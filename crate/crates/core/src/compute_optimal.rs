//! Compute-optimal allocation of model size, training tokens and granularity
//! under a fixed FLOPs budget.
//!
//! With width tied to depth (`d_model = r · n_blocks`) and `D` eliminated
//! through the FLOPs constraint, the loss at fixed `G` is a function of
//! depth alone. Each `G` on the grid is solved with Brent's method in
//! `ln n_blocks`; the best `G` wins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_at_least_one, ensure_positive, Error, Result};
use crate::laws::{DenseCoefficients, LossLaw, MoeCoefficients};
use crate::optim::brent::{self, Tolerance};
use crate::shapes::{active_params, total_params, tokens_for_budget, training_flops, FlopsConstants, ModelShape};

/// Initial depth bracket, in blocks.
pub const DEPTH_BRACKET: (f64, f64) = (0.5, 2e4);
/// How many times a bracket edge is widened when the minimum sits on it.
const MAX_BRACKET_EXPANSIONS: usize = 4;

const DEPTH_TOLERANCE: Tolerance = Tolerance {
    relative: 0.0,
    // absolute in ln(n_blocks), i.e. relative in n_blocks
    absolute: 1e-8,
    max_iterations: 200,
};

/// Powers of two from 1 to 1024.
pub fn default_granularity_grid() -> Vec<f64> {
    (0..=10).map(|k| f64::from(1u32 << k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetQuery {
    pub flops: f64,
    pub expansion: f64,
    /// Candidate granularities, strictly increasing, each at least 1.
    pub g_grid: Vec<f64>,
    pub constants: FlopsConstants,
}

impl BudgetQuery {
    pub fn new(flops: f64, expansion: f64) -> Result<Self> {
        let query = Self {
            flops,
            expansion,
            g_grid: default_granularity_grid(),
            constants: FlopsConstants::default(),
        };
        query.validate()?;
        Ok(query)
    }

    pub fn with_flops(&self, flops: f64) -> Self {
        Self { flops, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("flops", self.flops)?;
        ensure_at_least_one("expansion", self.expansion)?;
        self.constants.validate()?;
        if self.g_grid.is_empty() {
            return Err(Error::domain("granularity grid is empty"));
        }
        for g in &self.g_grid {
            ensure_at_least_one("granularity", *g)?;
        }
        if self.g_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("granularity grid must be strictly increasing"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalConfig {
    pub shape: ModelShape,
    pub n_total: f64,
    pub n_active: f64,
    pub tokens: f64,
    pub granularity: f64,
    pub predicted_loss: f64,
    /// The budget that was solved for.
    pub flops: f64,
    /// `training_flops(shape, tokens)`, recomputed from the returned config.
    pub flops_check: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub flops: f64,
    pub moe: OptimalConfig,
    pub dense: OptimalConfig,
    pub savings_ratio: f64,
}

/// Loss at a given depth once width and tokens are pinned by the budget.
/// Non-finite when the point is infeasible.
pub fn loss_at_depth<L: LossLaw>(
    n_blocks: f64,
    flops: f64,
    expansion: f64,
    granularity: f64,
    law: &L,
    constants: &FlopsConstants,
) -> f64 {
    let evaluate = || -> Result<f64> {
        let shape = ModelShape::new(constants.width_depth_ratio * n_blocks, n_blocks, expansion, granularity)?;
        let tokens = tokens_for_budget(&shape, flops, constants)?;
        law.loss(total_params(&shape), tokens, granularity)
    };
    evaluate().unwrap_or(f64::NAN)
}

fn build_config<L: LossLaw>(
    n_blocks: f64,
    flops: f64,
    expansion: f64,
    granularity: f64,
    law: &L,
    constants: &FlopsConstants,
) -> Result<OptimalConfig> {
    let shape = ModelShape::new(constants.width_depth_ratio * n_blocks, n_blocks, expansion, granularity)?;
    config_for_shape(shape, flops, law, constants)
}

fn config_for_shape<L: LossLaw>(
    shape: ModelShape,
    flops: f64,
    law: &L,
    constants: &FlopsConstants,
) -> Result<OptimalConfig> {
    let tokens = tokens_for_budget(&shape, flops, constants)?;
    let n_total = total_params(&shape);
    Ok(OptimalConfig {
        shape,
        n_total,
        n_active: active_params(&shape),
        tokens,
        granularity: shape.granularity(),
        predicted_loss: law.loss(n_total, tokens, shape.granularity())?,
        flops,
        flops_check: training_flops(&shape, tokens, constants)?,
    })
}

/// Brent over `ln n_blocks`, widening a bracket edge when the minimum lands
/// on it. Returns `(n_blocks, loss)`.
fn minimize_depth(objective: impl Fn(f64) -> f64) -> (f64, f64) {
    let (mut lo, mut hi) = (DEPTH_BRACKET.0.ln(), DEPTH_BRACKET.1.ln());
    let edge = 1e-6;
    let mut attempt = 0;
    loop {
        let m = brent::minimize(|u| objective(u.exp()), lo, hi, DEPTH_TOLERANCE);
        let at_low = m.x - lo <= edge;
        let at_high = hi - m.x <= edge;
        if attempt >= MAX_BRACKET_EXPANSIONS || !(at_low || at_high) {
            return (m.x.exp(), m.fx);
        }
        if at_high {
            hi += std::f64::consts::LN_2;
        } else {
            lo -= std::f64::consts::LN_2;
        }
        attempt += 1;
    }
}

/// Best depth for one fixed granularity.
pub fn optimize_moe_at(
    flops: f64,
    expansion: f64,
    granularity: f64,
    coeffs: &MoeCoefficients,
    constants: &FlopsConstants,
) -> Result<OptimalConfig> {
    ensure_positive("flops", flops)?;
    ensure_at_least_one("granularity", granularity)?;
    coeffs.validate()?;
    let (n_blocks, loss) =
        minimize_depth(|n| loss_at_depth(n, flops, expansion, granularity, coeffs, constants));
    if !loss.is_finite() {
        return Err(Error::NoFiniteSolution);
    }
    build_config(n_blocks, flops, expansion, granularity, coeffs, constants)
}

pub fn optimize_moe(query: &BudgetQuery, coeffs: &MoeCoefficients) -> Result<OptimalConfig> {
    query.validate()?;
    coeffs.validate()?;
    let per_granularity: Vec<Option<OptimalConfig>> = query
        .g_grid
        .par_iter()
        .map(|&g| optimize_moe_at(query.flops, query.expansion, g, coeffs, &query.constants).ok())
        .collect();
    per_granularity
        .into_iter()
        .flatten()
        .filter(|c| c.predicted_loss.is_finite())
        .reduce(|best, c| if c.predicted_loss < best.predicted_loss { c } else { best })
        .ok_or(Error::NoFiniteSolution)
}

/// Compute-optimal dense Transformer; FLOPs are `c_f · N · D` (no router).
pub fn optimize_dense(flops: f64, coeffs: &DenseCoefficients, constants: &FlopsConstants) -> Result<OptimalConfig> {
    ensure_positive("flops", flops)?;
    coeffs.validate()?;
    constants.validate()?;
    let (n_blocks, loss) = minimize_depth(|n| loss_at_depth(n, flops, 1.0, 1.0, coeffs, constants));
    if !loss.is_finite() {
        return Err(Error::NoFiniteSolution);
    }
    build_config(n_blocks, flops, 1.0, 1.0, coeffs, constants)
}

/// Smallest dense budget whose compute-optimal loss reaches `target_loss`.
/// `hint` seeds the geometric bracket search.
pub fn dense_budget_for_loss(
    target_loss: f64,
    coeffs: &DenseCoefficients,
    constants: &FlopsConstants,
    hint: f64,
) -> Result<f64> {
    ensure_positive("hint", hint)?;
    if target_loss.is_nan() || target_loss <= coeffs.c {
        return Err(Error::UnreachableByDense {
            target: target_loss,
            asymptote: coeffs.c,
        });
    }
    // Decreasing in ln F.
    let gap = |ln_f: f64| -> f64 {
        optimize_dense(ln_f.exp(), coeffs, constants)
            .map(|c| c.predicted_loss - target_loss)
            .unwrap_or(f64::NAN)
    };
    let start = hint.ln();
    let at_start = gap(start);
    if at_start == 0.0 {
        return Ok(hint);
    }
    let direction = if at_start > 0.0 { 1.0 } else { -1.0 };
    let mut inner = start;
    let mut step = std::f64::consts::LN_2;
    let mut outer = start + direction * step;
    let mut bracketed = false;
    for _ in 0..64 {
        let value = gap(outer);
        if !value.is_finite() {
            break;
        }
        if value.signum() != at_start.signum() {
            bracketed = true;
            break;
        }
        inner = outer;
        step *= 2.0;
        outer += direction * step;
    }
    if !bracketed {
        return Err(Error::UnreachableByDense {
            target: target_loss,
            asymptote: coeffs.c,
        });
    }
    let tol = Tolerance {
        relative: 0.0,
        absolute: 1e-10,
        max_iterations: 200,
    };
    brent::find_root(gap, inner, outer, tol)
        .map(|r| r.x.exp())
        .ok_or(Error::NoFiniteSolution)
}

/// Dense budget needed to match the compute-optimal MoE loss at `flops`,
/// as a multiple of `flops`.
pub fn compute_savings(
    flops: f64,
    moe: &MoeCoefficients,
    dense: &DenseCoefficients,
    template: &BudgetQuery,
) -> Result<f64> {
    let optimum = optimize_moe(&template.with_flops(flops), moe)?;
    savings_for(&optimum, dense, &template.constants)
}

fn savings_for(moe_optimum: &OptimalConfig, dense: &DenseCoefficients, constants: &FlopsConstants) -> Result<f64> {
    let dense_flops = dense_budget_for_loss(moe_optimum.predicted_loss, dense, constants, moe_optimum.flops)?;
    Ok(dense_flops / moe_optimum.flops)
}

pub fn frontier(
    budgets: &[f64],
    moe: &MoeCoefficients,
    dense: &DenseCoefficients,
    template: &BudgetQuery,
) -> Result<Vec<FrontierPoint>> {
    if budgets.is_empty() {
        return Err(Error::domain("no budgets given"));
    }
    for &f in budgets {
        ensure_positive("budget", f)?;
    }
    let mut sorted = budgets.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .par_iter()
        .map(|&flops| {
            let moe_opt = optimize_moe(&template.with_flops(flops), moe)?;
            let dense_opt = optimize_dense(flops, dense, &template.constants)?;
            let savings_ratio = savings_for(&moe_opt, dense, &template.constants)?;
            Ok(FrontierPoint {
                flops,
                moe: moe_opt,
                dense: dense_opt,
                savings_ratio,
            })
        })
        .collect()
}

/// `points` budgets spaced evenly in log between `from` and `to` inclusive.
pub fn log_spaced(from: f64, to: f64, points: usize) -> Result<Vec<f64>> {
    ensure_positive("from", from)?;
    ensure_positive("to", to)?;
    match points {
        0 => Err(Error::domain("need at least one point")),
        1 => Ok(vec![from]),
        _ => {
            let (a, b) = (from.ln(), to.ln());
            Ok((0..points)
                .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
                .collect())
        }
    }
}

/// Rounds depth to a whole number of blocks and re-derives tokens so the
/// budget is spent exactly.
pub fn concretize<L: LossLaw>(config: &OptimalConfig, law: &L, constants: &FlopsConstants) -> Result<OptimalConfig> {
    config_for_shape(config.shape.concretized(constants), config.flops, law, constants)
}
