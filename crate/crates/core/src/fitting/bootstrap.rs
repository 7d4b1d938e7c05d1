use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{fit, FitConfig, FitResult, FittableLaw, TrainingRun};
use crate::error::{Error, Result};

/// Refits `iterations` times, each time on a uniform subset of
/// `floor(resample_fraction · n)` runs drawn without replacement.
///
/// Subsets come from a ChaCha8 stream seeded with `seed` and are drawn before
/// any fitting starts, so the output does not depend on scheduling. A failed
/// refit is recorded in its slot rather than aborting the whole call.
pub fn bootstrap_fit<L: FittableLaw>(
    runs: &[TrainingRun],
    config: &FitConfig,
    resample_fraction: f64,
    iterations: usize,
    seed: u64,
) -> Result<Vec<Result<FitResult<L>>>> {
    if runs.is_empty() {
        return Err(Error::EmptyRuns);
    }
    if !(resample_fraction > 0.0 && resample_fraction <= 1.0) {
        return Err(Error::domain(format!(
            "resample_fraction must lie in (0, 1], got {resample_fraction}"
        )));
    }
    let n = runs.len();
    let size = ((resample_fraction * n as f64).floor() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subsets: Vec<Vec<TrainingRun>> = (0..iterations)
        .map(|_| {
            let mut picked = rand::seq::index::sample(&mut rng, n, size).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| runs[i]).collect()
        })
        .collect();

    Ok(subsets.par_iter().map(|subset| fit::<L>(subset, config)).collect())
}

/// `(lo, hi)` quantiles with linear interpolation between order statistics
/// (position `p · (n - 1)` in the sorted sample).
pub fn percentile_interval(samples: &[f64], lo: f64, hi: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::domain("percentile interval of an empty sample"));
    }
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
        return Err(Error::domain(format!("need 0 <= lo < hi <= 1, got ({lo}, {hi})")));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::domain("sample contains NaN"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((quantile(&sorted, lo), quantile(&sorted, hi)))
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let position = p * (sorted.len() - 1) as f64;
    let below = position.floor() as usize;
    let above = (below + 1).min(sorted.len() - 1);
    let weight = position - below as f64;
    sorted[below] + weight * (sorted[above] - sorted[below])
}
