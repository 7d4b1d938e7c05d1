use super::TrainingRun;
use crate::error::{Error, Result};

/// Holds out the lowest-loss 20% of runs (at least one).
///
/// Runs are ordered by observed loss, ties broken by `(N, D, G)` ascending,
/// so the split does not depend on input order. Both halves are returned in
/// that order.
pub fn validation_split(runs: &[TrainingRun]) -> Result<(Vec<TrainingRun>, Vec<TrainingRun>)> {
    if runs.len() < 5 {
        return Err(Error::domain(format!(
            "validation split needs at least 5 runs, got {}",
            runs.len()
        )));
    }
    let mut sorted = runs.to_vec();
    sorted.sort_by(|x, y| {
        x.loss
            .total_cmp(&y.loss)
            .then(x.n_total.total_cmp(&y.n_total))
            .then(x.tokens.total_cmp(&y.tokens))
            .then(x.granularity.total_cmp(&y.granularity))
    });
    let holdout_len = (runs.len() / 5).max(1);
    let train = sorted.split_off(holdout_len);
    Ok((train, sorted))
}
