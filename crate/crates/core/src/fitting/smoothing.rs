use crate::error::{ensure_positive, Error, Result};

/// Default EMA half-life, in steps.
pub const DEFAULT_HALF_LIFE: f64 = 100.0;

/// Exponential moving average of a loss curve.
///
/// The weight kept from the previous smoothed value is `0.5^(Δstep / half_life)`,
/// so irregularly logged curves are handled. The first point passes through
/// unchanged.
pub fn smooth_curve(points: &[(f64, f64)], half_life: f64) -> Result<Vec<(f64, f64)>> {
    ensure_positive("half_life", half_life)?;
    if points.windows(2).any(|w| w[1].0.partial_cmp(&w[0].0) != Some(std::cmp::Ordering::Greater)) {
        return Err(Error::domain("steps must be strictly increasing"));
    }
    let mut out = Vec::with_capacity(points.len());
    let mut iter = points.iter();
    let Some(&(step0, loss0)) = iter.next() else {
        return Ok(out);
    };
    out.push((step0, loss0));
    let (mut prev_step, mut smoothed) = (step0, loss0);
    for &(step, loss) in iter {
        let keep = 0.5f64.powf((step - prev_step) / half_life);
        smoothed = keep * smoothed + (1.0 - keep) * loss;
        out.push((step, smoothed));
        prev_step = step;
    }
    Ok(out)
}
