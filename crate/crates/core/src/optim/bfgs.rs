//! Quasi-Newton (BFGS) minimization with box constraints handled by
//! projection.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsSettings {
    pub max_iterations: usize,
    /// Stop once the projected gradient's infinity norm drops to this.
    pub gradient_tolerance: f64,
    /// Stop once the objective improved by no more than this over
    /// `stall_window` iterations.
    pub stall_tolerance: f64,
    pub stall_window: usize,
}

impl Default for BfgsSettings {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            gradient_tolerance: 1e-8,
            stall_tolerance: 1e-12,
            stall_window: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Box bound for one coordinate; use infinities for a free coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub lower: f64,
    pub upper: f64,
}

impl Bound {
    pub const FREE: Bound = Bound {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };

    fn project(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }
}

fn project(x: &mut [f64], bounds: &[Bound]) {
    for (v, b) in x.iter_mut().zip(bounds) {
        *v = b.project(*v);
    }
}

/// Coordinates pinned at a bound with the gradient pushing outward.
fn pinned(x: &[f64], grad: &[f64], bounds: &[Bound]) -> Vec<bool> {
    x.iter()
        .zip(grad)
        .zip(bounds)
        .map(|((&v, &g), b)| (v <= b.lower && g > 0.0) || (v >= b.upper && g < 0.0))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn identity(n: usize, scale: f64) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = scale;
    }
    h
}

/// Minimizes `objective`, which writes the gradient into its second argument
/// and returns the value.
pub fn minimize<F>(mut objective: F, x0: &[f64], bounds: &[Bound], settings: &BfgsSettings) -> BfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(bounds.len(), n, "one bound per coordinate");

    let mut x = x0.to_vec();
    project(&mut x, bounds);
    let mut grad = vec![0.0; n];
    let mut fx = objective(&x, &mut grad);
    let mut h = identity(n, 1.0);
    let mut fresh = true;
    let mut history = vec![fx];

    let mut x_new = vec![0.0; n];
    let mut grad_new = vec![0.0; n];
    let mut direction = vec![0.0; n];

    for iteration in 0..settings.max_iterations {
        if !fx.is_finite() {
            return BfgsOutcome {
                x,
                fx,
                iterations: iteration,
                converged: false,
            };
        }
        let fixed = pinned(&x, &grad, bounds);
        let projected_norm = grad
            .iter()
            .zip(&fixed)
            .filter(|(_, &f)| !f)
            .fold(0.0f64, |m, (g, _)| m.max(g.abs()));
        if projected_norm <= settings.gradient_tolerance {
            return BfgsOutcome {
                x,
                fx,
                iterations: iteration,
                converged: true,
            };
        }

        for i in 0..n {
            direction[i] = if fixed[i] {
                0.0
            } else {
                -(0..n).filter(|&j| !fixed[j]).map(|j| h[i * n + j] * grad[j]).sum::<f64>()
            };
        }
        if dot(&direction, &grad) >= 0.0 {
            h = identity(n, 1.0);
            fresh = true;
            for i in 0..n {
                direction[i] = if fixed[i] { 0.0 } else { -grad[i] };
            }
        }

        // Backtracking (Armijo) search along the projected path.
        let mut step = 1.0;
        let mut accepted = false;
        let mut f_new = f64::INFINITY;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * direction[i];
            }
            project(&mut x_new, bounds);
            let decrease: f64 = grad.iter().zip(x_new.iter().zip(&x)).map(|(g, (a, b))| g * (a - b)).sum();
            f_new = objective(&x_new, &mut grad_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * decrease {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if fresh {
                return BfgsOutcome {
                    x,
                    fx,
                    iterations: iteration,
                    converged: false,
                };
            }
            h = identity(n, 1.0);
            fresh = true;
            continue;
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if fresh {
                h = identity(n, sy / dot(&y, &y));
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }

        x.copy_from_slice(&x_new);
        grad.copy_from_slice(&grad_new);
        fx = f_new;
        history.push(fx);
        if history.len() > settings.stall_window {
            let earlier = history[history.len() - 1 - settings.stall_window];
            if earlier - fx <= settings.stall_tolerance {
                return BfgsOutcome {
                    x,
                    fx,
                    iterations: iteration + 1,
                    converged: true,
                };
            }
        }
    }

    BfgsOutcome {
        x,
        fx,
        iterations: settings.max_iterations,
        converged: false,
    }
}

/// Central-difference gradient with step `1e-6 · (1 + |x_i|)`.
pub fn numerical_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * (1.0 + x[i].abs());
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}
