use core::ops::{Add, Mul};

use crate::error::Result;

/// One classical fourth-order Runge-Kutta increment `y(t+h) − y(t)`.
///
/// Both the first-order reference flow and the second-order closed loop use
/// this kernel.
pub(crate) fn rk4_increment<S, F>(y: &S, h: f64, mut f: F) -> Result<S>
where
    S: Copy + Add<Output = S> + Mul<f64, Output = S>,
    F: FnMut(&S) -> Result<S>,
{
    let k1 = f(y)?;
    let k2 = f(&(*y + k1 * (0.5 * h)))?;
    let k3 = f(&(*y + k2 * (0.5 * h)))?;
    let k4 = f(&(*y + k3 * h))?;
    Ok((k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Split `duration` into `n = ⌈|duration|/dt⌉` equal steps (a tiny slack
/// keeps exact multiples from gaining a step to round-off).
pub(crate) fn step_count(duration: f64, dt: f64) -> (usize, f64) {
    let span = duration.abs();
    if span == 0.0 {
        return (0, 0.0);
    }
    let n = libm::ceil(span / dt - 1e-9).max(1.0) as usize;
    (n, duration / n as f64)
}
