//! Circle-valued helpers for phases.

use std::f64::consts::PI;

/// Map an angle to the principal branch `(-π, π]`.
pub fn wrap(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Distance on the unit circle, in `[0, π]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    wrap(a - b).abs()
}

/// Representative of `theta` closest to `reference`.
pub fn nearest_branch(theta: f64, reference: f64) -> f64 {
    reference + wrap(theta - reference)
}

/// Circular mean `atan2(Σ sin, Σ cos)`; `None` when the resultant vanishes.
pub fn circular_mean(phases: &[f64]) -> Option<f64> {
    if phases.is_empty() {
        return None;
    }
    let (s, c) = phases
        .iter()
        .fold((0.0, 0.0), |(s, c), p| (s + p.sin(), c + p.cos()));
    let r = s.hypot(c) / phases.len() as f64;
    if r < 1e-12 {
        return None;
    }
    Some(s.atan2(c))
}
