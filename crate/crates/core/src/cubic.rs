//! Positive root of `c·t³ + t − 1 = 0` for `c ≥ 0`.
//!
//! This is the radial equation behind inverting `∇h(x) = (‖x‖² + 1)x`: writing
//! `x = t·p` gives `‖p‖²·t³ + t − 1 = 0`. The left side is strictly increasing on
//! `t ≥ 0`, negative at 0 and nonnegative at 1, so the root is unique in `(0, 1]`.

/// Relative stopping tolerance, a few ulps.
const TOL: f64 = 4.0 * f64::EPSILON;
const MAX_ITER: usize = 200;

/// Returns the unique root in `(0, 1]`, to a few ulps of relative accuracy.
///
/// Newton steps that leave the current bracket are replaced by bisection.
pub fn radial_root(c: f64) -> f64 {
    debug_assert!(c >= 0.0 && c.is_finite());
    if c == 0.0 {
        return 1.0;
    }
    let phi = |t: f64| (c * t * t + 1.0) * t - 1.0;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut t = (1.0 / c.sqrt()).min(1.0);
    for _ in 0..MAX_ITER {
        let v = phi(t);
        if v == 0.0 {
            return t;
        }
        if v > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let dv = 3.0 * c * t * t + 1.0;
        let mut next = t - v / dv;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= TOL * next || hi - lo <= TOL * hi {
            return next;
        }
        t = next;
    }
    t
}
