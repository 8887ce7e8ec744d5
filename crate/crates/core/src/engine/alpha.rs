//! Partial-step solve: the fraction `α` of a step after which an overshooting
//! Euler-Maruyama path first reaches the vertex.

use super::EngineError;

/// Solves `a·s² + b·s + c = 0` for the first-hitting root `s = √α ∈ [0, 1]`
/// and returns `α = s²`.
///
/// `a = μΔt` and `b = σ√Δt·W` are written in coordinates pointing away from
/// the hit vertex and `c ≥ 0` is the distance to it, so an overshoot means
/// `a + b + c ≤ 0`.
pub fn solve_alpha(a: f64, b: f64, c: f64) -> Result<f64, EngineError> {
    let scale = a.abs().max(b.abs()).max(c.abs()).max(1.0);
    let no_root = || EngineError::NoRootInUnitInterval { a, b, c };
    if !(a.is_finite() && b.is_finite() && c.is_finite()) || c < 0.0 {
        return Err(no_root());
    }
    if a + b + c > 1e-12 * scale {
        return Err(no_root());
    }
    let s = first_hit_root(a, b, c);
    if (a * s * s + b * s + c).abs() > 1e-6 * scale {
        return Err(no_root());
    }
    Ok(s * s)
}

/// Smallest nonnegative root in `[0, 1]`, using the cancellation-free form of
/// the quadratic formula for whichever root is requested.
#[inline]
pub(crate) fn first_hit_root(a: f64, b: f64, c: f64) -> f64 {
    if c <= 0.0 {
        return 0.0;
    }
    if a == 0.0 {
        return (-c / b).clamp(0.0, 1.0);
    }
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    let s = if b > 0.0 {
        // a < 0 here: the unique positive root
        (-b - disc) / (2.0 * a)
    } else {
        2.0 * c / (-b + disc)
    };
    s.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bisection for the first sign change of `a s² + b s + c` on `[0, 1]`.
    /// The quadratic has at most one turning point, so scanning the two
    /// monotone pieces finds the first crossing.
    pub(crate) fn bisect_first_root(a: f64, b: f64, c: f64) -> f64 {
        let f = |s: f64| a * s * s + b * s + c;
        let mut pieces = vec![0.0];
        if a != 0.0 {
            let vertex = -b / (2.0 * a);
            if vertex > 0.0 && vertex < 1.0 {
                pieces.push(vertex);
            }
        }
        pieces.push(1.0);
        for w in pieces.windows(2) {
            let (mut lo, mut hi) = (w[0], w[1]);
            if f(lo) == 0.0 {
                return lo;
            }
            if f(lo) > 0.0 && f(hi) <= 0.0 {
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return 0.5 * (lo + hi);
            }
        }
        f64::NAN
    }

    #[test]
    fn driftless_hit() {
        assert_eq!(solve_alpha(0.0, -2.0, 1.0).unwrap(), 0.25);
    }

    #[test]
    fn drift_and_noise_hit() {
        let alpha = solve_alpha(-1.0, -1.0, 1.0).unwrap();
        let s = (5f64.sqrt() - 1.0) / 2.0;
        assert!((alpha - s * s).abs() < 1e-15);
        assert!((alpha - 0.381_966).abs() < 1e-6);
        let oracle = bisect_first_root(-1.0, -1.0, 1.0);
        assert!((alpha.sqrt() - oracle).abs() < 1e-12);
        let r = alpha.sqrt();
        assert!((-r * r - r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_drift_hit() {
        assert_eq!(solve_alpha(-4.0, 0.0, 1.0).unwrap(), 0.25);
    }

    #[test]
    fn drift_away_noise_toward_takes_smaller_root() {
        // s² − 3s + 1: roots 0.381966, 2.618; f(1) = −1
        let alpha = solve_alpha(1.0, -3.0, 1.0).unwrap();
        let s = (3.0 - 5f64.sqrt()) / 2.0;
        assert!((alpha.sqrt() - s).abs() < 1e-15);
    }

    #[test]
    fn landing_exactly_on_vertex_gives_full_step() {
        assert_eq!(solve_alpha(-0.5, -0.5, 1.0).unwrap(), 1.0);
        assert_eq!(solve_alpha(0.0, 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_non_overshoot() {
        assert!(matches!(
            solve_alpha(0.0, 0.5, 1.0),
            Err(EngineError::NoRootInUnitInterval { .. })
        ));
        assert!(solve_alpha(-1.0, -1.0, -0.5).is_err());
        assert!(solve_alpha(f64::NAN, -1.0, 0.5).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn overshoot() -> impl Strategy<Value = (f64, f64, f64)> {
            (-50.0f64..50.0, -50.0f64..50.0, 0.0f64..10.0).prop_filter("must overshoot", |(a, b, c)| a + b + c < 0.0)
        }

        proptest! {
            #[test]
            fn alpha_in_unit_interval_with_small_residual((a, b, c) in overshoot()) {
                let alpha = solve_alpha(a, b, c).unwrap();
                prop_assert!((0.0..=1.0).contains(&alpha));
                let s = alpha.sqrt();
                let scale = a.abs().max(b.abs()).max(c).max(1.0);
                prop_assert!((a * s * s + b * s + c).abs() <= 1e-6 * scale);
                let oracle = bisect_first_root(a, b, c);
                prop_assert!((s - oracle).abs() < 1e-9, "s = {s}, oracle = {oracle}");
            }
        }
    }
}
