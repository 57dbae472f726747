//! Safeguarded Newton iteration on a sign-change bracket.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
    /// The residual tolerance was met (as opposed to the bracket collapsing
    /// to machine precision first).
    pub within_tolerance: bool,
}

/// Solves `f(x) = 0` on `[lo, hi]`, where `f` returns the value and its
/// derivative. A Newton step that leaves the current bracket, or is not
/// finite, is replaced by bisection; the bracket shrinks every iteration.
pub(crate) fn newton_bisect<F>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    start: f64,
    residual_tol: f64,
    max_iter: usize,
) -> Result<Root>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (f_lo, _) = f(lo);
    let (f_hi, _) = f(hi);
    if f_lo == 0.0 {
        return Ok(Root {
            x: lo,
            residual: 0.0,
            iterations: 0,
            within_tolerance: true,
        });
    }
    if f_hi == 0.0 {
        return Ok(Root {
            x: hi,
            residual: 0.0,
            iterations: 0,
            within_tolerance: true,
        });
    }
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo.signum() == f_hi.signum() {
        return Err(Error::SolveFailed(format!(
            "no sign change on [{lo:e}, {hi:e}] (f = {f_lo:e}, {f_hi:e})"
        )));
    }
    let lo_negative = f_lo < 0.0;

    let mut x = if start.is_finite() && start > lo && start < hi {
        start
    } else {
        0.5 * (lo + hi)
    };
    let mut best = Root {
        x,
        residual: f64::INFINITY,
        iterations: 0,
        within_tolerance: false,
    };
    for it in 1..=max_iter {
        let (fx, dfx) = f(x);
        if fx.is_finite() && fx.abs() < best.residual.abs() {
            best = Root {
                x,
                residual: fx,
                iterations: it,
                within_tolerance: false,
            };
        }
        if fx.abs() <= residual_tol {
            // one more Newton step, kept only if it improves the residual
            let polished = x - fx / dfx;
            if polished.is_finite() && polished > lo && polished < hi && polished != x {
                let (fp, _) = f(polished);
                if fp.is_finite() && fp.abs() < fx.abs() {
                    return Ok(Root {
                        x: polished,
                        residual: fp,
                        iterations: it + 1,
                        within_tolerance: true,
                    });
                }
            }
            return Ok(Root {
                x,
                residual: fx,
                iterations: it,
                within_tolerance: true,
            });
        }
        if (fx < 0.0) == lo_negative {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) {
            best.iterations = it;
            return Ok(best);
        }
        let newton = x - fx / dfx;
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::SolveFailed(format!(
        "no convergence after {max_iter} iterations (best residual {:e} at {:e})",
        best.residual, best.x
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = newton_bisect(|x| (x * x - 2.0, 2.0 * x), 0.0, 10.0, 5.0, 1e-14, 100).unwrap();
        assert!((r.x - 2f64.sqrt()).abs() < 1e-14);
        assert!(r.within_tolerance);
    }

    #[test]
    fn bad_derivative_falls_back_to_bisection() {
        // derivative reported as zero everywhere: pure bisection
        let r = newton_bisect(|x| (x.powi(3) - 0.125, 0.0), 0.0, 1.0, 0.9, 1e-12, 200).unwrap();
        assert!((r.x - 0.5).abs() < 1e-10);
    }

    #[test]
    fn requires_sign_change() {
        assert!(newton_bisect(|x| (x * x + 1.0, 2.0 * x), -1.0, 1.0, 0.0, 1e-12, 50).is_err());
    }
}
