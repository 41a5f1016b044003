//! One-dimensional minimisers.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Outcome of a bracketed 1-D minimisation.
#[derive(Clone, Copy, Debug)]
pub struct Minimum<T> {
    pub x: T,
    pub fx: T,
    pub evaluations: usize,
}

/// Brent's method on `[a, b]` (parabolic steps with golden-section fallback).
///
/// Terminates when the bracket half-width drops below `rel_tol * |x| + abs_tol`.
pub fn brent<T: Real, F>(mut f: F, a: T, b: T, abs_tol: T, max_iter: usize) -> Result<Minimum<T>>
where
    F: FnMut(T) -> Result<T>,
{
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let cgold = T::lit(0.381_966_011_250_105_2);
    let rel_tol = T::epsilon() * T::lit(4.0);
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };

    let mut x = a + cgold * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x)?;
    let mut fw = fx;
    let mut fv = fx;
    let mut d = T::zero();
    let mut e = T::zero();
    let mut evaluations = 1;

    for _ in 0..max_iter {
        let xm = half * (a + b);
        let tol1 = rel_tol * x.abs() + abs_tol;
        let tol2 = two * tol1;
        if (x - xm).abs() <= tol2 - half * (b - a) {
            return Ok(Minimum { x, fx, evaluations });
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = two * (q - r);
            if q > T::zero() {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (half * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = cgold * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d >= T::zero() {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u)?;
        evaluations += 1;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Err(Error::Refinement(format!(
        "brent: no convergence after {max_iter} iterations"
    )))
}

/// Golden-section search on `[a, b]` down to an absolute bracket width `tol`.
pub fn golden_section<T: Real, F>(mut f: F, a: T, b: T, tol: T, max_iter: usize) -> Result<Minimum<T>>
where
    F: FnMut(T) -> Result<T>,
{
    let invphi = T::lit(0.618_033_988_749_894_9);
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut evaluations = 2;
    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            let (x, fx) = if fc <= fd { (c, fc) } else { (d, fd) };
            return Ok(Minimum { x, fx, evaluations });
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d)?;
        }
        evaluations += 1;
    }
    Err(Error::Refinement(format!(
        "golden section: no convergence after {max_iter} iterations"
    )))
}

/// Brent followed by successively narrower restarts around the incumbent.
///
/// Avoided crossings can be far narrower than any fixed tolerance in `s`; each
/// pass shrinks the bracket and tolerance by `1e-3` until the minimum value
/// stops improving or the resolution hits the floating-point floor.
pub fn nested_brent<T: Real, F>(mut f: F, a: T, b: T, abs_tol: T) -> Result<(Minimum<T>, T)>
where
    F: FnMut(T) -> Result<T>,
{
    let mut best = brent(&mut f, a, b, abs_tol, 500)?;
    let mut tol = abs_tol;
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let shrink = T::lit(1e-3);
    let floor = T::epsilon() * T::lit(16.0) * best.x.abs().max(T::one());
    for _ in 0..6 {
        let next_tol = (tol * shrink).max(floor);
        if next_tol >= tol {
            break;
        }
        let width = tol * T::lit(8.0);
        let l = (best.x - width).max(lo);
        let r = (best.x + width).min(hi);
        let cand = brent(&mut f, l, r, next_tol, 500)?;
        let improved = cand.fx < best.fx;
        let evaluations = best.evaluations + cand.evaluations;
        let significant = best.fx - cand.fx > T::lit(1e-3) * best.fx.abs();
        if improved {
            best = Minimum { evaluations, ..cand };
        } else {
            best.evaluations = evaluations;
        }
        tol = next_tol;
        if !significant {
            break;
        }
    }
    Ok((best, tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_quadratic() {
        let m = brent(|x: f64| Ok((x - 0.3).powi(2) + 1.0), 0.0, 1.0, 1e-12, 200).unwrap();
        assert!((m.x - 0.3).abs() < 1e-7);
        assert!((m.fx - 1.0).abs() < 1e-14);
    }

    #[test]
    fn golden_quartic() {
        let m = golden_section(|x: f64| Ok((x + 1.25).powi(4)), -3.0, 2.0, 1e-10, 500).unwrap();
        assert!((m.x + 1.25).abs() < 1e-9);
    }

    #[test]
    fn nested_brent_resolves_narrow_cusp() {
        // hyperbola with a minimum far narrower than the first-pass tolerance
        let gap = 1e-12;
        let f = |x: f64| Ok(((x - 0.712_345_678_9) * 3.0).hypot(gap));
        let (m, _) = nested_brent(f, 0.6, 0.8, 1e-10).unwrap();
        assert!(m.fx < 10.0 * gap, "fx = {:e}", m.fx);
    }

    #[test]
    fn errors_propagate() {
        let r = brent(|_x: f64| Err(Error::Degenerate("boom".into())), 0.0, 1.0, 1e-8, 10);
        assert!(r.is_err());
    }
}
