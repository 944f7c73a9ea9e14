//! Small scalar references.

/// Diode-pair reflected wave by bisection on
/// `v + 2 Is R0 sinh(v / (n Vt)) = a`, then `b = 2v - a`.
pub fn diode_pair_bisect(a: f64, r0: f64, is: f64, n: f64, vt: f64) -> f64 {
    let mag = a.abs();
    let f = |v: f64| v + 2.0 * is * r0 * (v / (n * vt)).sinh() - mag;
    let (mut lo, mut hi) = (0.0, mag);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (2.0 * (0.5 * (lo + hi)) - mag) * a.signum()
}

/// `y[n] = b0 x[n] + b1 x[n-1] - a1 y[n-1]` from rest.
pub fn first_order_recurrence(b0: f64, b1: f64, a1: f64, x: &[f64]) -> Vec<f64> {
    let mut y = Vec::with_capacity(x.len());
    let (mut xp, mut yp) = (0.0, 0.0);
    for &xn in x {
        let yn = b0 * xn + b1 * xp - a1 * yp;
        y.push(yn);
        xp = xn;
        yp = yn;
    }
    y
}

/// Error-to-signal ratio computed in the most direct way.
pub fn esr(reference: &[f64], estimate: &[f64]) -> f64 {
    let num: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(y, e)| (y - e) * (y - e))
        .sum();
    let den: f64 = reference.iter().map(|y| y * y).sum();
    num / den
}
