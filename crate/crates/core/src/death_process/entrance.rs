//! Law of the death process descending from its entrance boundary at infinity.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, CompensatedSum, Real};

use super::level::rate;

/// Hard cap on the number of series terms.
pub const MAX_TERMS: usize = 10_000;

/// `(θ+2k−1)·(θ+m)ₖ₋₁ / (m!(k−m)!)` in log magnitude, with `(a)ⱼ` the
/// ascending factorial. The `m = k = 0` coefficient equals one.
fn log_coefficient(m: usize, k: usize, theta: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let (mf, kf) = (m as f64, k as f64);
    (theta + 2.0 * kf - 1.0).ln() + ln_gamma(theta + mf + kf - 1.0)
        - ln_gamma(theta + mf)
        - ln_gamma(mf + 1.0)
        - ln_gamma(kf - mf + 1.0)
}

/// `d_m(t) = P(D_t = m | D_0 = ∞)`, summed until the tail is below `tol`.
pub fn dm_probability<F: Real>(m: usize, t: F, theta: F, tol: F) -> Result<F> {
    let (t, theta, tol) = (to_f64(t), to_f64(theta), to_f64(tol));
    if !(t > 0.0) || !(theta > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "d_m(t) needs t > 0, theta > 0, tol > 0 (got t={t}, theta={theta}, tol={tol})"
        )));
    }
    let min_terms = 2.0 * (m as f64 + theta + 1.0 / t);
    let mut sum = CompensatedSum::new();
    let mut rounding = 0.0;
    for (i, k) in (m..).enumerate() {
        if i >= MAX_TERMS {
            return Err(Error::NonConvergence {
                m,
                t,
                tol,
                terms: i,
                bound: rounding,
            });
        }
        let log_mag = log_coefficient(m, k, theta) - rate(k, theta) * t;
        let mag = log_mag.exp();
        let term = if (k - m).is_multiple_of(2) { mag } else { -mag };
        sum.add(term);
        // relative error of exp(log_mag) grows with |log_mag| and the log-gamma arguments
        rounding += mag * f64::EPSILON * (8.0 + log_mag.abs() + (k as f64 + 1.0).ln());
        if (k as f64) > min_terms && mag < tol * 1e-2 {
            break;
        }
    }
    if rounding > tol {
        return Err(Error::NonConvergence {
            m,
            t,
            tol,
            terms: 0,
            bound: rounding,
        });
    }
    let value = sum.value();
    if value < -tol || value > 1.0 + tol {
        return Err(Error::NonConvergence {
            m,
            t,
            tol,
            terms: 0,
            bound: value,
        });
    }
    Ok(lit(value.clamp(0.0, 1.0)))
}

/// `{d_m(t)}` for `m = 0, 1, …` until the cumulative mass reaches `1 − tol`.
pub fn dm_distribution<F: Real>(t: F, theta: F, tol: F) -> Result<Vec<F>> {
    let mut out = Vec::new();
    let mut mass = 0.0;
    for m in 0..MAX_TERMS {
        let d = dm_probability(m, t, theta, tol)?;
        mass += to_f64(d);
        out.push(d);
        if mass >= 1.0 - to_f64(tol) && (m as f64) > 1.0 {
            return Ok(out);
        }
    }
    Err(Error::NonConvergence {
        m: MAX_TERMS,
        t: to_f64(t),
        tol: to_f64(tol),
        terms: MAX_TERMS,
        bound: 1.0 - mass,
    })
}
