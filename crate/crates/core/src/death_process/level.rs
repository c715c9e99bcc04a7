//! One-dimensional death process on `{0, 1, …, m}` with rates `λⱼ = j(θ+j−1)/2`.

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, to_f64, CompensatedSum, Real};

/// Tolerance outside `[0, 1]` (and bound on the estimated rounding error) at
/// which the closed-form alternating sum is declared unstable.
pub const INSTABILITY_DELTA: f64 = 1e-8;

/// Rates closer than this are treated as coincident.
pub const DEGENERATE_RATE_GAP: f64 = 1e-12;

/// `λ_m = m(θ+m−1)/2`.
pub fn rate<F: Real>(m: usize, theta: F) -> F {
    if m == 0 {
        return F::zero();
    }
    let mf: F = from_usize(m);
    mf * (theta + mf - F::one()) / lit(2.0)
}

/// Closed form of `p_{m,n}(t)` for `0 < n < m` together with an a-priori bound
/// on its rounding error.
fn alternating_sum<F: Real>(m: usize, n: usize, t: F, theta: F) -> Result<(F, F)> {
    let d = m - n;
    let lambdas: Vec<F> = (0..=d).map(|h| rate(m - h, theta)).collect();
    let unstable = |value: F, bound: F| Error::NumericalInstability {
        m,
        n,
        t: to_f64(t),
        theta: to_f64(theta),
        value: to_f64(value),
        bound: to_f64(bound),
    };

    let mut sum = CompensatedSum::new();
    let mut magnitude = CompensatedSum::new();
    let eps = F::epsilon();
    for k in 0..=d {
        // Interleave the d numerator rates with the d denominator gaps so the
        // running product stays in range.
        let mut coeff = F::one();
        let mut j = 0;
        for h in 0..=d {
            if h == k {
                continue;
            }
            let gap = lambdas[k] - lambdas[h];
            if to_f64(gap.abs()) < DEGENERATE_RATE_GAP {
                return Err(unstable(F::nan(), F::infinity()));
            }
            coeff = coeff * (lambdas[j] / gap);
            j += 1;
        }
        let exponent = lambdas[k] * t;
        let mut term = coeff * (-exponent).exp();
        if d % 2 == 1 {
            term = -term;
        }
        if !term.is_finite() {
            return Err(unstable(term, F::infinity()));
        }
        sum.add(term);
        let rel = eps * (from_usize::<F>(2 * d + 4) + exponent);
        magnitude.add(term.abs() * rel);
    }
    Ok((sum.value(), magnitude.value()))
}

fn checked<F: Real>(m: usize, n: usize, t: F, theta: F, value: F, bound: F) -> Result<F> {
    let delta: F = lit(INSTABILITY_DELTA);
    if value < -delta || value > F::one() + delta || bound > delta || !value.is_finite() {
        return Err(Error::NumericalInstability {
            m,
            n,
            t: to_f64(t),
            theta: to_f64(theta),
            value: to_f64(value),
            bound: to_f64(bound),
        });
    }
    Ok(value.max(F::zero()).min(F::one()))
}

fn validate<F: Real>(m: usize, n: usize, t: F, theta: F) -> Result<()> {
    if n > m {
        return Err(Error::InvalidLevel { m, n });
    }
    if !(t >= F::zero()) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time must be finite and >= 0, got {t}")));
    }
    if !(theta > F::zero()) || !theta.is_finite() {
        return Err(Error::InvalidParameter(format!("theta must be positive, got {theta}")));
    }
    Ok(())
}

/// Probability that the death process started at level `m` sits at level `n`
/// after time `t`, from the closed-form alternating sum. `n = 0` is obtained by
/// complementation.
///
/// Fails with [`Error::NumericalInstability`] when the sum cannot be certified
/// to within [`INSTABILITY_DELTA`]; see [`DeathKernel`](super::DeathKernel) for
/// the evaluation path that falls back to a stable method.
pub fn level_transition<F: Real>(m: usize, n: usize, t: F, theta: F) -> Result<F> {
    validate(m, n, t, theta)?;
    if n == m {
        return Ok((-rate(m, theta) * t).exp());
    }
    if t == F::zero() {
        return Ok(F::zero());
    }
    if n > 0 {
        let (value, bound) = alternating_sum(m, n, t, theta)?;
        return checked(m, n, t, theta, value, bound);
    }
    let mut upper = CompensatedSum::new();
    let mut bound = F::zero();
    upper.add((-rate(m, theta) * t).exp());
    for j in 1..m {
        let (value, b) = alternating_sum(m, j, t, theta)?;
        upper.add(value);
        bound = bound + b;
    }
    checked(m, 0, t, theta, F::one() - upper.value(), bound)
}

/// The full row `{p_{m,n}(t)}_{n=0..m}` from the closed form.
pub fn level_row_closed_form<F: Real>(m: usize, t: F, theta: F) -> Result<Vec<F>> {
    validate(m, 0, t, theta)?;
    let mut row = vec![F::zero(); m + 1];
    row[m] = (-rate(m, theta) * t).exp();
    if t == F::zero() {
        return Ok(row);
    }
    let mut upper = CompensatedSum::new();
    upper.add(row[m]);
    let mut total_bound = F::zero();
    for (n, slot) in row.iter_mut().enumerate().take(m).skip(1) {
        let (value, bound) = alternating_sum(m, n, t, theta)?;
        *slot = checked(m, n, t, theta, value, bound)?;
        upper.add(value);
        total_bound = total_bound + bound;
    }
    if m > 0 {
        row[0] = checked(m, 0, t, theta, F::one() - upper.value(), total_bound)?;
    }
    Ok(row)
}

/// Upper limit on `(jumps of the uniformized chain) × (levels)` before giving up.
const UNIFORMIZATION_WORK_LIMIT: f64 = 2e9;

/// The row `{p_{m,n}(t)}` by uniformization: a Poisson(Λt) mixture of powers of
/// the embedded jump chain with `Λ = λ_m`. Every term is nonnegative, so the
/// result is accurate to rounding regardless of `m` and `t`.
pub fn level_row_uniformized<F: Real>(m: usize, t: F, theta: F) -> Result<Vec<F>> {
    validate(m, 0, t, theta)?;
    let mut row = vec![F::zero(); m + 1];
    let big_lambda = to_f64(rate(m, theta));
    let lt = big_lambda * to_f64(t);
    if m == 0 || lt == 0.0 {
        row[m] = F::one();
        return Ok(row);
    }
    let jumps_max = (lt + 12.0 * lt.sqrt() + 40.0).ceil();
    if jumps_max * (m as f64 + 1.0) > UNIFORMIZATION_WORK_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "uniformization for m={m}, t={t} needs {jumps_max:e} jumps"
        )));
    }
    let stay: Vec<f64> = (0..=m)
        .map(|j| 1.0 - to_f64(rate(j, theta)) / big_lambda)
        .collect();
    let mut state = vec![0.0f64; m + 1];
    state[m] = 1.0;
    let mut acc: Vec<CompensatedSum<f64>> = vec![CompensatedSum::new(); m + 1];
    let ln_lt = lt.ln();
    let mut log_pois = -lt;
    let mut lowest = m;
    for r in 0..jumps_max as usize {
        if r > 0 {
            log_pois += ln_lt - (r as f64).ln();
        }
        if log_pois > -745.0 {
            let w = log_pois.exp();
            for j in lowest..=m {
                acc[j].add(w * state[j]);
            }
        }
        // one jump of the embedded chain; ascending order moves mass at most one level
        let mut next_low = lowest;
        for j in lowest..=m {
            let leave = state[j] * (1.0 - stay[j]);
            state[j] -= leave;
            if j > 0 && leave > 0.0 {
                state[j - 1] += leave;
                next_low = next_low.min(j - 1);
            }
        }
        lowest = next_low;
        if r as f64 > lt && log_pois < -50.0 {
            break;
        }
    }
    for (slot, a) in row.iter_mut().zip(&acc) {
        *slot = lit(a.value().clamp(0.0, 1.0));
    }
    Ok(row)
}
