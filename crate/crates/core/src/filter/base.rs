//! Discrete base measures `α = θP₀`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Discrete, DiscreteCDF};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Tail mass ignored when a countable support is truncated for enumeration.
pub const DEFAULT_TAIL: f64 = 1e-15;

/// A discrete distribution on the integers with evaluable pmf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BaseDistribution {
    Poisson { mean: f64 },
    /// Failures before the `r`-th success, success probability `p`.
    NegativeBinomial { r: f64, p: f64 },
    Binomial { trials: u64, p: f64 },
    /// Uniform on the integers `lo..=hi`.
    Uniform { lo: i64, hi: i64 },
    /// Uniform on a finite set of distinct values.
    UniformSet { values: Vec<i64> },
    /// Explicit pmf table; probabilities sum to one.
    Table { pmf: BTreeMap<i64, f64> },
}

impl BaseDistribution {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            Self::Poisson { mean } if !(mean.is_finite() && *mean > 0.0) => {
                bad(format!("poisson mean must be positive, got {mean}"))
            }
            Self::NegativeBinomial { r, p }
                if !(r.is_finite() && *r > 0.0 && *p > 0.0 && *p <= 1.0) =>
            {
                bad(format!("negative binomial needs r > 0 and p in (0,1], got r={r}, p={p}"))
            }
            Self::Binomial { p, .. } if !(0.0..=1.0).contains(p) => {
                bad(format!("binomial p must lie in [0,1], got {p}"))
            }
            Self::Uniform { lo, hi } if lo > hi => bad(format!("empty uniform range {lo}..={hi}")),
            Self::UniformSet { values } => {
                let mut v = values.clone();
                v.sort_unstable();
                v.dedup();
                if values.is_empty() || v.len() != values.len() {
                    bad("uniform set needs distinct values".into())
                } else {
                    Ok(())
                }
            }
            Self::Table { pmf } => {
                if pmf.is_empty() || pmf.values().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return bad("pmf table needs nonnegative entries".into());
                }
                let s: f64 = pmf.values().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return bad(format!("pmf table sums to {s}"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn pmf(&self, y: i64) -> f64 {
        match self {
            Self::Poisson { mean } => match u64::try_from(y) {
                Ok(k) => statrs::distribution::Poisson::new(*mean).map_or(0.0, |d| d.pmf(k)),
                Err(_) => 0.0,
            },
            Self::NegativeBinomial { r, p } => match u64::try_from(y) {
                Ok(k) => statrs::distribution::NegativeBinomial::new(*r, *p).map_or(0.0, |d| d.pmf(k)),
                Err(_) => 0.0,
            },
            Self::Binomial { trials, p } => match u64::try_from(y) {
                Ok(k) => statrs::distribution::Binomial::new(*p, *trials).map_or(0.0, |d| d.pmf(k)),
                Err(_) => 0.0,
            },
            Self::Uniform { lo, hi } => {
                if (*lo..=*hi).contains(&y) {
                    1.0 / ((hi - lo) as f64 + 1.0)
                } else {
                    0.0
                }
            }
            Self::UniformSet { values } => {
                if values.contains(&y) {
                    1.0 / values.len() as f64
                } else {
                    0.0
                }
            }
            Self::Table { pmf } => pmf.get(&y).copied().unwrap_or(0.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        match self {
            Self::Poisson { mean } => poisson(*mean, rng),
            Self::NegativeBinomial { r, p } => {
                if *p >= 1.0 {
                    return 0;
                }
                let g = Gamma::new(*r, (1.0 - p) / p).expect("validated parameters");
                poisson(g.sample(rng), rng)
            }
            Self::Binomial { trials, p } => {
                Binomial::new(*trials, *p).expect("validated parameters").sample(rng) as i64
            }
            Self::Uniform { lo, hi } => rng.random_range(*lo..=*hi),
            Self::UniformSet { values } => values[rng.random_range(0..values.len())],
            Self::Table { pmf } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut last = *pmf.keys().next_back().expect("nonempty table");
                for (&y, &p) in pmf {
                    if p > 0.0 {
                        last = y;
                    }
                    acc += p;
                    if u < acc {
                        return y;
                    }
                }
                last
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Poisson { mean } => *mean,
            Self::NegativeBinomial { r, p } => r * (1.0 - p) / p,
            Self::Binomial { trials, p } => *trials as f64 * p,
            Self::Uniform { lo, hi } => (*lo as f64 + *hi as f64) / 2.0,
            Self::UniformSet { values } => {
                values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64
            }
            Self::Table { pmf } => pmf.iter().map(|(&y, &p)| y as f64 * p).sum(),
        }
    }

    /// The whole support when it is finite.
    pub fn finite_support(&self) -> Option<Vec<i64>> {
        match self {
            Self::Binomial { trials, .. } => Some((0..=*trials as i64).collect()),
            Self::Uniform { lo, hi } => Some((*lo..=*hi).collect()),
            Self::UniformSet { values } => {
                let mut v = values.clone();
                v.sort_unstable();
                Some(v)
            }
            Self::Table { pmf } => Some(pmf.iter().filter(|(_, &p)| p > 0.0).map(|(&y, _)| y).collect()),
            Self::Poisson { .. } | Self::NegativeBinomial { .. } => None,
        }
    }

    /// Smallest contiguous window `lo..=hi` carrying at least `1 − tail` of the mass.
    pub fn window(&self, tail: f64) -> (i64, i64) {
        if let Self::Uniform { lo, hi } = self {
            return (*lo, *hi);
        }
        if let Some(s) = self.finite_support() {
            return (s[0], *s.last().expect("nonempty support"));
        }
        let upper = |cdf: &dyn Fn(u64) -> f64| {
            let mut k = 0u64;
            while 1.0 - cdf(k) > tail && k < u64::from(u32::MAX) {
                k = (k + 1).max(k + k / 16);
            }
            k as i64
        };
        let hi = match self {
            Self::Poisson { mean } => {
                let d = statrs::distribution::Poisson::new(*mean).expect("validated");
                upper(&|k| d.cdf(k))
            }
            Self::NegativeBinomial { r, p } => {
                let d = statrs::distribution::NegativeBinomial::new(*r, *p).expect("validated");
                upper(&|k| d.cdf(k))
            }
            _ => unreachable!("finite families handled above"),
        };
        (0, hi)
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> i64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as i64
}

impl fmt::Display for BaseDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Poisson { mean } => write!(f, "poisson:{mean}"),
            Self::NegativeBinomial { r, p } => write!(f, "negbin:{r},{p}"),
            Self::Binomial { trials, p } => write!(f, "binomial:{trials},{p}"),
            Self::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            Self::UniformSet { values } => {
                let v: Vec<String> = values.iter().map(i64::to_string).collect();
                write!(f, "set:{}", v.join(","))
            }
            Self::Table { pmf } => {
                let v: Vec<String> = pmf.iter().map(|(y, p)| format!("{y}={p}")).collect();
                write!(f, "table:{}", v.join(","))
            }
        }
    }
}

/// Parses `family:params`, e.g. `poisson:3`, `negbin:2,0.5`, `binomial:10,0.3`,
/// `uniform:0,9`, `set:1,4,9`, `table:0=0.2,1=0.8`.
impl FromStr for BaseDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = |what: &str| Error::InvalidParameter(format!("base measure `{s}`: {what}"));
        let (family, params) = s.split_once(':').ok_or_else(|| err("expected family:params"))?;
        let list: Vec<&str> = params.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
        let float = |x: &str| x.parse::<f64>().map_err(|_| err(&format!("bad number `{x}`")));
        let int = |x: &str| x.parse::<i64>().map_err(|_| err(&format!("bad integer `{x}`")));
        let arity = |n: usize| {
            if list.len() == n {
                Ok(())
            } else {
                Err(err(&format!("expected {n} parameter(s)")))
            }
        };
        let d = match family.trim().to_ascii_lowercase().as_str() {
            "poisson" => {
                arity(1)?;
                Self::Poisson { mean: float(list[0])? }
            }
            "negbin" | "negative_binomial" => {
                arity(2)?;
                Self::NegativeBinomial { r: float(list[0])?, p: float(list[1])? }
            }
            "binomial" => {
                arity(2)?;
                let trials = u64::try_from(int(list[0])?).map_err(|_| err("negative trials"))?;
                Self::Binomial { trials, p: float(list[1])? }
            }
            "uniform" => {
                arity(2)?;
                Self::Uniform { lo: int(list[0])?, hi: int(list[1])? }
            }
            "set" | "uniform_set" => Self::UniformSet {
                values: list.iter().map(|x| int(x)).collect::<Result<_>>()?,
            },
            "table" => {
                let mut pmf = BTreeMap::new();
                for item in &list {
                    let (y, p) = item.split_once('=').ok_or_else(|| err("table entries are value=prob"))?;
                    if pmf.insert(int(y.trim())?, float(p.trim())?).is_some() {
                        return Err(err(&format!("duplicate value {y}")));
                    }
                }
                Self::Table { pmf }
            }
            other => return Err(err(&format!("unknown family `{other}`"))),
        };
        d.validate()?;
        Ok(d)
    }
}

/// `α = θP₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseMeasure<F> {
    theta: F,
    p0: BaseDistribution,
}

impl<F: Real> BaseMeasure<F> {
    pub fn new(theta: F, p0: BaseDistribution) -> Result<Self> {
        if !(theta > F::zero() && theta.is_finite()) {
            return Err(Error::InvalidParameter(format!("theta must be positive, got {theta}")));
        }
        p0.validate()?;
        Ok(Self { theta, p0 })
    }

    pub fn theta(&self) -> F {
        self.theta
    }

    pub fn distribution(&self) -> &BaseDistribution {
        &self.p0
    }

    pub fn with_theta(&self, theta: F) -> Result<Self> {
        Self::new(theta, self.p0.clone())
    }

    pub fn pmf(&self, y: i64) -> F {
        lit(self.p0.pmf(y))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.p0.sample(rng)
    }

    pub fn theta_f64(&self) -> f64 {
        to_f64(self.theta)
    }
}
