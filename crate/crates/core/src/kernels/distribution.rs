//! One-dimensional laws: noise densities for the autoregressive kernel and
//! stationary / initial distributions.

use rand::Rng;
use rand_distr::{Distribution as _, Exp, Normal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF};

use crate::error::{Error, Result};

/// Innovation law of the autoregressive chain. All shipped families have a
/// continuous, strictly positive, locally dominated density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseSpec {
    Gaussian { sigma: f64 },
    Laplace { scale: f64 },
    Student { df: f64, scale: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::param("noise.sigma", "sigma must be positive"))
            }
            NoiseSpec::Laplace { scale } if !(scale > 0.0 && scale.is_finite()) => {
                Err(Error::param("noise.scale", "scale must be positive"))
            }
            NoiseSpec::Student { df, .. } if !(df > 2.0 && df.is_finite()) => {
                Err(Error::param("noise.df", "degrees of freedom must exceed 2"))
            }
            NoiseSpec::Student { scale, .. } if !(scale > 0.0 && scale.is_finite()) => {
                Err(Error::param("noise.scale", "scale must be positive"))
            }
            _ => Ok(()),
        }
    }

    pub fn pdf(&self, y: f64) -> f64 {
        match *self {
            NoiseSpec::Gaussian { sigma } => {
                let z = y / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            }
            NoiseSpec::Laplace { scale } => (-y.abs() / scale).exp() / (2.0 * scale),
            NoiseSpec::Student { df, scale } => student(df, scale).pdf(y),
        }
    }

    /// Whether the innovation has a finite absolute moment of order `r0`.
    pub fn has_moment(&self, r0: f64) -> bool {
        match *self {
            NoiseSpec::Student { df, .. } => r0 < df,
            _ => true,
        }
    }

    /// Symmetric half-width `h` with `P(|noise| > h) <= tail`.
    pub fn half_width(&self, tail: f64) -> f64 {
        match *self {
            NoiseSpec::Gaussian { sigma } => sigma * standard_normal_quantile(1.0 - 0.5 * tail),
            NoiseSpec::Laplace { scale } => scale * (1.0 / tail).ln(),
            NoiseSpec::Student { df, scale } => student(df, scale).inverse_cdf(1.0 - 0.5 * tail),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            NoiseSpec::Gaussian { sigma } => sigma * sigma,
            NoiseSpec::Laplace { scale } => 2.0 * scale * scale,
            NoiseSpec::Student { df, scale } => scale * scale * df / (df - 2.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseSpec::Gaussian { sigma } => Normal::new(0.0, sigma).expect("validated").sample(rng),
            NoiseSpec::Laplace { scale } => sample_laplace(rng, 0.0, scale),
            NoiseSpec::Student { df, scale } => scale * StudentT::new(df).expect("validated").sample(rng),
        }
    }
}

/// Continuous laws used as stationary measures of resampling kernels and as
/// initial distributions. `Dirac` has no density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistributionSpec {
    Gaussian { mean: f64, sd: f64 },
    Exponential { rate: f64 },
    Laplace { location: f64, scale: f64 },
    Uniform { low: f64, high: f64 },
    Dirac { at: f64 },
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DistributionSpec::Gaussian { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            DistributionSpec::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            DistributionSpec::Laplace { location, scale } => {
                location.is_finite() && scale > 0.0 && scale.is_finite()
            }
            DistributionSpec::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            DistributionSpec::Dirac { at } => at.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param("distribution", format!("invalid parameters {self:?}")))
        }
    }

    /// Lebesgue density, `None` for laws without one.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        Some(match *self {
            DistributionSpec::Gaussian { mean, sd } => {
                NoiseSpec::Gaussian { sigma: sd }.pdf(x - mean)
            }
            DistributionSpec::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
            DistributionSpec::Laplace { location, scale } => {
                NoiseSpec::Laplace { scale }.pdf(x - location)
            }
            DistributionSpec::Uniform { low, high } => {
                if (low..=high).contains(&x) {
                    1.0 / (high - low)
                } else {
                    0.0
                }
            }
            DistributionSpec::Dirac { .. } => return None,
        })
    }

    pub fn has_density(&self) -> bool {
        !matches!(self, DistributionSpec::Dirac { .. })
    }

    /// Interval carrying all but `tail` of the mass.
    pub fn support(&self, tail: f64) -> (f64, f64) {
        match *self {
            DistributionSpec::Gaussian { mean, sd } => {
                let h = sd * standard_normal_quantile(1.0 - 0.5 * tail);
                (mean - h, mean + h)
            }
            DistributionSpec::Exponential { rate } => (0.0, (1.0 / tail).ln() / rate),
            DistributionSpec::Laplace { location, scale } => {
                let h = scale * (1.0 / tail).ln();
                (location - h, location + h)
            }
            DistributionSpec::Uniform { low, high } => (low, high),
            DistributionSpec::Dirac { at } => (at, at),
        }
    }

    /// Mass of `[lo, hi]`.
    pub fn mass_in(&self, lo: f64, hi: f64) -> f64 {
        let cdf = |x: f64| -> f64 {
            match *self {
                DistributionSpec::Gaussian { mean, sd } => {
                    statrs::distribution::Normal::new(mean, sd).expect("validated").cdf(x)
                }
                DistributionSpec::Exponential { rate } => {
                    if x <= 0.0 {
                        0.0
                    } else {
                        1.0 - (-rate * x).exp()
                    }
                }
                DistributionSpec::Laplace { location, scale } => {
                    statrs::distribution::Laplace::new(location, scale).expect("validated").cdf(x)
                }
                DistributionSpec::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
                DistributionSpec::Dirac { at } => {
                    if x >= at {
                        1.0
                    } else {
                        0.0
                    }
                }
            }
        };
        (cdf(hi) - cdf(lo)).max(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DistributionSpec::Gaussian { mean, sd } => Normal::new(mean, sd).expect("validated").sample(rng),
            DistributionSpec::Exponential { rate } => Exp::new(rate).expect("validated").sample(rng),
            DistributionSpec::Laplace { location, scale } => sample_laplace(rng, location, scale),
            DistributionSpec::Uniform { low, high } => rng.random_range(low..high),
            DistributionSpec::Dirac { at } => at,
        }
    }
}

fn student(df: f64, scale: f64) -> statrs::distribution::StudentsT {
    statrs::distribution::StudentsT::new(0.0, scale, df).expect("validated")
}

fn sample_laplace<R: Rng + ?Sized>(rng: &mut R, location: f64, scale: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    location - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

pub(crate) fn standard_normal_quantile(p: f64) -> f64 {
    statrs::distribution::Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(p)
}
