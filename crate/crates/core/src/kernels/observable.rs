//! Non-negative observables ξ and the weight V(x) = (1 + |x|)^r0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;

#[derive(Debug, Clone, PartialEq)]
pub enum ObservableKind {
    /// `scale · |x|^q`
    Power { q: f64, scale: f64 },
    /// `x²`
    Quadratic,
    /// `c`
    Constant(f64),
    /// `e^{-|x|}`
    ExpDecay,
    Expression(Expr),
    /// Values indexed by the state of a finite chain.
    Table(Vec<f64>),
}

/// Growth facts about ξ relative to the weight `V = (1+|x|)^r0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthProfile {
    pub coercive: bool,
    /// `sup ξ/V`, `None` when unbounded.
    pub ratio_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub kind: ObservableKind,
    /// User assertion that `ξ > 0` Lebesgue-a.e.; never inferred.
    pub positive_ae: Option<bool>,
    /// User override for `sup ξ/V`.
    pub ratio_bound_override: Option<f64>,
}

impl From<ObservableKind> for Observable {
    fn from(kind: ObservableKind) -> Self {
        Observable {
            kind,
            positive_ae: None,
            ratio_bound_override: None,
        }
    }
}

impl Observable {
    pub fn quadratic() -> Self {
        ObservableKind::Quadratic.into()
    }

    pub fn constant(c: f64) -> Self {
        ObservableKind::Constant(c).into()
    }

    pub fn power(q: f64, scale: f64) -> Self {
        ObservableKind::Power { q, scale }.into()
    }

    pub fn identity() -> Self {
        Self::power(1.0, 1.0)
    }

    pub fn exp_decay() -> Self {
        ObservableKind::ExpDecay.into()
    }

    pub fn table(values: Vec<f64>) -> Self {
        ObservableKind::Table(values).into()
    }

    pub fn expression(text: &str) -> Result<Self> {
        Ok(ObservableKind::Expression(Expr::parse(text)?).into())
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            ObservableKind::Power { q, scale } if !(*q >= 0.0 && *scale > 0.0) => {
                Err(Error::param("observable.params", "power needs q >= 0 and scale > 0"))
            }
            ObservableKind::Constant(c) if !(*c >= 0.0 && c.is_finite()) => {
                Err(Error::param("observable.params", "constant must be non-negative"))
            }
            ObservableKind::Table(v) if v.iter().any(|v| !(*v >= 0.0 && v.is_finite())) => {
                Err(Error::param("observable.params", "table values must be non-negative"))
            }
            _ => Ok(()),
        }
    }

    /// ξ(x); negative or non-finite values are errors.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let value = match &self.kind {
            ObservableKind::Power { q, scale } => {
                if *q == 0.0 {
                    *scale
                } else {
                    scale * x.abs().powf(*q)
                }
            }
            ObservableKind::Quadratic => x * x,
            ObservableKind::Constant(c) => *c,
            ObservableKind::ExpDecay => (-x.abs()).exp(),
            ObservableKind::Expression(e) => e.eval(x)?,
            ObservableKind::Table(values) => {
                let i = x.round();
                if i < 0.0 || i as usize >= values.len() || (x - i).abs() > 1e-9 {
                    return Err(Error::param(
                        "observable.params",
                        format!("table observable evaluated off its index set at {x}"),
                    ));
                }
                values[i as usize]
            }
        };
        if value >= 0.0 && value.is_finite() {
            Ok(value)
        } else {
            Err(Error::InvalidObservable { x, value })
        }
    }

    /// Coercivity and `sup ξ/V` for `V = (1+|x|)^r0`. Closed forms for the
    /// catalog, numeric far-field scan for expressions.
    pub fn growth(&self, r0: f64) -> GrowthProfile {
        let mut profile = match &self.kind {
            ObservableKind::Quadratic => GrowthProfile {
                coercive: true,
                ratio_bound: power_ratio_bound(2.0, 1.0, r0),
            },
            ObservableKind::Power { q, scale } => GrowthProfile {
                coercive: *q > 0.0,
                ratio_bound: power_ratio_bound(*q, *scale, r0),
            },
            ObservableKind::Constant(c) => GrowthProfile {
                coercive: false,
                ratio_bound: Some(*c),
            },
            ObservableKind::ExpDecay => GrowthProfile {
                coercive: false,
                ratio_bound: Some(1.0),
            },
            ObservableKind::Table(values) => GrowthProfile {
                coercive: false,
                ratio_bound: Some(
                    values
                        .iter()
                        .enumerate()
                        .map(|(i, v)| v / (1.0 + i as f64).powf(r0))
                        .fold(0.0, f64::max),
                ),
            },
            ObservableKind::Expression(_) => self.scan_growth(r0),
        };
        if let Some(c) = self.ratio_bound_override {
            profile.ratio_bound = Some(c);
        }
        profile
    }

    fn scan_growth(&self, r0: f64) -> GrowthProfile {
        let weight = |x: f64| (1.0 + x.abs()).powf(r0);
        let mut bound = 0.0f64;
        let mut finite = true;
        let mut points = vec![0.0];
        for k in 0..=180 {
            let t = 10f64.powf(-3.0 + k as f64 * 0.05);
            points.push(t);
            points.push(-t);
        }
        for &x in &points {
            match self.eval(x) {
                Ok(v) => bound = bound.max(v / weight(x)),
                Err(_) => finite = false,
            }
        }
        // Far-field log-log slope on each side decides polynomial degree.
        let mut coercive = true;
        for sign in [1.0, -1.0] {
            let far = [1e4, 1e5, 1e6].map(|t| self.eval(sign * t).ok());
            match far {
                [Some(a), Some(b), Some(c)] => {
                    if c > 0.0 && b > 0.0 {
                        let slope = (c / b).ln() / 10f64.ln();
                        if slope > r0 + 1e-3 {
                            finite = false;
                        }
                    }
                    if !(c > b && b > a) {
                        coercive = false;
                    }
                }
                _ => {
                    finite = false;
                    coercive = false;
                }
            }
        }
        GrowthProfile {
            coercive,
            ratio_bound: finite.then_some(bound),
        }
    }
}

fn power_ratio_bound(q: f64, scale: f64, r0: f64) -> Option<f64> {
    if q > r0 {
        None
    } else if q == r0 || q == 0.0 {
        Some(scale)
    } else {
        let t = q / (r0 - q);
        Some(scale * t.powf(q) / (1.0 + t).powf(r0))
    }
}

/// `V^a(x) = (1+|x|)^{r0·a}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    pub r0: f64,
    pub exponent: f64,
}

impl WeightFunction {
    pub fn new(r0: f64, exponent: f64) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(Error::param("model.r0", "r0 must be positive"));
        }
        if !(0.0..=1.0).contains(&exponent) {
            return Err(Error::param("domain.weight_exponent", "exponent must lie in [0, 1]"));
        }
        Ok(WeightFunction { r0, exponent })
    }

    pub fn eval(&self, x: f64) -> f64 {
        (1.0 + x.abs()).powf(self.r0 * self.exponent)
    }

    pub fn with_exponent(&self, exponent: f64) -> Self {
        WeightFunction { r0: self.r0, exponent }
    }
}

/// ξ at every grid node.
pub fn evaluate_observable_on_grid(obs: &Observable, grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::param("grid", "grid must be nonempty"));
    }
    grid.iter().map(|&x| obs.eval(x)).collect()
}
