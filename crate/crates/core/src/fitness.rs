//! OneMax and the plateau function, optionally behind an instance transform.

use serde::{Deserialize, Serialize};

use crate::bitstring::Bitstring;
use crate::error::{invalid, Error, Result};
use crate::transform::InstanceTransform;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionKind {
    #[serde(rename = "onemax")]
    OneMax,
    Plateau,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    OneMax,
    /// Second-best value `n - r` on every point with more than `n - r` ones,
    /// except the all-ones optimum.
    Plateau { r: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawFitness", into = "RawFitness")]
pub struct FitnessSpec {
    family: Family,
    n: usize,
    transform: Option<InstanceTransform>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFitness {
    function: FunctionKind,
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transform: Option<InstanceTransform>,
}

impl TryFrom<RawFitness> for FitnessSpec {
    type Error = Error;
    fn try_from(raw: RawFitness) -> Result<Self> {
        let spec = match (raw.function, raw.r) {
            (FunctionKind::OneMax, None) => Self::onemax(raw.n)?,
            (FunctionKind::OneMax, Some(_)) => return invalid("onemax takes no r"),
            (FunctionKind::Plateau, Some(r)) => Self::plateau(raw.n, r)?,
            (FunctionKind::Plateau, None) => return invalid("plateau requires r"),
        };
        match raw.transform {
            Some(t) => spec.with_transform(t),
            None => Ok(spec),
        }
    }
}

impl From<FitnessSpec> for RawFitness {
    fn from(s: FitnessSpec) -> Self {
        let (function, r) = match s.family {
            Family::OneMax => (FunctionKind::OneMax, None),
            Family::Plateau { r } => (FunctionKind::Plateau, Some(r)),
        };
        Self {
            function,
            n: s.n,
            r,
            transform: s.transform,
        }
    }
}

impl FitnessSpec {
    pub fn onemax(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("n ≥ 1");
        }
        Ok(Self {
            family: Family::OneMax,
            n,
            transform: None,
        })
    }

    /// Plateau of radius `r`; requires `2 ≤ r < n`.
    pub fn plateau(n: usize, r: usize) -> Result<Self> {
        if r < 2 || r >= n {
            return invalid(format!("plateau radius must satisfy 2 ≤ r < n (r={r}, n={n})"));
        }
        Ok(Self {
            family: Family::Plateau { r },
            n,
            transform: None,
        })
    }

    pub fn with_transform(mut self, t: InstanceTransform) -> Result<Self> {
        if t.len() != self.n {
            return Err(Error::LengthMismatch {
                left: self.n,
                right: t.len(),
            });
        }
        self.transform = if t.is_identity() { None } else { Some(t) };
        Ok(self)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Plateau radius, `None` for OneMax.
    pub fn r(&self) -> Option<usize> {
        match self.family {
            Family::OneMax => None,
            Family::Plateau { r } => Some(r),
        }
    }

    pub fn transform(&self) -> Option<&InstanceTransform> {
        self.transform.as_ref()
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            Family::OneMax => "onemax",
            Family::Plateau { .. } => "plateau",
        }
    }

    /// Ones of the (transformed) input: the quantity both families depend on.
    #[inline]
    pub fn ones(&self, x: &Bitstring) -> Result<usize> {
        if x.len() != self.n {
            return Err(Error::LengthMismatch {
                left: self.n,
                right: x.len(),
            });
        }
        Ok(match &self.transform {
            None => x.count_ones(),
            Some(t) => t.apply(x)?.count_ones(),
        })
    }

    /// Fitness of a point with `k` ones after transform.
    #[inline]
    pub fn value_from_ones(&self, k: usize) -> u64 {
        debug_assert!(k <= self.n);
        match self.family {
            Family::OneMax => k as u64,
            Family::Plateau { r } => {
                if k == self.n {
                    self.n as u64
                } else if k > self.n - r {
                    (self.n - r) as u64
                } else {
                    k as u64
                }
            }
        }
    }

    pub fn evaluate(&self, x: &Bitstring) -> Result<u64> {
        Ok(self.value_from_ones(self.ones(x)?))
    }

    pub fn is_optimum(&self, x: &Bitstring) -> Result<bool> {
        Ok(self.evaluate(x)? == self.optimum_value())
    }

    pub fn optimum_value(&self) -> u64 {
        self.n as u64
    }

    /// Lowest ones count that lies on the plateau `{x : |x| ≥ n − r}`;
    /// `n` for OneMax.
    pub fn plateau_threshold(&self) -> usize {
        self.n - self.r().unwrap_or(0)
    }
}

pub fn evaluate(spec: &FitnessSpec, x: &Bitstring) -> Result<u64> {
    spec.evaluate(x)
}

pub fn is_optimum(spec: &FitnessSpec, x: &Bitstring) -> Result<bool> {
    spec.is_optimum(x)
}

pub fn optimum_value(spec: &FitnessSpec) -> u64 {
    spec.optimum_value()
}
