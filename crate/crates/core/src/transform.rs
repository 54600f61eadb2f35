use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitstring::Bitstring;
use crate::error::{invalid, Error, Result};

/// Instance transform: a position permutation followed by a bit-value exchange.
///
/// Output bit `i` is `x[permutation[i]] XOR mask[i]`. Positions are 0-based.
/// Every such map preserves Hamming distance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTransform", into = "RawTransform")]
pub struct InstanceTransform {
    mask: Bitstring,
    permutation: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransform {
    mask: Bitstring,
    permutation: Vec<usize>,
}

impl TryFrom<RawTransform> for InstanceTransform {
    type Error = Error;
    fn try_from(r: RawTransform) -> Result<Self> {
        Self::new(r.mask, r.permutation)
    }
}

impl From<InstanceTransform> for RawTransform {
    fn from(t: InstanceTransform) -> Self {
        Self {
            mask: t.mask,
            permutation: t.permutation,
        }
    }
}

impl InstanceTransform {
    pub fn new(mask: Bitstring, permutation: Vec<usize>) -> Result<Self> {
        let n = mask.len();
        if permutation.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: permutation.len(),
            });
        }
        let mut seen = vec![false; n];
        for &p in &permutation {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return invalid("permutation must be a bijection on 0..n");
            }
        }
        Ok(Self { mask, permutation })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mask: Bitstring::zeros(n),
            permutation: (0..n).collect(),
        }
    }

    /// Mask-only transform (bit-value exchange at the mask's 1-positions).
    pub fn from_mask(mask: Bitstring) -> Self {
        let n = mask.len();
        Self {
            mask,
            permutation: (0..n).collect(),
        }
    }

    /// Uniform random mask and permutation.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut permutation: Vec<usize> = (0..n).collect();
        permutation.shuffle(rng);
        Self {
            mask: Bitstring::random(n, rng),
            permutation,
        }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn mask(&self) -> &Bitstring {
        &self.mask
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn is_identity(&self) -> bool {
        self.mask.count_ones() == 0 && self.permutation.iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn apply(&self, x: &Bitstring) -> Result<Bitstring> {
        if x.len() != self.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: x.len(),
            });
        }
        let mut out = Bitstring::zeros(x.len());
        for (i, &p) in self.permutation.iter().enumerate() {
            if x.get(p) != self.mask.get(i) {
                out.set(i, true);
            }
        }
        Ok(out)
    }

    /// The transform `U` with `U(T(x)) = x` for all `x`.
    pub fn inverse(&self) -> Self {
        let n = self.len();
        let mut inv = vec![0; n];
        for (i, &p) in self.permutation.iter().enumerate() {
            inv[p] = i;
        }
        let mut mask = Bitstring::zeros(n);
        for (j, &i) in inv.iter().enumerate() {
            mask.set(j, self.mask.get(i));
        }
        Self {
            mask,
            permutation: inv,
        }
    }
}

/// Applies `t` to `x`.
pub fn apply_transform(t: &InstanceTransform, x: &Bitstring) -> Result<Bitstring> {
    t.apply(x)
}
