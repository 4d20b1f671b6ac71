//! Largest input dimension the ADC resolves under device variation.
//!
//! A trial drives `n` pairs at worst-case magnitude (`|x| = L`, `|w|` at
//! full scale, so every cell of the positive block conducts and none of the
//! negative block does) with random signs. One conversion then sees
//! `exact = L*S*(2j - n)` for `j ~ Binomial(n, 1/2)` positive terms, plus the
//! sum of `S*n` independent cell deviations of size `L*sigma*N(0,1)`. The
//! trial fails when the ADC code lands a full LSB or more from `exact`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::AdcModel;
use crate::device::VariationModel;
use crate::encoding::CodeSpace;
use crate::error::{Error, Result};

pub const MIN_TRIALS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionSearch {
    pub space: CodeSpace,
    pub adc: AdcModel,
    pub variation: VariationModel,
    pub confidence: f64,
    pub trials: usize,
}

impl DimensionSearch {
    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        self.adc.validate()?;
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::contract(format!(
                "confidence {} must lie strictly between 0 and 1",
                self.confidence
            )));
        }
        if self.trials < MIN_TRIALS {
            return Err(Error::contract(format!(
                "{} trials is below the minimum of {MIN_TRIALS}",
                self.trials
            )));
        }
        Ok(())
    }

    /// Failing trials allowed at the requested confidence.
    fn allowed_failures(&self) -> usize {
        ((1.0 - self.confidence) * self.trials as f64 + 1e-9).floor() as usize
    }

    /// Failing trials at dimension `n`, stopping early once `limit` is
    /// exceeded. The stream depends on `(seed, n)` only, so every sigma sees
    /// the same signs and deviations.
    fn failures(&self, n: usize, limit: usize) -> usize {
        let l = f64::from(self.space.input_levels);
        let s = f64::from(self.space.ssls);
        let lsb = self.adc.lsb();
        let spread = l * self.variation.sigma * (s * n as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.variation.seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        let signs = Binomial::new(n as u64, 0.5).expect("valid binomial");
        let mut failed = 0;
        for _ in 0..self.trials {
            let j = signs.sample(&mut rng) as f64;
            let z: f64 = StandardNormal.sample(&mut rng);
            let exact = l * s * (2.0 * j - n as f64);
            let code = self.adc.quantize(exact + spread * z);
            if (code as f64 - exact / lsb).abs() >= 1.0 {
                failed += 1;
                if failed > limit {
                    break;
                }
            }
        }
        failed
    }

    /// Estimated failure probability at dimension `n`.
    pub fn error_rate(&self, n: usize) -> f64 {
        self.failures(n, usize::MAX) as f64 / self.trials as f64
    }

    pub fn run(&self) -> Result<usize> {
        self.validate()?;
        let cap = self.adc.input_capacity(&self.space);
        let allowed = self.allowed_failures();
        Ok((1..=cap)
            .rev()
            .find(|&n| self.failures(n, allowed) <= allowed)
            .unwrap_or(0))
    }
}

pub fn max_input_dimension(
    space: &CodeSpace,
    adc: &AdcModel,
    variation: &VariationModel,
    confidence: f64,
    trials: usize,
) -> Result<usize> {
    DimensionSearch {
        space: *space,
        adc: *adc,
        variation: *variation,
        confidence,
        trials,
    }
    .run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::PlaneGeometry;

    #[test]
    fn ideal_reaches_capacity() {
        let space = CodeSpace::default();
        let adc = AdcModel::for_plane(&PlaneGeometry::default(), &space);
        let n = max_input_dimension(&space, &adc, &VariationModel::ideal(), 0.99, 1000).unwrap();
        assert_eq!(n, adc.input_capacity(&space));
    }

    #[test]
    fn preconditions() {
        let space = CodeSpace::default();
        let adc = AdcModel::default();
        let v = VariationModel::ideal();
        assert!(max_input_dimension(&space, &adc, &v, 0.99, 999).is_err());
        assert!(max_input_dimension(&space, &adc, &v, 1.0, 1000).is_err());
    }
}
