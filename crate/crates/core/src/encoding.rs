//! Signed weight and input codes.
//!
//! A weight occupies the same bitline/layer position in a pair of blocks. Its
//! magnitude is a thermometer code across the `S` SSL cells of the positive
//! block: cells saturate to their full pulse contribution `(m-1)` in SSL order,
//! then one partial cell, then empty cells. The negative block holds the
//! complement, so the differential pulse-summed current is `2 * w` unit
//! currents. Inputs are an SL drive level plus a polarity that decides which
//! block of the pair feeds the positive accumulation.

use serde::{Deserialize, Serialize};

use crate::device::{CellState, MAX_CELL_STATES};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSpace {
    /// SSLs per GSL, i.e. cells per block that jointly encode one weight.
    pub ssls: u32,
    /// Threshold states per CIM cell.
    pub cell_states: u8,
    /// Largest SL drive level; inputs span `-L..=L`.
    pub input_levels: u32,
}

impl Default for CodeSpace {
    fn default() -> Self {
        Self {
            ssls: 4,
            cell_states: 2,
            input_levels: 2,
        }
    }
}

impl CodeSpace {
    pub fn new(ssls: u32, cell_states: u8, input_levels: u32) -> Result<Self> {
        let space = Self {
            ssls,
            cell_states,
            input_levels,
        };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ssls == 0 || self.ssls > 64 {
            return Err(Error::Unsupported(format!("{} SSLs per GSL", self.ssls)));
        }
        if !(2..=MAX_CELL_STATES).contains(&self.cell_states) {
            return Err(Error::Unsupported(format!(
                "{}-state CIM cells",
                self.cell_states
            )));
        }
        if self.input_levels == 0 {
            return Err(Error::Unsupported("zero input levels".into()));
        }
        if !self.full_scale_pulses().is_multiple_of(2) {
            return Err(Error::Unsupported(format!(
                "S*(m-1) = {} must be even for a symmetric weight range",
                self.full_scale_pulses()
            )));
        }
        Ok(())
    }

    /// Pulse-sum of a fully conducting block, `S * (m - 1)`.
    pub fn full_scale_pulses(&self) -> u32 {
        self.ssls * u32::from(self.cell_states - 1)
    }

    pub fn max_weight(&self) -> i32 {
        (self.full_scale_pulses() / 2) as i32
    }

    pub fn max_input(&self) -> i32 {
        self.input_levels as i32
    }

    pub fn weight_range(&self) -> std::ops::RangeInclusive<i32> {
        -self.max_weight()..=self.max_weight()
    }

    pub fn input_range(&self) -> std::ops::RangeInclusive<i32> {
        -self.max_input()..=self.max_input()
    }

    pub fn pulses(&self) -> u8 {
        self.cell_states - 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightCode {
    pub pos: Vec<CellState>,
    pub neg: Vec<CellState>,
}

fn pulse_sum(block: &[CellState]) -> u32 {
    block.iter().map(|c| c.pulse_sum()).sum()
}

fn fill_block(target: u32, space: &CodeSpace) -> Vec<CellState> {
    let full = u32::from(space.cell_states - 1);
    (0..space.ssls)
        .map(|i| {
            let contribution = target.saturating_sub(i * full).min(full);
            CellState::new((full - contribution) as u8, space.cell_states)
                .expect("level below state count")
        })
        .collect()
}

impl WeightCode {
    pub fn pos_pulse_sum(&self) -> u32 {
        pulse_sum(&self.pos)
    }

    pub fn neg_pulse_sum(&self) -> u32 {
        pulse_sum(&self.neg)
    }

    pub fn ssls(&self) -> usize {
        self.pos.len()
    }
}

pub fn encode_weight(w: i32, space: &CodeSpace) -> Result<WeightCode> {
    let max = space.max_weight();
    if !space.weight_range().contains(&w) {
        return Err(Error::Range {
            what: "weight",
            value: w.into(),
            min: (-max).into(),
            max: max.into(),
        });
    }
    let pos_target = (w + max) as u32;
    Ok(WeightCode {
        pos: fill_block(pos_target, space),
        neg: fill_block(space.full_scale_pulses() - pos_target, space),
    })
}

pub fn decode_weight(code: &WeightCode) -> Result<i32> {
    let s = code.pos.len();
    if s == 0 || code.neg.len() != s {
        return Err(Error::CorruptCode(format!(
            "block sizes differ: {} positive vs {} negative cells",
            s,
            code.neg.len()
        )));
    }
    let states = code.pos[0].states();
    if code
        .pos
        .iter()
        .chain(&code.neg)
        .any(|c| c.states() != states)
    {
        return Err(Error::CorruptCode("mixed cell state counts".into()));
    }
    let full = s as u32 * u32::from(states - 1);
    let (p, n) = (code.pos_pulse_sum(), code.neg_pulse_sum());
    if p + n != full || !full.is_multiple_of(2) {
        return Err(Error::CorruptCode(format!(
            "pulse sums {p} + {n} are not complementary (expected total {full})"
        )));
    }
    Ok(p as i32 - (full / 2) as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> i32 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputDrive {
    pub magnitude: u32,
    pub polarity: Polarity,
}

impl InputDrive {
    pub const ZERO: InputDrive = InputDrive {
        magnitude: 0,
        polarity: Polarity::Positive,
    };

    pub fn value(self) -> i32 {
        self.magnitude as i32 * self.polarity.sign()
    }
}

pub fn encode_input(x: i32, space: &CodeSpace) -> Result<InputDrive> {
    if !space.input_range().contains(&x) {
        return Err(Error::Range {
            what: "input",
            value: x.into(),
            min: (-space.max_input()).into(),
            max: space.max_input().into(),
        });
    }
    Ok(InputDrive {
        magnitude: x.unsigned_abs(),
        polarity: if x < 0 {
            Polarity::Negative
        } else {
            Polarity::Positive
        },
    })
}

/// Ideal product realized by one dual-block pair: the differential
/// pulse-summed current, normalized by the pair's factor of two.
pub fn signed_product_model(x: i32, w: i32, space: &CodeSpace) -> Result<i32> {
    let drive = encode_input(x, space)?;
    encode_weight(w, space)?;
    Ok(drive.value() * w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(s: u32, m: u8) -> CodeSpace {
        CodeSpace::new(s, m, 2).unwrap()
    }

    fn levels(block: &[CellState]) -> Vec<u8> {
        block.iter().map(|c| c.level()).collect()
    }

    #[test]
    fn zero_is_balanced() {
        let c = encode_weight(0, &space(4, 2)).unwrap();
        assert_eq!((c.pos_pulse_sum(), c.neg_pulse_sum()), (2, 2));
        assert_eq!(levels(&c.pos), vec![0, 0, 1, 1]);
    }

    #[test]
    fn slc_positive_endpoint() {
        let c = encode_weight(2, &space(4, 2)).unwrap();
        assert_eq!(levels(&c.pos), vec![0, 0, 0, 0]);
        assert_eq!(levels(&c.neg), vec![1, 1, 1, 1]);
        assert_eq!((c.pos_pulse_sum(), c.neg_pulse_sum()), (4, 0));
    }

    #[test]
    fn three_state_negative_endpoint() {
        let c = encode_weight(-4, &space(4, 3)).unwrap();
        assert_eq!(levels(&c.pos), vec![2, 2, 2, 2]);
        assert_eq!(c.neg_pulse_sum(), 8);
    }

    #[test]
    fn partial_cell_thermometer() {
        let c = encode_weight(1, &space(4, 3)).unwrap();
        assert_eq!(levels(&c.pos), vec![0, 0, 1, 2]);
        assert_eq!(levels(&c.neg), vec![0, 1, 2, 2]);
    }

    #[test]
    fn range_errors() {
        assert!(matches!(
            encode_weight(3, &space(4, 2)),
            Err(Error::Range {
                min: -2,
                max: 2,
                ..
            })
        ));
        assert!(encode_input(3, &space(4, 2)).is_err());
        assert!(CodeSpace::new(3, 2, 2).is_err());
    }

    #[test]
    fn decode_examples() {
        assert_eq!(
            decode_weight(&encode_weight(1, &space(4, 2)).unwrap()).unwrap(),
            1
        );
        let s = space(4, 3);
        let code = WeightCode {
            pos: [0, 0, 0, 2]
                .iter()
                .map(|l| CellState::new(*l, 3).unwrap())
                .collect(),
            neg: [2, 2, 2, 0]
                .iter()
                .map(|l| CellState::new(*l, 3).unwrap())
                .collect(),
        };
        assert_eq!(code.pos_pulse_sum(), 6);
        assert_eq!(decode_weight(&code).unwrap(), 2);
        let mut bad = encode_weight(0, &s).unwrap();
        bad.neg[3] = CellState::new(0, 3).unwrap();
        assert!(matches!(decode_weight(&bad), Err(Error::CorruptCode(_))));
    }

    #[test]
    fn input_codes() {
        let s = space(4, 2);
        assert_eq!(encode_input(0, &s).unwrap(), InputDrive::ZERO);
        assert_eq!(
            encode_input(-2, &s).unwrap(),
            InputDrive {
                magnitude: 2,
                polarity: Polarity::Negative
            }
        );
        for x in s.input_range() {
            assert_eq!(encode_input(x, &s).unwrap().value(), x);
        }
    }

    #[test]
    fn range_law() {
        assert_eq!(space(4, 2).weight_range(), -2..=2);
        assert_eq!(space(4, 3).weight_range(), -4..=4);
        for s in [2, 4, 8] {
            for m in 2..=4u8 {
                assert_eq!(space(s, m).max_weight() as u32, s * (m as u32 - 1) / 2);
            }
        }
    }

    // Brute-force: pulse by pulse, count conducting cells in each block, weight
    // by the drive, swap blocks on negative polarity, halve the difference.
    fn enumerate_product(x: i32, w: i32, s: &CodeSpace) -> i32 {
        let code = encode_weight(w, s).unwrap();
        let drive = encode_input(x, s).unwrap();
        let mut total = 0i32;
        for pulse in 0..s.pulses() {
            let on = |b: &[CellState]| b.iter().filter(|c| c.level() <= pulse).count() as i32;
            let diff = drive.magnitude as i32 * (on(&code.pos) - on(&code.neg));
            total += drive.polarity.sign() * diff;
        }
        assert_eq!(total % 2, 0);
        total / 2
    }

    #[test]
    fn product_model_matches_enumeration() {
        assert_eq!(signed_product_model(0, 2, &space(4, 2)).unwrap(), 0);
        assert_eq!(enumerate_product(-1, -2, &space(4, 2)), 2);
        assert_eq!(signed_product_model(-1, -2, &space(4, 2)).unwrap(), 2);
        for (ss, m) in [(4, 2), (4, 3), (4, 4), (2, 3), (8, 2)] {
            let s = space(ss, m);
            for x in s.input_range() {
                for w in s.weight_range() {
                    assert_eq!(enumerate_product(x, w, &s), x * w, "x={x} w={w}");
                    assert_eq!(signed_product_model(x, w, &s).unwrap(), x * w);
                }
            }
        }
    }

    #[test]
    fn three_state_grid_has_distinct_linear_steps() {
        let s = space(4, 3);
        for x in s.input_range().filter(|x| *x != 0) {
            let row: Vec<i32> = s
                .weight_range()
                .map(|w| enumerate_product(x, w, &s))
                .collect();
            assert!(row.windows(2).all(|p| (p[1] - p[0]) == x));
        }
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn spaces() -> impl Strategy<Value = CodeSpace> {
        (prop::sample::select(vec![2u32, 4, 8]), 2u8..=4)
            .prop_map(|(s, m)| CodeSpace::new(s, m, 2).unwrap())
    }

    proptest! {
        #[test]
        fn roundtrip_and_complement(space in spaces(), seed in any::<u32>()) {
            let span = 2 * space.max_weight() + 1;
            let w = (seed % span as u32) as i32 - space.max_weight();
            let code = encode_weight(w, &space).unwrap();
            prop_assert_eq!(code.pos_pulse_sum() + code.neg_pulse_sum(), space.full_scale_pulses());
            prop_assert_eq!(decode_weight(&code).unwrap(), w);
        }

        #[test]
        fn thermometer_steps_by_one(space in spaces(), seed in any::<u32>()) {
            let span = 2 * space.max_weight();
            let w = (seed % span as u32) as i32 - space.max_weight();
            let a = encode_weight(w, &space).unwrap();
            let b = encode_weight(w + 1, &space).unwrap();
            prop_assert_eq!(b.pos_pulse_sum(), a.pos_pulse_sum() + 1);
            prop_assert_eq!(b.neg_pulse_sum() + 1, a.neg_pulse_sum());
            let changed = a.pos.iter().zip(&b.pos).filter(|(x, y)| x != y).count();
            prop_assert_eq!(changed, 1);
        }
    }
}
