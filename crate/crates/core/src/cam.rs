//! In-string content-addressable matching.
//!
//! Each CAM layer is one multi-level cell holding a `1..=3` bit value. A string
//! conducts only if every CAM layer matches the broadcast query, so a
//! multi-layer entry matches iff all its per-layer comparisons do.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_CAM_BITS: u8 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CamLayer {
    pub bit_width: u8,
    pub value: u8,
}

impl CamLayer {
    pub fn new(bit_width: u8, value: u8) -> Result<Self> {
        if !(1..=MAX_CAM_BITS).contains(&bit_width) {
            return Err(Error::Unsupported(format!(
                "{bit_width}-bit CAM layer (supported: 1..={MAX_CAM_BITS})"
            )));
        }
        if u32::from(value) >= 1u32 << bit_width {
            return Err(Error::Range {
                what: "CAM value",
                value: value.into(),
                min: 0,
                max: (1i64 << bit_width) - 1,
            });
        }
        Ok(Self { bit_width, value })
    }

    /// Threshold states needed to store this layer in one cell.
    pub fn cell_states(self) -> u8 {
        1 << self.bit_width
    }
}

/// Stored identifier of one expert (or interleave unit owner).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CamEntry {
    pub layers: Vec<CamLayer>,
}

/// Search word broadcast to all strings; same shape as an entry.
pub type CamQuery = CamEntry;

impl CamEntry {
    pub fn new(layers: Vec<CamLayer>) -> Self {
        Self { layers }
    }

    /// Encode `id` over `plan`, most significant bits in the first layer.
    pub fn from_id(id: u32, plan: &[u8]) -> Result<Self> {
        let total: u32 = plan.iter().map(|w| u32::from(*w)).sum();
        if total < 32 && id >= 1u32 << total {
            return Err(Error::Range {
                what: "entry id",
                value: id.into(),
                min: 0,
                max: (1i64 << total) - 1,
            });
        }
        let mut shift = total;
        let layers = plan
            .iter()
            .map(|&w| {
                shift -= u32::from(w);
                CamLayer::new(w, ((id >> shift) & ((1 << w) - 1)) as u8)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    pub fn plan(&self) -> Vec<u8> {
        self.layers.iter().map(|l| l.bit_width).collect()
    }

    pub fn total_bits(&self) -> u32 {
        self.layers.iter().map(|l| u32::from(l.bit_width)).sum()
    }

    pub fn id(&self) -> u32 {
        self.layers
            .iter()
            .fold(0, |acc, l| (acc << l.bit_width) | u32::from(l.value))
    }

    /// Flattened bit string, MSB first.
    pub fn bits(&self) -> String {
        self.layers
            .iter()
            .map(|l| format!("{:0width$b}", l.value, width = l.bit_width as usize))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchResult {
    Mismatch = 0,
    Match = 1,
}

impl MatchResult {
    pub fn m(self) -> u8 {
        self as u8
    }

    pub fn is_match(self) -> bool {
        self == MatchResult::Match
    }
}

impl From<bool> for MatchResult {
    fn from(b: bool) -> Self {
        if b {
            MatchResult::Match
        } else {
            MatchResult::Mismatch
        }
    }
}

pub fn cam_match_layer(entry_value: u8, query_value: u8, bit_width: u8) -> Result<MatchResult> {
    CamLayer::new(bit_width, entry_value)?;
    CamLayer::new(bit_width, query_value)?;
    Ok((entry_value == query_value).into())
}

pub fn cam_match(entry: &CamEntry, query: &CamQuery) -> Result<MatchResult> {
    if entry.plan() != query.plan() {
        return Err(Error::contract(format!(
            "CAM shape mismatch: entry {:?} vs query {:?}",
            entry.plan(),
            query.plan()
        )));
    }
    let mut all = true;
    for (e, q) in entry.layers.iter().zip(&query.layers) {
        all &= cam_match_layer(e.value, q.value, e.bit_width)?.is_match();
    }
    Ok(all.into())
}

/// Minimal-layer CAM plan for `num_ids` identifiers using at most
/// `max_width` bits per layer. The narrow remainder layer goes first.
pub fn entry_plan_with(num_ids: u32, max_width: u8) -> Result<Vec<u8>> {
    if num_ids == 0 || !num_ids.is_power_of_two() {
        return Err(Error::Unsupported(format!(
            "{num_ids} experts per unit: CAM planning needs a power of two"
        )));
    }
    if !(1..=MAX_CAM_BITS).contains(&max_width) {
        return Err(Error::Unsupported(format!("{max_width}-bit CAM cells")));
    }
    let bits = num_ids.trailing_zeros() as u8;
    let full = bits / max_width;
    let rem = bits % max_width;
    let mut plan = Vec::with_capacity(full as usize + 1);
    if rem > 0 {
        plan.push(rem);
    }
    plan.extend(std::iter::repeat_n(max_width, full as usize));
    Ok(plan)
}

/// Default plan: MLC (2-bit) layers first, one SLC layer for an odd bit.
pub fn entry_plan(num_ids: u32) -> Result<Vec<u8>> {
    entry_plan_with(num_ids, 2)
}

/// Every `(entry, query, match)` row for `plan`, entries outermost.
pub fn truth_table(plan: &[u8]) -> Result<Vec<(CamEntry, CamQuery, MatchResult)>> {
    let total: u32 = plan.iter().map(|w| u32::from(*w)).sum();
    if total > 12 {
        return Err(Error::Unsupported(format!(
            "truth table over {total} bits is too large"
        )));
    }
    let n = 1u32 << total;
    let mut rows = Vec::with_capacity((n * n) as usize);
    for e in 0..n {
        let entry = CamEntry::from_id(e, plan)?;
        for q in 0..n {
            let query = CamEntry::from_id(q, plan)?;
            let m = cam_match(&entry, &query)?;
            rows.push((entry.clone(), query, m));
        }
    }
    Ok(rows)
}
