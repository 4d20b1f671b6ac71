//! Expert placement onto a plane.
//!
//! A weight row `r` of expert `e` occupies one block pair on one CIM layer
//! and spans `out_dim` consecutive bitlines. Rows fill an expert's pairs
//! first and spill to the next CIM layer of the same strings.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::array::{Plane, PlaneGeometry};
use crate::cam::{entry_plan_with, CamEntry, CamQuery};
use crate::encoding::CodeSpace;
use crate::error::{Error, Result};
use crate::workload::{Matrix, MoESpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Each expert owns its own bitline range across every block pair. No CAM.
    Contiguous,
    /// Interleave units cycle through experts, selected by CAM entries.
    Interleaved,
    /// Interleaved placement without CAM layers: experts share bitlines, so
    /// only one expert's weights can be live at a time.
    InterleavedUngated,
}

impl Strategy {
    pub fn is_gated(self) -> bool {
        self == Strategy::Interleaved
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertPlacement {
    pub expert: u32,
    /// Block pairs holding this expert's rows, in row order.
    pub pairs: Vec<u32>,
    pub bitline_offset: u32,
    pub layers_used: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertLayout {
    pub strategy: Strategy,
    /// Block pairs per interleave unit.
    pub granularity: u32,
    pub spec: MoESpec,
    pub cam_plan: Vec<u8>,
    pub experts: Vec<ExpertPlacement>,
    /// CAM word programmed on each block pair. Empty without CAM.
    pub cam_entries: BTreeMap<u32, CamEntry>,
}

/// CAM widths tried in order when fitting expert ids into the geometry's
/// CAM layers.
const PLAN_WIDTHS: [u8; 3] = [2, 3, 1];

/// CAM plan for `num_experts` ids that uses exactly `cam_layers` layers.
pub fn cam_plan_for(num_experts: u32, cam_layers: u32) -> Result<Vec<u8>> {
    let ids = num_experts.next_power_of_two();
    for w in PLAN_WIDTHS {
        let plan = entry_plan_with(ids, w)?;
        if plan.len() == cam_layers as usize {
            return Ok(plan);
        }
    }
    Err(Error::Geometry(format!(
        "{num_experts} experts cannot be identified with exactly {cam_layers} CAM layers of 1 to 3 bits"
    )))
}

pub fn place(
    spec: &MoESpec,
    geom: &PlaneGeometry,
    strategy: Strategy,
    granularity: u32,
) -> Result<ExpertLayout> {
    spec.validate()?;
    geom.validate()?;
    let pairs = geom.block_pairs();
    if granularity == 0 || !pairs.is_multiple_of(granularity) {
        return Err(Error::Geometry(format!(
            "granularity {granularity} does not divide {pairs} block pairs"
        )));
    }
    let n = spec.num_experts;
    let layers_for = |owned: u32| spec.in_dim.div_ceil(owned);
    let mut experts = Vec::with_capacity(n as usize);
    let mut cam_entries = BTreeMap::new();
    let cam_plan = match strategy {
        Strategy::Contiguous => {
            if geom.cam_layers != 0 {
                return Err(Error::Geometry(
                    "contiguous layouts carry no CAM layers".into(),
                ));
            }
            if u64::from(n) * u64::from(spec.out_dim) > u64::from(geom.page_size) {
                return Err(Error::Capacity(format!(
                    "{n} experts x {} outputs exceed {} bitlines",
                    spec.out_dim, geom.page_size
                )));
            }
            for e in 0..n {
                experts.push(ExpertPlacement {
                    expert: e,
                    pairs: (0..pairs).collect(),
                    bitline_offset: e * spec.out_dim,
                    layers_used: layers_for(pairs),
                });
            }
            Vec::new()
        }
        Strategy::Interleaved | Strategy::InterleavedUngated => {
            let plan = if strategy.is_gated() {
                cam_plan_for(n, geom.cam_layers)?
            } else if geom.cam_layers != 0 {
                return Err(Error::Geometry(
                    "ungated layouts carry no CAM layers".into(),
                ));
            } else {
                Vec::new()
            };
            let units = pairs / granularity;
            if units < n {
                return Err(Error::Capacity(format!(
                    "{units} interleave units cannot host {n} experts"
                )));
            }
            if spec.out_dim > geom.page_size {
                return Err(Error::Capacity(format!(
                    "{} outputs exceed {} bitlines",
                    spec.out_dim, geom.page_size
                )));
            }
            for e in 0..n {
                let owned: Vec<u32> = (0..units)
                    .filter(|u| u % n == e)
                    .flat_map(|u| u * granularity..(u + 1) * granularity)
                    .collect();
                if strategy.is_gated() {
                    let entry = CamEntry::from_id(e, &plan)?;
                    for &p in &owned {
                        cam_entries.insert(p, entry.clone());
                    }
                }
                experts.push(ExpertPlacement {
                    expert: e,
                    layers_used: layers_for(owned.len() as u32),
                    pairs: owned,
                    bitline_offset: 0,
                });
            }
            plan
        }
    };
    if let Some(p) = experts.iter().find(|p| p.layers_used > geom.cim_layers()) {
        return Err(Error::Capacity(format!(
            "expert {} needs {} CIM layers, the plane has {}",
            p.expert,
            p.layers_used,
            geom.cim_layers()
        )));
    }
    Ok(ExpertLayout {
        strategy,
        granularity,
        spec: *spec,
        cam_plan,
        experts,
        cam_entries,
    })
}

impl ExpertLayout {
    pub fn num_experts(&self) -> u32 {
        self.spec.num_experts
    }

    pub fn expert(&self, e: u32) -> Result<&ExpertPlacement> {
        self.experts
            .get(e as usize)
            .ok_or_else(|| Error::contract(format!("expert {e} not in layout")))
    }

    /// Physical `(pair, cim_layer)` of row `row` of expert `e`.
    pub fn row_slot(&self, e: u32, row: u32) -> Result<(u32, u32)> {
        let p = self.expert(e)?;
        if row >= self.spec.in_dim {
            return Err(Error::contract(format!(
                "row {row} beyond in_dim {}",
                self.spec.in_dim
            )));
        }
        let width = p.pairs.len() as u32;
        Ok((p.pairs[(row % width) as usize], row / width))
    }

    pub fn bitlines(&self, e: u32) -> Result<Range<u32>> {
        let p = self.expert(e)?;
        Ok(p.bitline_offset..p.bitline_offset + self.spec.out_dim)
    }

    /// Search word selecting expert `e`. Empty for layouts without CAM.
    pub fn query(&self, e: u32) -> Result<CamQuery> {
        self.expert(e)?;
        CamEntry::from_id(e, &self.cam_plan)
    }

    /// Rows of expert `e` stored on `cim_layer`, as `(row, pair)`.
    pub fn rows_on_layer(&self, e: u32, cim_layer: u32) -> Result<Vec<(u32, u32)>> {
        let p = self.expert(e)?;
        let width = p.pairs.len() as u32;
        let start = cim_layer * width;
        let end = ((cim_layer + 1) * width).min(self.spec.in_dim);
        Ok((start..end)
            .map(|r| (r, p.pairs[(r - start) as usize]))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Empty plane with this layout's CAM entries installed.
    pub fn new_plane(&self, geom: &PlaneGeometry, space: &CodeSpace) -> Result<Plane> {
        let mut plane = Plane::new(*geom, *space, self.cam_plan.clone())?;
        for (&pair, entry) in &self.cam_entries {
            plane.set_cam_entry(pair, entry)?;
        }
        Ok(plane)
    }

    /// Write expert `e`'s weights (`out_dim` x `in_dim`) into `plane`.
    pub fn program(&self, plane: &mut Plane, e: u32, w: &Matrix) -> Result<()> {
        let (rows, cols) = (self.spec.out_dim as usize, self.spec.in_dim as usize);
        if w.len() != rows || w.iter().any(|r| r.len() != cols) {
            return Err(Error::Geometry(format!(
                "expert {e} weights are not {rows} x {cols}"
            )));
        }
        let offset = self.expert(e)?.bitline_offset;
        for r in 0..cols as u32 {
            let (pair, layer) = self.row_slot(e, r)?;
            for (b, row) in w.iter().enumerate() {
                plane.program_weight(pair, layer, offset + b as u32, row[r as usize])?;
            }
        }
        Ok(())
    }

    /// Plane holding every expert's weights.
    pub fn build_plane(
        &self,
        geom: &PlaneGeometry,
        space: &CodeSpace,
        weights: &[Matrix],
    ) -> Result<Plane> {
        if weights.len() != self.spec.num_experts as usize {
            return Err(Error::Geometry(format!(
                "{} weight matrices for {} experts",
                weights.len(),
                self.spec.num_experts
            )));
        }
        let mut plane = self.new_plane(geom, space)?;
        for (e, w) in weights.iter().enumerate() {
            self.program(&mut plane, e as u32, w)?;
        }
        Ok(plane)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilizationReport {
    /// Weight information per cell bit, relative to one bit per cell.
    pub storage_utilization: f64,
    /// Expected fraction of driven computation that is discarded.
    pub redundancy_ratio: f64,
    /// Fraction of layers spent on CAM.
    pub cam_overhead: f64,
    /// Weight bits carried per cell by the signed thermometer code.
    pub encoding_density: f64,
}

/// Bits of signed weight per cell: `log2(S(m-1)+1)` over the `2S` cells of a
/// block-pair column.
pub fn encoding_density(space: &CodeSpace) -> f64 {
    f64::from(space.ssls * u32::from(space.cell_states - 1) + 1).log2() / f64::from(2 * space.ssls)
}

pub fn utilization(
    layout: &ExpertLayout,
    geom: &PlaneGeometry,
    space: &CodeSpace,
) -> UtilizationReport {
    let r = layout.spec.activated_ratio();
    let cam_overhead = f64::from(geom.cam_layers) / f64::from(geom.layers_total);
    let density = encoding_density(space);
    let fill = match layout.strategy {
        Strategy::InterleavedUngated if layout.spec.num_experts > 1 => r,
        _ => 1.0,
    };
    UtilizationReport {
        storage_utilization: (1.0 - cam_overhead) * density * fill,
        redundancy_ratio: match layout.strategy {
            Strategy::Contiguous => 1.0 - r,
            _ => 0.0,
        },
        cam_overhead,
        encoding_density: density,
    }
}
