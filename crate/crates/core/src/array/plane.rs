use serde::{Deserialize, Serialize};

use super::PlaneGeometry;
use crate::cam::{CamEntry, CamLayer};
use crate::device::{CellCoord, CellState, StringImage};
use crate::encoding::{encode_weight, CodeSpace};
use crate::error::{Error, Result};

/// Plane sizes above this are modeled analytically only.
const MAX_MATERIALIZED_CELLS: u64 = 1 << 28;

/// Programmed state of every cell in one plane.
///
/// Layers `0..cam_layers` are the CAM segment at the top of each string;
/// the remaining layers hold weights. Cells are stored one level per byte,
/// ordered block, SSL, bitline, layer (layer fastest).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plane {
    geometry: PlaneGeometry,
    space: CodeSpace,
    cam_plan: Vec<u8>,
    levels: Vec<u8>,
}

/// First cell where two planes disagree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub coord: CellCoord,
    pub expected: u8,
    pub found: u8,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "block {} ssl {} bitline {} layer {}: expected level {}, found {}",
            self.coord.block,
            self.coord.ssl,
            self.coord.bitline,
            self.coord.layer,
            self.expected,
            self.found
        )
    }
}

impl Plane {
    /// An erased-equivalent plane: every weight slot holds the code for zero
    /// and every CAM cell holds value 0.
    pub fn new(geometry: PlaneGeometry, space: CodeSpace, cam_plan: Vec<u8>) -> Result<Self> {
        geometry.validate()?;
        space.validate()?;
        if geometry.ssls_per_gsl != space.ssls {
            return Err(Error::Geometry(format!(
                "plane has {} SSLs per GSL but the code space uses {}",
                geometry.ssls_per_gsl, space.ssls
            )));
        }
        if cam_plan.len() != geometry.cam_layers as usize {
            return Err(Error::Geometry(format!(
                "CAM plan {:?} needs {} layers, geometry reserves {}",
                cam_plan,
                cam_plan.len(),
                geometry.cam_layers
            )));
        }
        for w in &cam_plan {
            CamLayer::new(*w, 0)?;
        }
        if geometry.cell_count() > MAX_MATERIALIZED_CELLS {
            return Err(Error::Capacity(format!(
                "{} cells is too many to materialize",
                geometry.cell_count()
            )));
        }
        let mut plane = Self {
            geometry,
            space,
            cam_plan,
            levels: vec![0; geometry.cell_count() as usize],
        };
        let zero = encode_weight(0, &space)?;
        let cam = geometry.cam_layers;
        for pair in 0..geometry.block_pairs() {
            for bl in 0..geometry.page_size {
                for layer in 0..geometry.cim_layers() {
                    for ssl in 0..geometry.ssls_per_gsl {
                        let s = ssl as usize;
                        plane.set_level(2 * pair, ssl, bl, cam + layer, zero.pos[s].level());
                        plane.set_level(2 * pair + 1, ssl, bl, cam + layer, zero.neg[s].level());
                    }
                }
            }
        }
        Ok(plane)
    }

    pub fn geometry(&self) -> &PlaneGeometry {
        &self.geometry
    }

    pub fn space(&self) -> &CodeSpace {
        &self.space
    }

    pub fn cam_plan(&self) -> &[u8] {
        &self.cam_plan
    }

    pub(crate) fn raw_levels(&self) -> &[u8] {
        &self.levels
    }

    pub(crate) fn from_raw(
        geometry: PlaneGeometry,
        space: CodeSpace,
        cam_plan: Vec<u8>,
        levels: Vec<u8>,
    ) -> Result<Self> {
        let mut plane = Self::new(geometry, space, cam_plan)?;
        if levels.len() != plane.levels.len() {
            return Err(Error::Image(format!(
                "payload has {} cells, geometry needs {}",
                levels.len(),
                plane.levels.len()
            )));
        }
        plane.levels = levels;
        for (i, &l) in plane.levels.iter().enumerate() {
            let layer = (i % geometry.layers_total as usize) as u32;
            if l >= plane.states_at(layer) {
                return Err(Error::Image(format!(
                    "cell {i} holds level {l} beyond its {} states",
                    plane.states_at(layer)
                )));
            }
        }
        Ok(plane)
    }

    /// Threshold states available to cells on `layer`.
    pub fn states_at(&self, layer: u32) -> u8 {
        match self.cam_plan.get(layer as usize) {
            Some(w) => 1 << w,
            None => self.space.cell_states,
        }
    }

    #[inline]
    fn index(&self, block: u32, ssl: u32, bitline: u32, layer: u32) -> usize {
        let g = &self.geometry;
        (((block as usize * g.ssls_per_gsl as usize + ssl as usize) * g.page_size as usize
            + bitline as usize)
            * g.layers_total as usize)
            + layer as usize
    }

    #[inline]
    pub(crate) fn level(&self, block: u32, ssl: u32, bitline: u32, layer: u32) -> u8 {
        self.levels[self.index(block, ssl, bitline, layer)]
    }

    fn set_level(&mut self, block: u32, ssl: u32, bitline: u32, layer: u32, level: u8) {
        let i = self.index(block, ssl, bitline, layer);
        self.levels[i] = level;
    }

    fn check_coord(&self, c: CellCoord) -> Result<()> {
        let g = &self.geometry;
        if c.block >= g.num_blocks
            || c.ssl >= g.ssls_per_gsl
            || c.bitline >= g.page_size
            || c.layer >= g.layers_total
        {
            return Err(Error::Geometry(format!("cell {c:?} outside the plane")));
        }
        Ok(())
    }

    pub fn cell(&self, c: CellCoord) -> Result<CellState> {
        self.check_coord(c)?;
        CellState::new(
            self.level(c.block, c.ssl, c.bitline, c.layer),
            self.states_at(c.layer),
        )
    }

    /// Overwrite one cell, bypassing the weight encoder.
    pub fn set_cell(&mut self, c: CellCoord, level: u8) -> Result<()> {
        self.check_coord(c)?;
        CellState::new(level, self.states_at(c.layer))?;
        self.set_level(c.block, c.ssl, c.bitline, c.layer, level);
        Ok(())
    }

    /// Program the CAM segment of every string in both blocks of `pair`.
    pub fn set_cam_entry(&mut self, pair: u32, entry: &CamEntry) -> Result<()> {
        if entry.plan() != self.cam_plan {
            return Err(Error::contract(format!(
                "entry plan {:?} does not match the plane's CAM plan {:?}",
                entry.plan(),
                self.cam_plan
            )));
        }
        self.check_pair(pair)?;
        let g = self.geometry;
        for block in [2 * pair, 2 * pair + 1] {
            for ssl in 0..g.ssls_per_gsl {
                for bl in 0..g.page_size {
                    for (layer, l) in entry.layers.iter().enumerate() {
                        self.set_level(block, ssl, bl, layer as u32, l.value);
                    }
                }
            }
        }
        Ok(())
    }

    fn check_pair(&self, pair: u32) -> Result<()> {
        if pair >= self.geometry.block_pairs() {
            return Err(Error::Geometry(format!(
                "block pair {pair} outside the plane ({} pairs)",
                self.geometry.block_pairs()
            )));
        }
        Ok(())
    }

    /// Program weight `w` at `(pair, cim_layer, bitline)`.
    pub fn program_weight(
        &mut self,
        pair: u32,
        cim_layer: u32,
        bitline: u32,
        w: i32,
    ) -> Result<()> {
        self.check_pair(pair)?;
        if cim_layer >= self.geometry.cim_layers() || bitline >= self.geometry.page_size {
            return Err(Error::Geometry(format!(
                "weight slot (layer {cim_layer}, bitline {bitline}) outside the plane"
            )));
        }
        let code = encode_weight(w, &self.space)?;
        let layer = self.geometry.cam_layers + cim_layer;
        for ssl in 0..self.geometry.ssls_per_gsl {
            let s = ssl as usize;
            self.set_level(2 * pair, ssl, bitline, layer, code.pos[s].level());
            self.set_level(2 * pair + 1, ssl, bitline, layer, code.neg[s].level());
        }
        Ok(())
    }

    /// CAM word stored on one string.
    pub fn stored_entry(&self, block: u32, ssl: u32, bitline: u32) -> CamEntry {
        CamEntry::new(
            self.cam_plan
                .iter()
                .enumerate()
                .map(|(layer, &w)| CamLayer {
                    bit_width: w,
                    value: self.level(block, ssl, bitline, layer as u32),
                })
                .collect(),
        )
    }

    pub fn string_image(&self, block: u32, ssl: u32, bitline: u32) -> Result<StringImage> {
        self.check_coord(CellCoord {
            block,
            ssl,
            bitline,
            layer: 0,
        })?;
        let cell = |layer: u32| {
            CellState::new(
                self.level(block, ssl, bitline, layer),
                self.states_at(layer),
            )
            .expect("stored level within state count")
        };
        let cam = self.geometry.cam_layers;
        Ok(StringImage {
            cam_cells: (0..cam).map(cell).collect(),
            cim_cells: (cam..self.geometry.layers_total).map(cell).collect(),
            block,
            ssl,
            bitline,
        })
    }

    /// First cell (in storage order) where `other` differs from `self`.
    pub fn first_divergence(&self, other: &Plane) -> Result<Option<Divergence>> {
        if self.geometry != other.geometry || self.cam_plan != other.cam_plan {
            return Err(Error::Geometry("planes have different shapes".into()));
        }
        let g = &self.geometry;
        let Some(i) = self
            .levels
            .iter()
            .zip(&other.levels)
            .position(|(a, b)| a != b)
        else {
            return Ok(None);
        };
        let layers = g.layers_total as usize;
        let page = g.page_size as usize;
        let ssls = g.ssls_per_gsl as usize;
        let layer = i % layers;
        let bitline = (i / layers) % page;
        let ssl = (i / layers / page) % ssls;
        let block = i / layers / page / ssls;
        Ok(Some(Divergence {
            coord: CellCoord {
                block: block as u32,
                ssl: ssl as u32,
                bitline: bitline as u32,
                layer: layer as u32,
            },
            expected: self.levels[i],
            found: other.levels[i],
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::decode_weight;

    fn small() -> PlaneGeometry {
        PlaneGeometry {
            layers_total: 4,
            ssls_per_gsl: 4,
            num_blocks: 8,
            page_size: 4,
            cam_layers: 1,
        }
    }

    #[test]
    fn programmed_weight_decodes() {
        let space = CodeSpace::new(4, 3, 2).unwrap();
        let mut p = Plane::new(small(), space, vec![2]).unwrap();
        p.program_weight(2, 1, 3, -3).unwrap();
        let pos = p.string_image(4, 0, 3).unwrap();
        assert_eq!(pos.layer_count(), 4);
        let code = crate::encoding::WeightCode {
            pos: (0..4)
                .map(|s| p.string_image(4, s, 3).unwrap().cim_cells[1])
                .collect(),
            neg: (0..4)
                .map(|s| p.string_image(5, s, 3).unwrap().cim_cells[1])
                .collect(),
        };
        assert_eq!(decode_weight(&code).unwrap(), -3);
    }

    #[test]
    fn cam_entry_lands_on_every_string() {
        let mut p = Plane::new(small(), CodeSpace::default(), vec![2]).unwrap();
        let e = CamEntry::from_id(2, &[2]).unwrap();
        p.set_cam_entry(1, &e).unwrap();
        assert_eq!(p.stored_entry(2, 3, 1), e);
        assert_eq!(p.stored_entry(3, 0, 0), e);
        assert_eq!(p.stored_entry(0, 0, 0).id(), 0);
        assert!(p
            .set_cam_entry(1, &CamEntry::from_id(1, &[1]).unwrap())
            .is_err());
    }

    #[test]
    fn divergence_reports_coordinates() {
        let a = Plane::new(small(), CodeSpace::default(), vec![2]).unwrap();
        let mut b = a.clone();
        assert_eq!(a.first_divergence(&b).unwrap(), None);
        let c = CellCoord {
            block: 5,
            ssl: 2,
            bitline: 1,
            layer: 3,
        };
        let before = a.cell(c).unwrap().level();
        b.set_cell(c, 1 - before).unwrap();
        let d = a.first_divergence(&b).unwrap().unwrap();
        assert_eq!(d.coord, c);
        assert_eq!((d.expected, d.found), (before, 1 - before));
    }

    #[test]
    fn rejects_mismatched_shapes() {
        assert!(Plane::new(small(), CodeSpace::default(), vec![]).is_err());
        assert!(Plane::new(small(), CodeSpace::new(2, 2, 2).unwrap(), vec![2]).is_err());
        assert!(Plane::new(PlaneGeometry::default(), CodeSpace::default(), vec![]).is_err());
    }
}
