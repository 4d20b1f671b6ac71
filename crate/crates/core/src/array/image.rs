//! Binary plane images.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 8     | magic `NASICIMG` |
//! | 2     | version (1) |
//! | 4 x 5 | layers_total, ssls_per_gsl, num_blocks, page_size, cam_layers |
//! | 1     | CIM cell states |
//! | 4     | input levels |
//! | 1 + n | CAM plan length `n`, then one width byte per CAM layer |
//! | rest  | cell levels, `b` bits each, LSB-first within each byte |
//!
//! `b = ceil(log2(max states))` over the CIM and CAM cells. Cells are
//! ordered block, SSL, bitline, layer with the layer index varying fastest.

use std::io::{Read, Write};

use super::{Plane, PlaneGeometry};
use crate::encoding::CodeSpace;
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: &[u8; 8] = b"NASICIMG";
pub const IMAGE_VERSION: u16 = 1;

fn bits_per_cell(cell_states: u8, cam_plan: &[u8]) -> u32 {
    let max = cam_plan
        .iter()
        .map(|w| 1u32 << w)
        .chain([u32::from(cell_states)])
        .max()
        .unwrap_or(2);
    (max - 1).ilog2() + 1
}

pub fn write_image<W: Write>(plane: &Plane, mut out: W) -> Result<()> {
    let g = plane.geometry();
    let space = plane.space();
    out.write_all(IMAGE_MAGIC)?;
    out.write_all(&IMAGE_VERSION.to_le_bytes())?;
    for v in [
        g.layers_total,
        g.ssls_per_gsl,
        g.num_blocks,
        g.page_size,
        g.cam_layers,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&[space.cell_states])?;
    out.write_all(&space.input_levels.to_le_bytes())?;
    out.write_all(&[plane.cam_plan().len() as u8])?;
    out.write_all(plane.cam_plan())?;
    let bits = bits_per_cell(space.cell_states, plane.cam_plan());
    let levels = plane.raw_levels();
    let mut packed = vec![0u8; (levels.len() * bits as usize).div_ceil(8)];
    for (i, &l) in levels.iter().enumerate() {
        let pos = i * bits as usize;
        for b in 0..bits as usize {
            if l >> b & 1 == 1 {
                packed[(pos + b) / 8] |= 1 << ((pos + b) % 8);
            }
        }
    }
    out.write_all(&packed)?;
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Image(format!("truncated header: {e}")))?;
    Ok(buf)
}

pub fn read_image<R: Read>(mut input: R) -> Result<Plane> {
    if &take::<8>(&mut input)? != IMAGE_MAGIC {
        return Err(Error::Image("bad magic".into()));
    }
    let version = u16::from_le_bytes(take(&mut input)?);
    if version != IMAGE_VERSION {
        return Err(Error::Image(format!("unsupported version {version}")));
    }
    let mut dims = [0u32; 5];
    for d in &mut dims {
        *d = u32::from_le_bytes(take(&mut input)?);
    }
    let geometry = PlaneGeometry {
        layers_total: dims[0],
        ssls_per_gsl: dims[1],
        num_blocks: dims[2],
        page_size: dims[3],
        cam_layers: dims[4],
    };
    let [cell_states] = take::<1>(&mut input)?;
    let input_levels = u32::from_le_bytes(take(&mut input)?);
    let space = CodeSpace::new(geometry.ssls_per_gsl, cell_states, input_levels)?;
    let [n] = take::<1>(&mut input)?;
    let mut cam_plan = vec![0u8; n as usize];
    input
        .read_exact(&mut cam_plan)
        .map_err(|e| Error::Image(format!("truncated CAM plan: {e}")))?;
    geometry.validate()?;
    let cells = geometry.cell_count() as usize;
    let bits = bits_per_cell(cell_states, &cam_plan) as usize;
    let mut packed = Vec::new();
    input.read_to_end(&mut packed)?;
    if packed.len() != (cells * bits).div_ceil(8) {
        return Err(Error::Image(format!(
            "payload is {} bytes, expected {}",
            packed.len(),
            (cells * bits).div_ceil(8)
        )));
    }
    let levels = (0..cells)
        .map(|i| {
            (0..bits).fold(0u8, |acc, b| {
                let p = i * bits + b;
                acc | ((packed[p / 8] >> (p % 8)) & 1) << b
            })
        })
        .collect();
    Plane::from_raw(geometry, space, cam_plan, levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cam::CamEntry;

    #[test]
    fn roundtrip() {
        let g = PlaneGeometry {
            layers_total: 3,
            ssls_per_gsl: 2,
            num_blocks: 4,
            page_size: 3,
            cam_layers: 1,
        };
        let space = CodeSpace::new(2, 3, 2).unwrap();
        let mut p = Plane::new(g, space, vec![2]).unwrap();
        p.set_cam_entry(1, &CamEntry::from_id(3, &[2]).unwrap())
            .unwrap();
        p.program_weight(1, 1, 2, -2).unwrap();
        let mut buf = Vec::new();
        write_image(&p, &mut buf).unwrap();
        assert_eq!(&buf[..8], IMAGE_MAGIC);
        assert_eq!(read_image(buf.as_slice()).unwrap(), p);
        buf.pop();
        assert!(read_image(buf.as_slice()).is_err());
        assert!(read_image(&b"NASICIMX"[..]).is_err());
    }

    #[test]
    fn packing_width() {
        assert_eq!(bits_per_cell(2, &[]), 1);
        assert_eq!(bits_per_cell(3, &[1]), 2);
        assert_eq!(bits_per_cell(2, &[3]), 3);
        assert_eq!(bits_per_cell(16, &[]), 4);
    }
}
