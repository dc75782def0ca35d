//! `ISM1` map file and the per-node cluster summary.

use std::io::{Read, Write};
use std::path::Path;

use imre_core::forge::ErrorClass;
use imre_core::som::{LabelMap, SomGrid};

use crate::wire;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"ISM1";
const WHAT: &str = "ISM1 map";

/// Layout: magic, `u32` width, height, dim, `f64` weights, `u32` triple
/// count, then `(node, class, count)` as `u32` triples.
pub fn to_bytes(grid: &SomGrid, labels: &LabelMap) -> Result<Vec<u8>> {
    if labels.len() != grid.len() {
        return Err(Error::format(WHAT, "label map does not match the grid"));
    }
    let mut out = Vec::with_capacity(20 + 8 * grid.weights().len());
    out.extend_from_slice(MAGIC);
    wire::put_u32(&mut out, grid.width(), WHAT)?;
    wire::put_u32(&mut out, grid.height(), WHAT)?;
    wire::put_u32(&mut out, grid.dim(), WHAT)?;
    wire::put_f64s(&mut out, grid.weights().iter().copied());
    let triples: Vec<(usize, usize, usize)> = (0..grid.len())
        .flat_map(|node| labels.histogram(node).iter().map(move |(&c, &n)| (node, c, n)))
        .collect();
    wire::put_u32(&mut out, triples.len(), WHAT)?;
    for (node, class, count) in triples {
        wire::put_u32(&mut out, node, WHAT)?;
        wire::put_u32(&mut out, class, WHAT)?;
        wire::put_u32(&mut out, count, WHAT)?;
    }
    Ok(out)
}

pub fn read_from(r: &mut impl Read) -> Result<(SomGrid, LabelMap)> {
    wire::expect_magic(r, MAGIC, WHAT)?;
    let width = wire::read_u32(r, WHAT)? as usize;
    let height = wire::read_u32(r, WHAT)? as usize;
    let dim = wire::read_u32(r, WHAT)? as usize;
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(dim))
        .ok_or_else(|| Error::format(WHAT, "shape overflows"))?;
    let grid = SomGrid::new(width, height, dim, wire::read_f64s(r, n, WHAT)?)?;
    let mut labels = LabelMap::empty(grid.len());
    for _ in 0..wire::read_u32(r, WHAT)? {
        let node = wire::read_u32(r, WHAT)? as usize;
        let class = wire::read_u32(r, WHAT)? as usize;
        let count = wire::read_u32(r, WHAT)? as usize;
        if node >= grid.len() {
            return Err(Error::format(WHAT, format!("node {node} outside the grid")));
        }
        labels.record(node, class, count);
    }
    wire::expect_end(r, WHAT)?;
    Ok((grid, labels))
}

pub fn write_to(grid: &SomGrid, labels: &LabelMap, w: &mut impl Write) -> Result<()> {
    wire::flush(w, &to_bytes(grid, labels)?, WHAT)
}

pub fn save(grid: &SomGrid, labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(grid, labels)?).map_err(Error::io(path))
}

pub fn load(path: impl AsRef<Path>) -> Result<(SomGrid, LabelMap)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    read_from(&mut bytes.as_slice())
}

pub fn class_name(class: usize) -> String {
    ErrorClass::from_index(class).map_or_else(|| class.to_string(), |c| c.as_str().to_string())
}

/// One row per node: `node_x, node_y, majority_label, member_count`. Empty
/// nodes get an empty label.
pub fn write_clusters(grid: &SomGrid, labels: &LabelMap, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["node_x", "node_y", "majority_label", "member_count"])?;
    for node in 0..grid.len() {
        let (x, y) = grid.position(node);
        let label = labels.majority(node).map(class_name).unwrap_or_default();
        out.write_record([x.to_string(), y.to_string(), label, labels.members(node).to_string()])?;
    }
    out.flush().map_err(|e| Error::format("cluster csv", e.to_string()))?;
    Ok(())
}
