//! `IMO1` matrix container: magic, `u32` rows and cols, row-major `f64`
//! data, then a length-prefixed block of `key=value` lines.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use imre_core::cardiac::{BodyRecording, HeartPotential};
use imre_core::forge::{ErrorClass, ErrorSpec, ForwardOperator};
use imre_core::Matrix;

use crate::wire;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"IMO1";
const WHAT: &str = "IMO1 container";

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub matrix: Matrix,
    pub meta: BTreeMap<String, String>,
}

impl MatrixFile {
    pub fn new(matrix: Matrix) -> Self {
        MatrixFile {
            matrix,
            meta: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (rows, cols) = self.matrix.shape();
        let mut out = Vec::with_capacity(16 + 8 * rows * cols);
        out.extend_from_slice(MAGIC);
        wire::put_u32(&mut out, rows, WHAT)?;
        wire::put_u32(&mut out, cols, WHAT)?;
        wire::put_f64s(&mut out, self.matrix.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()));
        let mut text = String::new();
        for (k, v) in &self.meta {
            if k.is_empty() || k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::format(WHAT, format!("unencodable metadata `{k}`")));
            }
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        wire::put_string(&mut out, &text, WHAT)?;
        Ok(out)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        wire::flush(w, &self.to_bytes()?, WHAT)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        wire::expect_magic(r, MAGIC, WHAT)?;
        let rows = wire::read_u32(r, WHAT)? as usize;
        let cols = wire::read_u32(r, WHAT)? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::format(WHAT, "shape overflows"))?;
        let data = wire::read_f64s(r, n, WHAT)?;
        let matrix = Matrix::from_row_slice(rows, cols, &data);
        let mut meta = BTreeMap::new();
        for line in wire::read_string(r, WHAT)?.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(WHAT, format!("metadata line `{line}` has no `=`")))?;
            meta.insert(k.to_string(), v.to_string());
        }
        wire::expect_end(r, WHAT)?;
        Ok(MatrixFile { matrix, meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(Error::io(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(Error::io(path))?;
        Self::read_from(&mut bytes.as_slice())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    /// Parsed value of a required key.
    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::format(WHAT, format!("missing metadata key `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::format(WHAT, format!("bad value `{raw}` for `{key}`")))
    }

    fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key).map(|_| self.require(key)).transpose()
    }
}

const SPEC_KEYS: [&str; 8] = [
    "rot_x",
    "rot_y",
    "rot_z",
    "trans_x",
    "trans_y",
    "trans_z",
    "torso_scale",
    "conductivity",
];

pub fn operator_file(op: &ForwardOperator) -> MatrixFile {
    let mut f = MatrixFile::new(op.matrix().clone()).with("id", op.id());
    if let Some(s) = op.spec() {
        let [rx, ry, rz] = s.rotation_deg();
        let [tx, ty, tz] = s.translation_mm();
        let values = [rx, ry, rz, tx, ty, tz, s.torso_scale(), s.conductivity()];
        for (k, v) in SPEC_KEYS.iter().zip(values) {
            f = f.with(k, v);
        }
        f = f.with("label", s.label());
    }
    f
}

pub fn operator_from_file(f: MatrixFile) -> Result<ForwardOperator> {
    let id = f.require("id")?;
    let spec = match f.optional::<ErrorClass>("label")? {
        None => None,
        Some(label) => {
            let v = SPEC_KEYS.map(|k| f.require::<f64>(k));
            let [rx, ry, rz, tx, ty, tz, scale, cond] = v;
            Some(ErrorSpec::new([rx?, ry?, rz?], [tx?, ty?, tz?], scale?, cond?, label)?)
        }
    };
    Ok(ForwardOperator::new(f.matrix, id, spec)?)
}

pub fn potential_file(u: &HeartPotential, pacing_node: Option<usize>) -> MatrixFile {
    let f = MatrixFile::new(u.data().clone()).with("dt", u.dt());
    match pacing_node {
        Some(n) => f.with("pacing_node", n),
        None => f,
    }
}

pub fn potential_from_file(f: MatrixFile) -> Result<(HeartPotential, Option<usize>)> {
    let dt = f.require("dt")?;
    let node = f.optional("pacing_node")?;
    Ok((HeartPotential::new(f.matrix, dt)?, node))
}

pub fn recording_file(y: &BodyRecording) -> MatrixFile {
    let f = MatrixFile::new(y.data().clone()).with("dt", y.dt());
    match y.snr_db() {
        Some(s) => f.with("snr_db", s),
        None => f,
    }
}

pub fn recording_from_file(f: MatrixFile) -> Result<BodyRecording> {
    let dt = f.require("dt")?;
    let snr = f.optional("snr_db")?;
    Ok(BodyRecording::new(f.matrix, dt, snr)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_row_major_little_endian() {
        let m = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let bytes = MatrixFile::new(m).with("dt", 0.5).to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"IMO1");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..20], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[20..28], &2.0f64.to_le_bytes());
        assert_eq!(&bytes[36..44], &4.0f64.to_le_bytes());
        assert_eq!(&bytes[60..64], &7u32.to_le_bytes());
        assert_eq!(&bytes[64..], b"dt=0.5\n");
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let good = MatrixFile::new(Matrix::zeros(2, 2)).to_bytes().unwrap();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(MatrixFile::read_from(&mut bad_magic.as_slice()).is_err());
        assert!(MatrixFile::read_from(&mut &good[..good.len() - 1]).is_err());
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(MatrixFile::read_from(&mut trailing.as_slice()).is_err());
        let mut huge = good[..4].to_vec();
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(MatrixFile::read_from(&mut huge.as_slice()).is_err());
    }

    #[test]
    fn newline_in_metadata_is_refused() {
        let f = MatrixFile::new(Matrix::zeros(1, 1)).with("note", "a\nb");
        assert!(f.to_bytes().is_err());
    }
}
