//! Little-endian primitives shared by the binary formats.

use std::io::{Read, Write};

use crate::{Error, Result};

pub(crate) fn expect_magic(r: &mut impl Read, magic: &[u8; 4], what: &'static str) -> Result<()> {
    let mut got = [0u8; 4];
    read_exact(r, &mut got, what)?;
    if &got != magic {
        return Err(Error::format(what, format!("bad magic {got:?}")));
    }
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &'static str) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::format(what, format!("truncated: {e}")))
}

pub(crate) fn read_u32(r: &mut impl Read, what: &'static str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads `n` bytes without trusting `n` for the allocation size.
pub(crate) fn read_bytes(r: &mut impl Read, n: usize, what: &'static str) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(n as u64)
        .read_to_end(&mut buf)
        .map_err(|e| Error::format(what, e.to_string()))?;
    if buf.len() != n {
        return Err(Error::format(what, format!("truncated: wanted {n} bytes, got {}", buf.len())));
    }
    Ok(buf)
}

pub(crate) fn read_f64s(r: &mut impl Read, n: usize, what: &'static str) -> Result<Vec<f64>> {
    let bytes = n
        .checked_mul(8)
        .ok_or_else(|| Error::format(what, "length overflows"))?;
    Ok(read_bytes(r, bytes, what)?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of eight")))
        .collect())
}

pub(crate) fn read_string(r: &mut impl Read, what: &'static str) -> Result<String> {
    let n = read_u32(r, what)? as usize;
    String::from_utf8(read_bytes(r, n, what)?).map_err(|e| Error::format(what, e.to_string()))
}

pub(crate) fn expect_end(r: &mut impl Read, what: &'static str) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => Ok(()),
        Ok(_) => Err(Error::format(what, "trailing bytes")),
        Err(e) => Err(Error::format(what, e.to_string())),
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: usize, what: &'static str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::format(what, format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub(crate) fn put_f64s(out: &mut Vec<u8>, vs: impl IntoIterator<Item = f64>) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn put_string(out: &mut Vec<u8>, s: &str, what: &'static str) -> Result<()> {
    put_u32(out, s.len(), what)?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

pub(crate) fn flush(w: &mut impl Write, bytes: &[u8], what: &'static str) -> Result<()> {
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::format(what, format!("write failed: {e}")))
}
