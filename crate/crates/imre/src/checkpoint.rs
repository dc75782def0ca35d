//! `IMP1` parameter checkpoint: magic, tensor count, then per tensor its
//! name, rank, dims and `f64` data. The generator's architecture and
//! normalisation travel as extra tensors under the `meta.` prefix.

use std::io::{Read, Write};
use std::path::Path;

use imre_core::autodiff::{ParamStore, Tensor};
use imre_core::generator::{Architecture, GeneratorModel, Normalization};

use crate::wire;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"IMP1";
const WHAT: &str = "IMP1 checkpoint";
const ARCH: &str = "meta.architecture";
const CENTER: &str = "meta.center";
const SCALE: &str = "meta.scale";

pub fn store_to_bytes(store: &ParamStore) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + 8 * store.scalar_count());
    out.extend_from_slice(MAGIC);
    wire::put_u32(&mut out, store.len(), WHAT)?;
    for (_, name, t) in store.iter() {
        wire::put_string(&mut out, name, WHAT)?;
        wire::put_u32(&mut out, t.rank(), WHAT)?;
        for &d in t.shape() {
            wire::put_u32(&mut out, d, WHAT)?;
        }
        wire::put_f64s(&mut out, t.data().iter().copied());
    }
    Ok(out)
}

pub fn read_store(r: &mut impl Read) -> Result<ParamStore> {
    wire::expect_magic(r, MAGIC, WHAT)?;
    let count = wire::read_u32(r, WHAT)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name = wire::read_string(r, WHAT)?;
        if store.find(&name).is_some() {
            return Err(Error::format(WHAT, format!("duplicate tensor `{name}`")));
        }
        let rank = wire::read_u32(r, WHAT)?;
        let shape = (0..rank)
            .map(|_| wire::read_u32(r, WHAT).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::format(WHAT, "shape overflows"))?;
        let data = wire::read_f64s(r, n, WHAT)?;
        store.add(name, Tensor::new(shape, data)?);
    }
    wire::expect_end(r, WHAT)?;
    Ok(store)
}

/// Model weights plus the `meta.` tensors.
pub fn model_to_store(model: &GeneratorModel) -> ParamStore {
    let arch = model.architecture();
    let norm = model.normalization();
    let mut store = model.params().clone();
    let mut dims = vec![arch.rows, arch.cols, arch.latent_dim];
    dims.extend(&arch.hidden);
    store.add(ARCH, Tensor::vector(dims.into_iter().map(|d| d as f64).collect()));
    store.add(CENTER, Tensor::vector(norm.center.clone()));
    store.add(SCALE, Tensor::scalar(norm.scale));
    store
}

pub fn model_from_store(store: &ParamStore) -> Result<GeneratorModel> {
    let get = |name: &str| {
        store
            .find(name)
            .map(|id| store.get(id))
            .ok_or_else(|| Error::format(WHAT, format!("missing `{name}`")))
    };
    let dims = get(ARCH)?
        .data()
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::format(WHAT, format!("architecture entry {v} is not a count")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if dims.len() < 4 {
        return Err(Error::format(WHAT, "architecture needs rows, cols, latent and a hidden layer"));
    }
    let arch = Architecture {
        rows: dims[0],
        cols: dims[1],
        latent_dim: dims[2],
        hidden: dims[3..].to_vec(),
    };
    let scale = get(SCALE)?
        .item()
        .ok_or_else(|| Error::format(WHAT, "scale must be a scalar"))?;
    let norm = Normalization {
        center: get(CENTER)?.data().to_vec(),
        scale,
    };
    let mut params = ParamStore::new();
    for (_, name, t) in store.iter().filter(|(_, n, _)| !n.starts_with("meta.")) {
        params.add(name, t.clone());
    }
    Ok(GeneratorModel::from_parts(arch, norm, params)?)
}

pub fn write_model(model: &GeneratorModel, w: &mut impl Write) -> Result<()> {
    wire::flush(w, &store_to_bytes(&model_to_store(model))?, WHAT)
}

pub fn save_model(model: &GeneratorModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, store_to_bytes(&model_to_store(model))?).map_err(Error::io(path))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GeneratorModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    model_from_store(&read_store(&mut bytes.as_slice())?)
}
