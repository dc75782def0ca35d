//! Paired operator datasets with a seeded 80-20 split.

use alloc::vec::Vec;

use super::mesh::Geometry;
use super::operator::{apply_error, mechanistic_operator, ForwardOperator};
use super::spec::{ErrorClass, ErrorSpec};
use crate::{rng, Error, Result};

pub const TRAIN_FRACTION: f64 = 0.8;

/// Draws per operator before giving up on specs that push the heart out of
/// the torso.
pub const MAX_DRAWS: usize = 256;

/// Index into [`Dataset::operators`]; index 0 is the unperturbed base.
pub type OperatorIndex = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairingPolicy {
    /// Every perturbed operator is paired with the base operator.
    Base,
    /// Every operator is paired with every other one, in both orders.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairRecord {
    pub pair_id: usize,
    pub h_i: OperatorIndex,
    pub h_f: OperatorIndex,
    pub label: ErrorClass,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub pairs: Vec<PairRecord>,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &PairRecord> {
        self.pairs.iter().filter(move |p| p.split == split)
    }
}

/// Operators plus the manifest that pairs them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub operators: Vec<ForwardOperator>,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn base(&self) -> &ForwardOperator {
        &self.operators[0]
    }

    pub fn pair(&self, record: &PairRecord) -> (&ForwardOperator, &ForwardOperator) {
        (&self.operators[record.h_i], &self.operators[record.h_f])
    }

    pub fn pairs(&self, split: Split) -> Vec<(&ForwardOperator, &ForwardOperator, ErrorClass)> {
        self.manifest
            .split(split)
            .map(|r| (&self.operators[r.h_i], &self.operators[r.h_f], r.label))
            .collect()
    }
}

/// Class of the `i`-th sampled spec under stratified assignment.
pub fn stratified_class(classes: &[ErrorClass], i: usize) -> ErrorClass {
    classes[i % classes.len()]
}

/// Number of train pairs out of `n`.
pub fn train_count(n: usize) -> usize {
    libm::round(n as f64 * TRAIN_FRACTION) as usize
}

/// Samples `count` error specs stratified over `classes`, builds their
/// operators and pairs them according to `pairing`. Specs that move the
/// heart out of the torso are redrawn.
pub fn forge_dataset(
    geometry: &Geometry,
    count: usize,
    classes: &[ErrorClass],
    seed: u64,
    pairing: PairingPolicy,
) -> Result<Dataset> {
    if classes.is_empty() {
        return Err(Error::Empty("error classes"));
    }
    if count < 2 * classes.len() {
        return Err(Error::param(
            "count",
            alloc::format!("{count} is below twice the number of classes ({})", classes.len()),
        ));
    }
    let mut operators = Vec::with_capacity(count + 1);
    operators.push(mechanistic_operator(&geometry.source, &geometry.sensor, 0.0)?);
    for i in 0..count {
        let mut r = rng::stream(seed, 1 + i as u64);
        let class = stratified_class(classes, i);
        let op = (0..MAX_DRAWS)
            .find_map(|_| match apply_error(geometry, &ErrorSpec::sample(class, &mut r)) {
                Err(Error::SurfacesIntersect(_)) => None,
                other => Some(other),
            })
            .ok_or(Error::SurfacesIntersect(alloc::format!("no admissible {class} spec in {MAX_DRAWS} draws")))??;
        operators.push(op.with_id(1 + i as u32));
    }

    let mut raw: Vec<(OperatorIndex, OperatorIndex)> = match pairing {
        PairingPolicy::Base => (1..=count).map(|f| (0, f)).collect(),
        PairingPolicy::Exhaustive => (0..=count)
            .flat_map(|i| (1..=count).filter(move |&f| f != i).map(move |f| (i, f)))
            .collect(),
    };
    raw.sort_unstable();

    let mut order: Vec<usize> = (0..raw.len()).collect();
    rng::shuffle(&mut rng::stream(seed, 0), &mut order);
    let n_train = train_count(raw.len());
    let mut split = alloc::vec![Split::Test; raw.len()];
    for &k in &order[..n_train] {
        split[k] = Split::Train;
    }

    let pairs = raw
        .into_iter()
        .enumerate()
        .map(|(pair_id, (h_i, h_f))| PairRecord {
            pair_id,
            h_i,
            h_f,
            label: operators[h_f].spec().map_or(ErrorClass::Compound, |s| s.label()),
            split: split[pair_id],
        })
        .collect();
    Ok(Dataset {
        operators,
        manifest: DatasetManifest { pairs, seed },
    })
}
