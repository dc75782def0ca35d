use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::grid::{bmu, SomGrid};
use crate::{Error, Result};

/// Per-node histograms of training labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    histograms: Vec<BTreeMap<usize, usize>>,
}

impl LabelMap {
    pub fn empty(nodes: usize) -> Self {
        LabelMap {
            histograms: vec![BTreeMap::new(); nodes],
        }
    }

    /// Assigns every sample to its BMU on `g`.
    pub fn build(g: &SomGrid, latents: &[(&[f64], usize)]) -> Result<Self> {
        let mut map = Self::empty(g.len());
        for (z, label) in latents {
            map.record(bmu(g, z)?, *label, 1);
        }
        Ok(map)
    }

    pub fn record(&mut self, node: usize, label: usize, count: usize) {
        *self.histograms[node].entry(label).or_insert(0) += count;
    }

    pub fn len(&self) -> usize {
        self.histograms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histograms.is_empty()
    }

    pub fn histogram(&self, node: usize) -> &BTreeMap<usize, usize> {
        &self.histograms[node]
    }

    pub fn members(&self, node: usize) -> usize {
        self.histograms[node].values().sum()
    }

    pub fn total(&self) -> usize {
        (0..self.len()).map(|v| self.members(v)).sum()
    }

    /// Most frequent label; ties go to the smallest label.
    pub fn majority(&self, node: usize) -> Option<usize> {
        let mut best: Option<(usize, usize)> = None;
        for (&label, &count) in &self.histograms[node] {
            if count > 0 && best.is_none_or(|(_, c)| count > c) {
                best = Some((label, count));
            }
        }
        best.map(|(l, _)| l)
    }
}

/// Majority label of the nearest node that won any training sample.
pub fn classify(g: &SomGrid, lm: &LabelMap, z: &[f64]) -> Result<usize> {
    g.check_dim(z)?;
    if lm.len() != g.len() {
        return Err(Error::shape("label map", g.len(), lm.len()));
    }
    let mut order: Vec<(f64, usize)> = (0..g.len()).map(|v| (g.distance_sq(v, z), v)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order
        .into_iter()
        .find_map(|(_, v)| lm.majority(v))
        .ok_or(Error::UnlabeledMap)
}
