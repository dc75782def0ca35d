use alloc::vec::Vec;

use super::grid::{quantization_error, update, Neighborhood, SomGrid, UpdateRule};
use super::labels::LabelMap;
use crate::{rng, Error, Result};

/// Linear ramp from `initial` to `last` over the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub initial: f64,
    pub last: f64,
}

impl Schedule {
    pub fn new(initial: f64, last: f64) -> Self {
        Schedule { initial, last }
    }

    /// Value at `progress ∈ [0, 1]`.
    pub fn at(&self, progress: f64) -> f64 {
        self.initial + (self.last - self.initial) * progress.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SomTrainConfig {
    pub width: usize,
    pub height: usize,
    pub gamma: Schedule,
    pub radius: Schedule,
    pub kind: Neighborhood,
    pub rule: UpdateRule,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SomTrainConfig {
    fn default() -> Self {
        SomTrainConfig {
            width: 10,
            height: 10,
            gamma: Schedule::new(0.5, 0.01),
            radius: Schedule::new(5.0, 0.5),
            kind: Neighborhood::Gaussian,
            rule: UpdateRule::Standard,
            epochs: 200,
            seed: 0,
        }
    }
}

impl SomTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let g = self.gamma;
        if !(g.initial > 0.0 && g.initial <= 1.0 && g.last > 0.0 && g.last <= g.initial) {
            return Err(Error::param("gamma", "need 0 < last <= initial <= 1"));
        }
        let r = self.radius;
        if !(r.last > 0.0 && r.last <= r.initial && r.initial.is_finite()) {
            return Err(Error::param("radius", "need 0 < last <= initial"));
        }
        if self.epochs == 0 {
            return Err(Error::param("epochs", "must be at least 1"));
        }
        Ok(())
    }
}

/// Trained map, its label histograms and the quantisation error at the end
/// of every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct SomTraining {
    pub grid: SomGrid,
    pub labels: LabelMap,
    pub quantization: Vec<f64>,
}

/// Trains `grid` on labelled codes with per-sample updates in a seeded
/// shuffled order, then records which labels each node wins.
pub fn train_som(mut grid: SomGrid, latents: &[(&[f64], usize)], cfg: &SomTrainConfig) -> Result<SomTraining> {
    cfg.validate()?;
    if latents.is_empty() {
        return Err(Error::Empty("latents"));
    }
    for (z, _) in latents {
        grid.check_dim(z)?;
    }
    let codes: Vec<&[f64]> = latents.iter().map(|(z, _)| *z).collect();
    let mut r = rng::stream(cfg.seed, 1);
    let mut order: Vec<usize> = (0..latents.len()).collect();
    let total = (cfg.epochs * latents.len()).saturating_sub(1).max(1) as f64;
    let mut step = 0usize;
    let mut quantization = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        rng::shuffle(&mut r, &mut order);
        for &i in &order {
            let progress = step as f64 / total;
            update(
                &mut grid,
                codes[i],
                cfg.gamma.at(progress),
                cfg.radius.at(progress),
                cfg.kind,
                cfg.rule,
            )?;
            step += 1;
        }
        quantization.push(quantization_error(&grid, &codes)?);
    }
    let labels = LabelMap::build(&grid, latents)?;
    Ok(SomTraining {
        grid,
        labels,
        quantization,
    })
}
