//! Flat `key = value` experiment configuration.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use imre_core::cardiac::APParams;
use imre_core::forge::{ErrorClass, GeometryConfig, PairingPolicy};
use imre_core::generator::GeneratorConfig;
use imre_core::inverse::{Convergence, DfoConfig};
use imre_core::som::{Neighborhood, Schedule, SomTrainConfig, UpdateRule};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub operators: usize,
    pub source_nodes: usize,
    pub sensor_nodes: usize,
    pub classes: Vec<ErrorClass>,
    pub pairing: PairingPolicy,
    pub geometry: GeometryConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            operators: 120,
            source_nodes: 64,
            sensor_nodes: 96,
            classes: vec![
                ErrorClass::RotX,
                ErrorClass::RotZ,
                ErrorClass::TransX,
                ErrorClass::TransY,
                ErrorClass::TransZ,
                ErrorClass::Scale,
            ],
            pairing: PairingPolicy::Base,
            geometry: GeometryConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Held-out pairs turned into inverse cases, in manifest order.
    pub pairs: usize,
    /// Pacing sites per pair.
    pub sites: usize,
    pub snr_db: f64,
    pub ap: APParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            pairs: 8,
            sites: 3,
            snr_db: 35.0,
            ap: APParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    /// Corner of the L-curve of the prior operator, per case.
    LCurve,
    Fixed(f64),
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lambda::LCurve => f.write_str("lcurve"),
            Lambda::Fixed(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvConfig {
    pub lambda: Lambda,
    /// Half-width of the latent search box.
    pub bound: f64,
    pub budget: usize,
    pub rho_begin: f64,
    pub rho_end: f64,
    pub convergence: Convergence,
}

impl Default for InvConfig {
    fn default() -> Self {
        let d = DfoConfig::cube(1, 3.0);
        InvConfig {
            lambda: Lambda::LCurve,
            bound: 3.0,
            budget: d.budget,
            rho_begin: d.rho_begin,
            rho_end: d.rho_end,
            convergence: Convergence::default(),
        }
    }
}

impl InvConfig {
    pub fn dfo(&self, dim: usize) -> DfoConfig {
        DfoConfig {
            budget: self.budget,
            rho_begin: self.rho_begin,
            rho_end: self.rho_end,
            ..DfoConfig::cube(dim, self.bound)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub forge: bool,
    pub train_gen: bool,
    pub train_som: bool,
    pub simulate: bool,
    pub invert: bool,
    pub evaluate: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages {
            forge: true,
            train_gen: true,
            train_som: true,
            simulate: true,
            invert: true,
            evaluate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Master seed; every stage derives its streams from it.
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataConfig,
    pub gen: GeneratorConfig,
    pub som: SomTrainConfig,
    pub sim: SimConfig,
    pub inv: InvConfig,
    pub stages: Stages,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            out: PathBuf::from("imre-out"),
            data: DataConfig::default(),
            gen: GeneratorConfig {
                learning_rate: 3e-3,
                ..GeneratorConfig::default()
            },
            som: SomTrainConfig::default(),
            sim: SimConfig::default(),
            inv: InvConfig::default(),
            stages: Stages::default(),
        }
    }
}

fn parse<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|s| parse(s.trim())).collect()
}

fn parse_axes(v: &str) -> std::result::Result<[f64; 3], String> {
    parse_list(v)?
        .try_into()
        .map_err(|_| format!("expected three comma-separated axes, got `{v}`"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Every recognised key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let d = &self.data;
        let g = &self.gen;
        let s = &self.som;
        let sim = &self.sim;
        let ap = &sim.ap;
        let inv = &self.inv;
        let st = &self.stages;
        vec![
            ("seed", self.seed.to_string()),
            ("out", self.out.display().to_string()),
            ("data.operators", d.operators.to_string()),
            ("data.source_nodes", d.source_nodes.to_string()),
            ("data.sensor_nodes", d.sensor_nodes.to_string()),
            ("data.classes", join(&d.classes)),
            (
                "data.pairing",
                match d.pairing {
                    PairingPolicy::Base => "base",
                    PairingPolicy::Exhaustive => "exhaustive",
                }
                .into(),
            ),
            ("data.source_axes", join(&d.geometry.source_axes)),
            ("data.sensor_axes", join(&d.geometry.sensor_axes)),
            ("gen.epochs", g.epochs.to_string()),
            ("gen.batch_size", g.batch_size.to_string()),
            ("gen.latent_dim", g.latent_dim.to_string()),
            ("gen.beta", g.beta.to_string()),
            ("gen.lambda_reg", g.lambda_reg.to_string()),
            ("gen.hidden", join(&g.hidden)),
            ("gen.learning_rate", g.learning_rate.to_string()),
            ("som.width", s.width.to_string()),
            ("som.height", s.height.to_string()),
            ("som.epochs", s.epochs.to_string()),
            ("som.gamma_initial", s.gamma.initial.to_string()),
            ("som.gamma_final", s.gamma.last.to_string()),
            ("som.radius_initial", s.radius.initial.to_string()),
            ("som.radius_final", s.radius.last.to_string()),
            (
                "som.neighborhood",
                match s.kind {
                    Neighborhood::Gaussian => "gaussian",
                    Neighborhood::Triangular => "triangular",
                }
                .into(),
            ),
            (
                "som.rule",
                match s.rule {
                    UpdateRule::Standard => "standard",
                    UpdateRule::BmuDifference => "bmu_difference",
                }
                .into(),
            ),
            ("sim.pairs", sim.pairs.to_string()),
            ("sim.sites", sim.sites.to_string()),
            ("sim.snr_db", sim.snr_db.to_string()),
            ("sim.diffusion", ap.diffusion.to_string()),
            ("sim.dt", ap.dt.to_string()),
            ("sim.steps", ap.steps.to_string()),
            ("sim.record_every", ap.record_every.to_string()),
            ("sim.stimulus_amplitude", ap.stimulus_amplitude.to_string()),
            ("sim.stimulus_duration", ap.stimulus_duration.to_string()),
            ("inv.lambda", inv.lambda.to_string()),
            ("inv.bound", inv.bound.to_string()),
            ("inv.budget", inv.budget.to_string()),
            ("inv.rho_begin", inv.rho_begin.to_string()),
            ("inv.rho_end", inv.rho_end.to_string()),
            ("inv.max_outer", inv.convergence.max_outer.to_string()),
            ("inv.tol_u", inv.convergence.tol_u.to_string()),
            ("inv.tol_h", inv.convergence.tol_h.to_string()),
            ("stages.forge", st.forge.to_string()),
            ("stages.train_gen", st.train_gen.to_string()),
            ("stages.train_som", st.train_som.to_string()),
            ("stages.simulate", st.simulate.to_string()),
            ("stages.invert", st.invert.to_string()),
            ("stages.evaluate", st.evaluate.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let d = &mut self.data;
        let g = &mut self.gen;
        let s = &mut self.som;
        let ap = &mut self.sim.ap;
        let inv = &mut self.inv;
        let st = &mut self.stages;
        match key {
            "seed" => self.seed = parse(v)?,
            "out" => self.out = PathBuf::from(v),
            "data.operators" => d.operators = parse(v)?,
            "data.source_nodes" => d.source_nodes = parse(v)?,
            "data.sensor_nodes" => d.sensor_nodes = parse(v)?,
            "data.classes" => d.classes = parse_list(v)?,
            "data.pairing" => {
                d.pairing = match v {
                    "base" => PairingPolicy::Base,
                    "exhaustive" => PairingPolicy::Exhaustive,
                    _ => return Err(format!("unknown pairing `{v}`")),
                }
            }
            "data.source_axes" => d.geometry.source_axes = parse_axes(v)?,
            "data.sensor_axes" => d.geometry.sensor_axes = parse_axes(v)?,
            "gen.epochs" => g.epochs = parse(v)?,
            "gen.batch_size" => g.batch_size = parse(v)?,
            "gen.latent_dim" => g.latent_dim = parse(v)?,
            "gen.beta" => g.beta = parse(v)?,
            "gen.lambda_reg" => g.lambda_reg = parse(v)?,
            "gen.hidden" => g.hidden = parse_list(v)?,
            "gen.learning_rate" => g.learning_rate = parse(v)?,
            "som.width" => s.width = parse(v)?,
            "som.height" => s.height = parse(v)?,
            "som.epochs" => s.epochs = parse(v)?,
            "som.gamma_initial" => s.gamma = Schedule::new(parse(v)?, s.gamma.last),
            "som.gamma_final" => s.gamma = Schedule::new(s.gamma.initial, parse(v)?),
            "som.radius_initial" => s.radius = Schedule::new(parse(v)?, s.radius.last),
            "som.radius_final" => s.radius = Schedule::new(s.radius.initial, parse(v)?),
            "som.neighborhood" => {
                s.kind = match v {
                    "gaussian" => Neighborhood::Gaussian,
                    "triangular" => Neighborhood::Triangular,
                    _ => return Err(format!("unknown neighborhood `{v}`")),
                }
            }
            "som.rule" => {
                s.rule = match v {
                    "standard" => UpdateRule::Standard,
                    "bmu_difference" => UpdateRule::BmuDifference,
                    _ => return Err(format!("unknown update rule `{v}`")),
                }
            }
            "sim.pairs" => self.sim.pairs = parse(v)?,
            "sim.sites" => self.sim.sites = parse(v)?,
            "sim.snr_db" => self.sim.snr_db = parse(v)?,
            "sim.diffusion" => ap.diffusion = parse(v)?,
            "sim.dt" => ap.dt = parse(v)?,
            "sim.steps" => ap.steps = parse(v)?,
            "sim.record_every" => ap.record_every = parse(v)?,
            "sim.stimulus_amplitude" => ap.stimulus_amplitude = parse(v)?,
            "sim.stimulus_duration" => ap.stimulus_duration = parse(v)?,
            "inv.lambda" => {
                inv.lambda = match v {
                    "lcurve" => Lambda::LCurve,
                    _ => Lambda::Fixed(parse(v)?),
                }
            }
            "inv.bound" => inv.bound = parse(v)?,
            "inv.budget" => inv.budget = parse(v)?,
            "inv.rho_begin" => inv.rho_begin = parse(v)?,
            "inv.rho_end" => inv.rho_end = parse(v)?,
            "inv.max_outer" => inv.convergence.max_outer = parse(v)?,
            "inv.tol_u" => inv.convergence.tol_u = parse(v)?,
            "inv.tol_h" => inv.convergence.tol_h = parse(v)?,
            "stages.forge" => st.forge = parse_bool(v)?,
            "stages.train_gen" => st.train_gen = parse_bool(v)?,
            "stages.train_som" => st.train_som = parse_bool(v)?,
            "stages.simulate" => st.simulate = parse_bool(v)?,
            "stages.invert" => st.invert = parse_bool(v)?,
            "stages.evaluate" => st.evaluate = parse_bool(v)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Defaults overridden by the lines of `text`. Blank lines and `#`
    /// comments are skipped; repeating a key is an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |detail: String| Error::Config { line: i + 1, detail };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(err(format!("duplicate key `{k}`")));
            }
            cfg.set(k, v).map_err(err)?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(Error::io(path))?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Checks every value that does not need files or the mesh.
    pub fn validate(&self) -> Result<()> {
        let core = |e: imre_core::Error| Error::Invalid(e.to_string());
        let bad = |m: &str| Err(Error::Invalid(m.to_string()));
        let d = &self.data;
        if d.classes.is_empty() {
            return bad("data.classes is empty");
        }
        if d.operators < 2 * d.classes.len() {
            return bad("data.operators must be at least twice the number of classes");
        }
        if d.source_nodes < 4 || d.sensor_nodes < 4 {
            return bad("meshes need at least four nodes");
        }
        if self.out.as_os_str().is_empty() {
            return bad("out is empty");
        }
        self.gen.validate().map_err(core)?;
        self.som.validate().map_err(core)?;
        if self.sim.sites == 0 || self.sim.sites > d.source_nodes {
            return bad("sim.sites must lie in 1..=data.source_nodes");
        }
        if self.sim.pairs == 0 {
            return bad("sim.pairs must be at least 1");
        }
        if self.sim.snr_db.is_nan() || self.sim.snr_db == f64::NEG_INFINITY {
            return bad("sim.snr_db must be finite or inf");
        }
        if let Lambda::Fixed(l) = self.inv.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return bad("inv.lambda must be positive or `lcurve`");
            }
        }
        self.inv.dfo(self.gen.latent_dim).validate().map_err(core)?;
        self.inv.convergence.validate().map_err(core)?;
        Ok(())
    }
}
