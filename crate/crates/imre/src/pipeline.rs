//! Stage-by-stage experiment runner. Every stage reads its inputs from and
//! writes its outputs to the configured output directory, so stages can run
//! separately from the CLI.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use imre_core::cardiac::{add_noise, forward_project, select_pacing_sites, simulate_ap, PacingSite};
use imre_core::forge::{
    forge_dataset, make_geometry, Dataset, DatasetManifest, ErrorClass, ForwardOperator, Geometry, PairRecord, Split,
};
use imre_core::generator::{train_on_dataset, GeneratorConfig, GeneratorModel, LatentCode};
use imre_core::inverse::{
    alternate_optimize_with, build_laplacian, detect_error_source, lcurve, lcurve_corner, InverseProblem, Laplacian,
    Tikhonov,
};
use imre_core::metrics::{rmse, Metrics};
use imre_core::som::{classify, train_som, SomGrid, SomTrainConfig};
use imre_core::Matrix;

use crate::config::{ExperimentConfig, Lambda};
use crate::container::{
    operator_file, operator_from_file, potential_file, potential_from_file, recording_file, recording_from_file,
    MatrixFile,
};
use crate::manifest::{read_manifest, write_manifest, ManifestEntry};
use crate::{checkpoint, som_file};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Forge,
    TrainGen,
    TrainSom,
    Simulate,
    Invert,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Forge,
        Stage::TrainGen,
        Stage::TrainSom,
        Stage::Simulate,
        Stage::Invert,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Forge => "forge",
            Stage::TrainGen => "train-gen",
            Stage::TrainSom => "train-som",
            Stage::Simulate => "simulate",
            Stage::Invert => "invert",
            Stage::Evaluate => "evaluate",
        }
    }

    pub fn enabled(self, cfg: &ExperimentConfig) -> bool {
        let s = &cfg.stages;
        match self {
            Stage::Forge => s.forge,
            Stage::TrainGen => s.train_gen,
            Stage::TrainSom => s.train_som,
            Stage::Simulate => s.simulate,
            Stage::Invert => s.invert,
            Stage::Evaluate => s.evaluate,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Output file names, relative to the output directory.
pub mod files {
    pub const CONFIG: &str = "config.txt";
    pub const MANIFEST: &str = "manifest.jsonl";
    pub const OPERATORS: &str = "operators";
    pub const GENERATOR: &str = "generator.imp";
    pub const GENERATOR_LOSS: &str = "generator_loss.csv";
    pub const SOM: &str = "som.ism";
    pub const SOM_CLUSTERS: &str = "som_clusters.csv";
    pub const SOM_QUANTIZATION: &str = "som_quantization.csv";
    pub const POTENTIALS: &str = "potentials";
    pub const RECORDINGS: &str = "recordings";
    pub const CASES: &str = "cases.csv";
    pub const INVERSIONS: &str = "inversions";
    pub const TRACES: &str = "traces";
    pub const INVERSION: &str = "inversion.csv";
    pub const GENERATOR_EVAL: &str = "generator_eval.csv";
    pub const SOM_EVAL: &str = "som_eval.csv";
    pub const SUMMARY: &str = "summary.csv";
    pub const AGGREGATE: &str = "aggregate.csv";
}

/// What a stage reports back besides its files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageOutcome {
    /// Inverse cases solved, and how many stopped on tolerance rather than
    /// on `max_outer`. Zero for other stages.
    pub cases: usize,
    pub converged: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub stages: Vec<(Stage, Duration, StageOutcome)>,
}

impl RunReport {
    pub fn outcome(&self, stage: Stage) -> Option<StageOutcome> {
        self.stages.iter().find(|s| s.0 == stage).map(|s| s.2)
    }
}

/// Lambda grid scanned for the L-curve corner.
pub fn lambda_grid() -> Vec<f64> {
    (0..25).map(|k| 10f64.powf(-7.0 + 0.25 * k as f64)).collect()
}

/// Noise seed of one inverse case.
pub fn noise_seed(seed: u64, case: usize) -> u64 {
    seed ^ ((case as u64 + 1) << 32)
}

pub fn geometry(cfg: &ExperimentConfig) -> Result<Geometry> {
    let d = &cfg.data;
    Ok(make_geometry(&d.geometry, d.source_nodes, d.sensor_nodes, cfg.seed)?)
}

fn sci(v: f64) -> String {
    format!("{v:.6e}")
}

fn fixed(v: f64) -> String {
    format!("{v:.6}")
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(Error::io(path))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(Error::io(path))?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_rows(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let f = fs::File::open(path).map_err(Error::io(path))?;
    Ok(csv::Reader::from_reader(f).records().collect::<std::result::Result<_, _>>()?)
}

fn field<'a>(row: &'a csv::StringRecord, i: usize, what: &'static str) -> Result<&'a str> {
    row.get(i).ok_or_else(|| Error::format(what, format!("row has no column {i}")))
}

fn parsed<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, what: &'static str) -> Result<T> {
    let raw = field(row, i, what)?;
    raw.parse()
        .map_err(|_| Error::format(what, format!("bad value `{raw}` in column {i}")))
}

fn finish(mut w: csv::Writer<fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::format("csv", e.to_string()))
}

fn label_of(s: &str) -> Result<ErrorClass> {
    Ok(s.parse()?)
}

fn split_of(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        _ => Err(Error::format("manifest", format!("unknown split `{s}`"))),
    }
}

/// Loads the manifest and every operator it references.
pub fn load_dataset(out: &Path, seed: u64) -> Result<Dataset> {
    let path = out.join(files::MANIFEST);
    let f = fs::File::open(&path).map_err(Error::io(&path))?;
    let entries = read_manifest(std::io::BufReader::new(f))?;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut operators = Vec::new();
    let mut load = |rel: &str| -> Result<usize> {
        if let Some(&i) = index.get(rel) {
            return Ok(i);
        }
        operators.push(operator_from_file(MatrixFile::load(out.join(rel))?)?);
        index.insert(rel.to_string(), operators.len() - 1);
        Ok(operators.len() - 1)
    };
    let mut pairs = Vec::with_capacity(entries.len());
    for e in &entries {
        pairs.push(PairRecord {
            pair_id: e.pair_id,
            h_i: load(&e.h_i_path)?,
            h_f: load(&e.h_f_path)?,
            label: label_of(&e.label)?,
            split: split_of(&e.split)?,
        });
    }
    Ok(Dataset {
        operators,
        manifest: DatasetManifest { pairs, seed },
    })
}

fn generator_config(cfg: &ExperimentConfig) -> GeneratorConfig {
    GeneratorConfig {
        seed: cfg.seed,
        ..cfg.gen.clone()
    }
}

fn som_config(cfg: &ExperimentConfig) -> SomTrainConfig {
    SomTrainConfig {
        seed: cfg.seed,
        ..cfg.som.clone()
    }
}

fn forge(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    let out = &cfg.out;
    let geo = geometry(cfg)?;
    let d = &cfg.data;
    let ds = forge_dataset(&geo, d.operators, &d.classes, cfg.seed, d.pairing)?;
    create_dir(&out.join(files::OPERATORS))?;
    let rel = |i: usize| format!("{}/op_{i:04}.imo", files::OPERATORS);
    for (i, op) in ds.operators.iter().enumerate() {
        operator_file(op).save(out.join(rel(i)))?;
    }
    let entries: Vec<ManifestEntry> = ds
        .manifest
        .pairs
        .iter()
        .map(|p| ManifestEntry {
            pair_id: p.pair_id,
            h_i_path: rel(p.h_i),
            h_f_path: rel(p.h_f),
            label: p.label.to_string(),
            split: p.split.as_str().to_string(),
        })
        .collect();
    let path = out.join(files::MANIFEST);
    write_manifest(&entries, fs::File::create(&path).map_err(Error::io(&path))?)?;
    Ok(StageOutcome::default())
}

fn train_gen(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    let ds = load_dataset(&cfg.out, cfg.seed)?;
    let (model, curve) = train_on_dataset(&ds, &generator_config(cfg))?;
    checkpoint::save_model(&model, cfg.out.join(files::GENERATOR))?;
    let mut w = csv_writer(&cfg.out.join(files::GENERATOR_LOSS))?;
    w.write_record(["epoch", "elbo_term", "kl_term", "identity_term", "total"])?;
    for e in &curve {
        w.write_record([e.epoch.to_string(), sci(e.elbo), sci(e.kl), sci(e.identity), sci(e.total)])?;
    }
    finish(w)?;
    Ok(StageOutcome::default())
}

/// Posterior-mean codes of one split with their class ids.
pub fn split_codes(model: &GeneratorModel, ds: &Dataset, split: Split) -> Result<Vec<(usize, Vec<f64>, ErrorClass)>> {
    ds.manifest
        .split(split)
        .map(|p| {
            let (hi, hf) = ds.pair(p);
            Ok((p.pair_id, model.encode(hi, hf)?.mean, p.label))
        })
        .collect()
}

fn train_som_stage(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    let ds = load_dataset(&cfg.out, cfg.seed)?;
    let model = checkpoint::load_model(cfg.out.join(files::GENERATOR))?;
    let codes = split_codes(&model, &ds, Split::Train)?;
    let latents: Vec<(&[f64], usize)> = codes.iter().map(|(_, z, l)| (z.as_slice(), l.index())).collect();
    let zs: Vec<&[f64]> = latents.iter().map(|l| l.0).collect();
    let scfg = som_config(cfg);
    let grid = SomGrid::random_init(scfg.width, scfg.height, &zs, scfg.seed)?;
    let trained = train_som(grid, &latents, &scfg)?;
    som_file::save(&trained.grid, &trained.labels, cfg.out.join(files::SOM))?;
    let path = cfg.out.join(files::SOM_CLUSTERS);
    som_file::write_clusters(&trained.grid, &trained.labels, fs::File::create(&path).map_err(Error::io(&path))?)?;
    let mut w = csv_writer(&cfg.out.join(files::SOM_QUANTIZATION))?;
    w.write_record(["epoch", "quantization_error"])?;
    for (i, q) in trained.quantization.iter().enumerate() {
        w.write_record([(i + 1).to_string(), sci(*q)])?;
    }
    finish(w)?;
    Ok(StageOutcome::default())
}

/// One row of `cases.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub case_id: usize,
    pub pair_id: usize,
    pub label: ErrorClass,
    pub pacing_node: usize,
    pub potential_path: String,
    pub recording_path: String,
}

pub fn load_cases(out: &Path) -> Result<Vec<Case>> {
    const WHAT: &str = "cases csv";
    csv_rows(&out.join(files::CASES))?
        .iter()
        .map(|r| {
            Ok(Case {
                case_id: parsed(r, 0, WHAT)?,
                pair_id: parsed(r, 1, WHAT)?,
                label: label_of(field(r, 2, WHAT)?)?,
                pacing_node: parsed(r, 3, WHAT)?,
                potential_path: field(r, 4, WHAT)?.to_string(),
                recording_path: field(r, 5, WHAT)?.to_string(),
            })
        })
        .collect()
}

fn simulate(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    let out = &cfg.out;
    let ds = load_dataset(out, cfg.seed)?;
    let geo = geometry(cfg)?;
    let test: Vec<&PairRecord> = ds.manifest.split(Split::Test).collect();
    if test.len() < cfg.sim.pairs {
        return Err(Error::Invalid(format!(
            "sim.pairs = {} but the dataset has {} held-out pairs",
            cfg.sim.pairs,
            test.len()
        )));
    }
    create_dir(&out.join(files::POTENTIALS))?;
    create_dir(&out.join(files::RECORDINGS))?;
    let sites = select_pacing_sites(&geo.source, cfg.sim.sites, cfg.seed)?;
    let mut potentials = Vec::with_capacity(sites.len());
    for &node in &sites {
        let u = simulate_ap(&geo.source, PacingSite { node, onset: 0.0 }, &cfg.sim.ap)?;
        let rel = format!("{}/site_{node:04}.imo", files::POTENTIALS);
        potential_file(&u, Some(node)).save(out.join(&rel))?;
        potentials.push((node, u, rel));
    }
    let mut w = csv_writer(&out.join(files::CASES))?;
    w.write_record(["case_id", "pair_id", "label", "pacing_node", "potential_path", "recording_path"])?;
    let mut case_id = 0;
    for p in test.into_iter().take(cfg.sim.pairs) {
        let (_, hf) = ds.pair(p);
        for (node, u, u_rel) in &potentials {
            let clean = forward_project(hf, u)?;
            let y = add_noise(&clean, cfg.sim.snr_db, noise_seed(cfg.seed, case_id))?;
            let y_rel = format!("{}/case_{case_id:03}.imo", files::RECORDINGS);
            recording_file(&y).save(out.join(&y_rel))?;
            w.write_record([
                case_id.to_string(),
                p.pair_id.to_string(),
                p.label.to_string(),
                node.to_string(),
                u_rel.clone(),
                y_rel,
            ])?;
            case_id += 1;
        }
    }
    finish(w)?;
    Ok(StageOutcome::default())
}

fn prior_of(ds: &Dataset, pair_id: usize) -> Result<(&ForwardOperator, &ForwardOperator)> {
    let p = ds
        .manifest
        .pairs
        .iter()
        .find(|p| p.pair_id == pair_id)
        .ok_or_else(|| Error::Invalid(format!("pair {pair_id} is not in the manifest")))?;
    Ok(ds.pair(p))
}

/// λ for one case: fixed, or the L-curve corner on the prior operator.
pub fn choose_lambda(cfg: &ExperimentConfig, h_i: &Matrix, y: &Matrix, lap: &Laplacian) -> Result<f64> {
    match cfg.inv.lambda {
        Lambda::Fixed(l) => Ok(l),
        Lambda::LCurve => Ok(lcurve_corner(&lcurve(h_i, y, lap, &lambda_grid())?)?),
    }
}

fn artifact(case: usize, what: &str) -> String {
    format!("{}/case_{case:03}_{what}.imo", files::INVERSIONS)
}

fn invert(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    let out = &cfg.out;
    let ds = load_dataset(out, cfg.seed)?;
    let model = checkpoint::load_model(out.join(files::GENERATOR))?;
    let cases = load_cases(out)?;
    let geo = geometry(cfg)?;
    let lap = build_laplacian(&geo.source)?;
    let dfo = cfg.inv.dfo(model.latent_dim());
    create_dir(&out.join(files::INVERSIONS))?;
    create_dir(&out.join(files::TRACES))?;
    let mut summary = csv_writer(&out.join(files::INVERSION))?;
    summary.write_record([
        "case_id",
        "lambda",
        "converged",
        "outer_iters",
        "dfo_evals",
        "initial_residual",
        "final_residual",
    ])?;
    let mut converged = 0;
    for c in &cases {
        let (h_i, _) = prior_of(&ds, c.pair_id)?;
        let y = recording_from_file(MatrixFile::load(out.join(&c.recording_path))?)?;
        let (truth, _) = potential_from_file(MatrixFile::load(out.join(&c.potential_path))?)?;
        let lambda = choose_lambda(cfg, h_i.matrix(), y.data(), &lap)?;
        let tik = Tikhonov::new(&lap, lambda)?;
        let u0 = tik.solve(h_i, &y)?;
        let p = InverseProblem {
            y: &y,
            h_i,
            model: &model,
            tikhonov: &tik,
        };
        let mut u_rmse = vec![rmse(u0.data(), truth.data())?];
        let mut fail = None;
        let sol = alternate_optimize_with(&p, &dfo, &cfg.inv.convergence, |_, u| match rmse(u, truth.data()) {
            Ok(v) => u_rmse.push(v),
            Err(e) => fail = Some(e),
        })?;
        if let Some(e) = fail {
            return Err(e.into());
        }

        let mut trace = csv_writer(&out.join(format!("{}/case_{:03}.csv", files::TRACES, c.case_id)))?;
        trace.write_record(["outer_iter", "dfo_evals", "residual", "rel_du", "rel_dh", "u_rmse"])?;
        trace.write_record(["0".into(), "0".into(), sci(sol.initial_residual), String::new(), String::new(), sci(u_rmse[0])])?;
        for (s, r) in sol.trace.iter().zip(&u_rmse[1..]) {
            trace.write_record([
                s.outer_iter.to_string(),
                s.dfo_evals.to_string(),
                sci(s.residual),
                sci(s.rel_du),
                sci(s.rel_dh),
                sci(*r),
            ])?;
        }
        finish(trace)?;

        potential_file(&u0, None).with("lambda", lambda).save(out.join(artifact(c.case_id, "u_initial")))?;
        potential_file(&sol.u, None).with("lambda", lambda).save(out.join(artifact(c.case_id, "u_imre")))?;
        operator_file(&sol.h_f).save(out.join(artifact(c.case_id, "h_f")))?;
        let z = sol.z.as_slice();
        MatrixFile::new(Matrix::from_row_slice(1, z.len(), z)).save(out.join(artifact(c.case_id, "z")))?;

        let evals: usize = sol.trace.iter().map(|s| s.dfo_evals).sum();
        let last = sol.trace.last().map_or(sol.initial_residual, |s| s.residual);
        converged += usize::from(sol.converged);
        summary.write_record([
            c.case_id.to_string(),
            sci(lambda),
            sol.converged.to_string(),
            sol.trace.len().to_string(),
            evals.to_string(),
            sci(sol.initial_residual),
            sci(last),
        ])?;
    }
    finish(summary)?;
    Ok(StageOutcome {
        cases: cases.len(),
        converged,
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn evaluate(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    let out = &cfg.out;
    let ds = load_dataset(out, cfg.seed)?;
    let model = checkpoint::load_model(out.join(files::GENERATOR))?;
    let (grid, labels) = som_file::load(out.join(files::SOM))?;
    let mut agg: Vec<(&str, String)> = Vec::new();

    let mut w = csv_writer(&out.join(files::GENERATOR_EVAL))?;
    w.write_record(["pair_id", "label", "prior_rmse", "generated_rmse", "identity_rmse"])?;
    let (mut wins, mut n, mut prior_sum, mut identity_sum) = (0, 0, 0.0, 0.0);
    for p in ds.manifest.split(Split::Test) {
        let (hi, hf) = ds.pair(p);
        let generated = model.generate(hi, &model.encode(hi, hf)?.mean_code())?;
        let identity = model.generate(hi, &model.encode(hi, hi)?.mean_code())?;
        let prior = rmse(hi.matrix(), hf.matrix())?;
        let gen = rmse(generated.matrix(), hf.matrix())?;
        let id = rmse(identity.matrix(), hi.matrix())?;
        wins += usize::from(gen < prior);
        n += 1;
        prior_sum += prior;
        identity_sum += id;
        w.write_record([p.pair_id.to_string(), p.label.to_string(), sci(prior), sci(gen), sci(id)])?;
    }
    finish(w)?;
    agg.push(("generator_pairs", n.to_string()));
    agg.push(("generator_wins", wins.to_string()));
    agg.push(("identity_ratio", fixed(identity_sum / prior_sum)));

    let mut w = csv_writer(&out.join(files::SOM_EVAL))?;
    w.write_record(["pair_id", "label", "detected", "correct"])?;
    let mut correct = 0;
    let codes = split_codes(&model, &ds, Split::Test)?;
    for (pair_id, z, label) in &codes {
        let detected = classify(&grid, &labels, z)?;
        let ok = detected == label.index();
        correct += usize::from(ok);
        w.write_record([pair_id.to_string(), label.to_string(), som_file::class_name(detected), ok.to_string()])?;
    }
    finish(w)?;
    agg.push(("som_pairs", codes.len().to_string()));
    agg.push(("som_correct", correct.to_string()));

    let cases = load_cases(out)?;
    let inversion = csv_rows(&out.join(files::INVERSION))?;
    let geo = geometry(cfg)?;
    let mut w = csv_writer(&out.join(files::SUMMARY))?;
    w.write_record([
        "case_id",
        "pair_id",
        "label",
        "pacing_node",
        "lambda",
        "init_rmse",
        "imre_rmse",
        "init_scc",
        "imre_scc",
        "init_tcc",
        "imre_tcc",
        "init_loc_mm",
        "imre_loc_mm",
        "detected_label",
        "converged",
        "outer_iters",
        "dfo_evals",
    ])?;
    let mut improved = 0;
    let (mut scc0, mut scc1, mut tcc0, mut tcc1) = (vec![], vec![], vec![], vec![]);
    for c in &cases {
        const WHAT: &str = "inversion csv";
        let row = inversion
            .iter()
            .find(|r| r.get(0) == Some(c.case_id.to_string().as_str()))
            .ok_or_else(|| Error::Invalid(format!("case {} was not inverted", c.case_id)))?;
        let (truth, _) = potential_from_file(MatrixFile::load(out.join(&c.potential_path))?)?;
        let (u0, _) = potential_from_file(MatrixFile::load(out.join(artifact(c.case_id, "u_initial")))?)?;
        let (u1, _) = potential_from_file(MatrixFile::load(out.join(artifact(c.case_id, "u_imre")))?)?;
        let z = MatrixFile::load(out.join(artifact(c.case_id, "z")))?.matrix;
        let site = PacingSite {
            node: c.pacing_node,
            onset: 0.0,
        };
        let m0 = Metrics::evaluate(&u0, &truth, &geo.source, site)?;
        let m1 = Metrics::evaluate(&u1, &truth, &geo.source, site)?;
        let detected = detect_error_source(&LatentCode::new(z.iter().copied().collect())?, &grid, &labels)?;
        improved += usize::from(m1.rmse < m0.rmse);
        scc0.push(m0.scc);
        scc1.push(m1.scc);
        tcc0.push(m0.tcc);
        tcc1.push(m1.tcc);
        w.write_record([
            c.case_id.to_string(),
            c.pair_id.to_string(),
            c.label.to_string(),
            c.pacing_node.to_string(),
            field(row, 1, WHAT)?.to_string(),
            sci(m0.rmse),
            sci(m1.rmse),
            fixed(m0.scc),
            fixed(m1.scc),
            fixed(m0.tcc),
            fixed(m1.tcc),
            format!("{:.3}", m0.loc_dist_mm),
            format!("{:.3}", m1.loc_dist_mm),
            som_file::class_name(detected),
            field(row, 2, WHAT)?.to_string(),
            field(row, 3, WHAT)?.to_string(),
            field(row, 4, WHAT)?.to_string(),
        ])?;
    }
    finish(w)?;
    agg.push(("cases", cases.len().to_string()));
    agg.push(("rmse_improved", improved.to_string()));
    agg.push(("median_init_scc", fixed(median(&mut scc0))));
    agg.push(("median_imre_scc", fixed(median(&mut scc1))));
    agg.push(("median_init_tcc", fixed(median(&mut tcc0))));
    agg.push(("median_imre_tcc", fixed(median(&mut tcc1))));

    let mut w = csv_writer(&out.join(files::AGGREGATE))?;
    w.write_record(["metric", "value"])?;
    for (k, v) in agg {
        w.write_record([k, &v])?;
    }
    finish(w)?;
    Ok(StageOutcome::default())
}

/// Runs one stage, tagging any failure with the stage name.
pub fn run_stage(stage: Stage, cfg: &ExperimentConfig) -> Result<StageOutcome> {
    let wrap = |source: Error| Error::Stage {
        stage,
        source: Box::new(source),
    };
    create_dir(&cfg.out).map_err(wrap)?;
    let run = match stage {
        Stage::Forge => forge,
        Stage::TrainGen => train_gen,
        Stage::TrainSom => train_som_stage,
        Stage::Simulate => simulate,
        Stage::Invert => invert,
        Stage::Evaluate => evaluate,
    };
    run(cfg).map_err(wrap)
}

/// Validates `cfg`, records it and runs every enabled stage in order.
pub fn run_all(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mut report = RunReport::default();
    if !Stage::ALL.iter().any(|s| s.enabled(cfg)) {
        return Ok(report);
    }
    create_dir(&cfg.out)?;
    let path = cfg.out.join(files::CONFIG);
    fs::write(&path, cfg.to_text()).map_err(Error::io(&path))?;
    for stage in Stage::ALL.into_iter().filter(|s| s.enabled(cfg)) {
        let t = Instant::now();
        let outcome = run_stage(stage, cfg)?;
        report.stages.push((stage, t.elapsed(), outcome));
    }
    Ok(report)
}
