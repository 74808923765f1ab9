//! Experiment harness: configuration, presets, the training loop, grid
//! search, evaluation against cached references, and run comparison.
//!
//! Everything here is deterministic by construction: a (config, seed)
//! pair fixes the network initialization, the collocation draw, every
//! epoch's shuffle and therefore every output byte except wall-clock
//! timings. One ChaCha8 stream drives initialization and then the epoch
//! shuffles; collocation sampling gets the same seed through its own
//! stream.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{self, GradientVector, ScalarExpr};
use crate::error::{Error, Result};
use crate::metrics::{self, LossHistory, LossRecord};
use crate::model::{self, ModelSpec};
use crate::optim::{
    assemble_per_sample_gradients, AdamState, AssembleConfig, GradientSource, Hyper,
    PdeAwareState, PerSampleForm,
};
use crate::pde::{
    sample_collocation, total_loss, BcKind, CollocationPoint, Forcing, IcKind, PdeKind, PdeSpec,
    PointRole,
};
use crate::refsolve::{self, Grid, SolutionField};

/// Epochs are full passes; each covers ceil(N_int / B) mini-batches.
const EPOCH_CONVENTION: &str = "full-pass";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    PdeAware,
}

impl OptimizerKind {
    pub fn id(&self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::PdeAware => "pde-aware",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "pde-aware" => Ok(OptimizerKind::PdeAware),
            other => Err(Error::Config(format!(
                "unknown optimizer kind {other:?} (expected adam or pde-aware)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub hyper: Hyper,
    pub gradient_source: GradientSource,
    pub per_sample_form: PerSampleForm,
}

/// Full description of one experiment. Mirrors the INI file section for
/// section; `to_ini` echoes every field so any artifact can be traced
/// back to an exact configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub pde: PdeSpec,
    pub model: ModelSpec,
    pub optimizer: OptimizerConfig,
    pub n_interior: usize,
    pub n_initial: usize,
    pub n_boundary: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Evaluation grid, in cells per axis (nodes = cells + 1).
    pub eval_cells: usize,
    /// Reference solver grid, in cells per axis; must nest onto the
    /// evaluation grid.
    pub solver_cells: usize,
    pub out_dir: PathBuf,
    pub cache_dir: PathBuf,
}

impl ExperimentConfig {
    /// Full-protocol defaults for a benchmark equation: 3×64 tanh net,
    /// 10,000 interior / 1,000 IC / 1,000 BC points, B = 1,024,
    /// T = 10,000.
    fn base_for(kind: &str) -> Result<Self> {
        let pde = match kind {
            "burgers" => PdeSpec::burgers_default(),
            "allen-cahn" => PdeSpec::allen_cahn_default(),
            "kdv" => PdeSpec::kdv_default(),
            other => {
                return Err(Error::Config(format!(
                    "unknown pde kind {other:?} (expected burgers, allen-cahn or kdv)"
                )))
            }
        };
        // KdV's explicit solver pays dt ~ dx³, so its reference runs on a
        // slightly coarser grid; fourth-order stencils keep it well ahead
        // of the evaluation grid's resolution. Both nest onto 400 cells.
        let solver_cells = match pde.kind {
            PdeKind::Kdv { .. } => 1200,
            _ => 1600,
        };
        Ok(Self {
            pde,
            model: ModelSpec::full_scale(),
            optimizer: OptimizerConfig {
                kind: OptimizerKind::PdeAware,
                hyper: Hyper::pde_aware_default(),
                gradient_source: GradientSource::TotalLoss,
                per_sample_form: PerSampleForm::SquaredResidual,
            },
            n_interior: 10_000,
            n_initial: 1_000,
            n_boundary: 1_000,
            seed: 1,
            batch_size: 1_024,
            epochs: 10_000,
            eval_cells: 400,
            solver_cells,
            out_dir: PathBuf::from("runs/run"),
            cache_dir: PathBuf::from("runs/refcache"),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.pde.validate()?;
        self.optimizer.hyper.validate()?;
        if self.n_interior == 0 || self.n_initial == 0 || self.n_boundary == 0 {
            return Err(Error::Config("collocation counts must be positive".into()));
        }
        if self.batch_size == 0 || self.batch_size > self.n_interior {
            return Err(Error::Config(format!(
                "batch_size {} must lie in 1..=n_interior ({})",
                self.batch_size, self.n_interior
            )));
        }
        if self.eval_cells == 0 {
            return Err(Error::Config("grid_cells must be positive".into()));
        }
        if self.solver_cells < self.eval_cells
            || self.solver_cells % self.eval_cells != 0
            || self.solver_cells % 2 != 0
        {
            return Err(Error::Config(format!(
                "solver_cells {} must be an even multiple of grid_cells {}",
                self.solver_cells, self.eval_cells
            )));
        }
        Ok(())
    }

    pub fn from_ini_str(text: &str) -> Result<Self> {
        let entries = parse_ini(text)?;
        let kind = entries
            .iter()
            .find(|(s, k, _)| s == "pde" && k == "kind")
            .map(|(_, _, v)| v.clone())
            .ok_or_else(|| Error::Config("missing required key kind in [pde]".into()))?;
        let mut cfg = Self::base_for(&kind)?;
        for (section, key, value) in &entries {
            cfg.apply(section, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_ini_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_ini_str(&text)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| {
            Error::Config(format!("[{section}] {key} = {value}: {what}"))
        };
        let as_f64 = || -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|e| bad(&format!("not a number ({e})")))
        };
        let as_usize = || -> Result<usize> {
            value
                .parse::<usize>()
                .map_err(|e| bad(&format!("not a count ({e})")))
        };
        match (section, key) {
            ("pde", "kind") => {
                if value != self.pde.kind.name() {
                    return Err(bad("kind may appear only once"));
                }
            }
            ("pde", "coefficient") => {
                let v = as_f64()?;
                self.pde.kind = match self.pde.kind {
                    PdeKind::Burgers { .. } => PdeKind::Burgers { nu: v },
                    PdeKind::AllenCahn { .. } => PdeKind::AllenCahn { eps: v },
                    PdeKind::Kdv { .. } => PdeKind::Kdv { mu: v },
                };
            }
            ("pde", "ic") => self.pde.ic = parse_ic(value).map_err(|e| bad(&e))?,
            ("pde", "bc") => {
                self.pde.bc = match value {
                    "dirichlet" => BcKind::Dirichlet,
                    "periodic" => BcKind::Periodic,
                    _ => return Err(bad("expected dirichlet or periodic")),
                }
            }
            ("pde", "bc_value") => self.pde.bc_value = as_f64()?,
            ("pde", "forcing") => self.pde.forcing = parse_forcing(value).map_err(|e| bad(&e))?,
            ("pde", "x_min") => self.pde.domain.x_min = as_f64()?,
            ("pde", "x_max") => self.pde.domain.x_max = as_f64()?,
            ("pde", "t_max") => self.pde.domain.t_max = as_f64()?,
            ("model", "layers") => {
                self.model = ModelSpec::from_layers_string(value)
                    .map_err(|e| bad(&e.to_string()))?
            }
            ("optimizer", "kind") => self.optimizer.kind = OptimizerKind::parse(value)?,
            ("optimizer", "eta") => self.optimizer.hyper.eta = as_f64()?,
            ("optimizer", "beta1") => self.optimizer.hyper.beta1 = as_f64()?,
            ("optimizer", "beta2") => self.optimizer.hyper.beta2 = as_f64()?,
            ("optimizer", "epsilon") => self.optimizer.hyper.epsilon = as_f64()?,
            ("optimizer", "gradient_source") => {
                self.optimizer.gradient_source = match value {
                    "total-loss" => GradientSource::TotalLoss,
                    "pde-only" => GradientSource::PdeOnly,
                    _ => return Err(bad("expected total-loss or pde-only")),
                }
            }
            ("optimizer", "per_sample_form") => {
                self.optimizer.per_sample_form = match value {
                    "squared" => PerSampleForm::SquaredResidual,
                    "raw" => PerSampleForm::RawResidual,
                    _ => return Err(bad("expected squared or raw")),
                }
            }
            ("sampling", "n_interior") => self.n_interior = as_usize()?,
            ("sampling", "n_initial") => self.n_initial = as_usize()?,
            ("sampling", "n_boundary") => self.n_boundary = as_usize()?,
            ("sampling", "seed") => {
                self.seed = value
                    .parse::<u64>()
                    .map_err(|e| bad(&format!("not a seed ({e})")))?
            }
            ("training", "batch_size") => self.batch_size = as_usize()?,
            ("training", "epochs") => self.epochs = as_usize()?,
            ("evaluation", "grid_cells") => self.eval_cells = as_usize()?,
            ("evaluation", "solver_cells") => self.solver_cells = as_usize()?,
            ("output", "dir") => self.out_dir = PathBuf::from(value),
            ("output", "cache_dir") => self.cache_dir = PathBuf::from(value),
            _ => return Err(bad("unknown key")),
        }
        Ok(())
    }

    /// Canonical INI echo of every field; `from_ini_str` inverts it.
    pub fn to_ini(&self) -> String {
        let d = self.pde.domain;
        let o = &self.optimizer;
        format!(
            "[pde]\nkind = {}\ncoefficient = {}\nic = {}\nbc = {}\nbc_value = {}\n\
             forcing = {}\nx_min = {}\nx_max = {}\nt_max = {}\n\n\
             [model]\nlayers = {}\n\n\
             [optimizer]\nkind = {}\neta = {}\nbeta1 = {}\nbeta2 = {}\nepsilon = {}\n\
             gradient_source = {}\nper_sample_form = {}\n\n\
             [sampling]\nn_interior = {}\nn_initial = {}\nn_boundary = {}\nseed = {}\n\n\
             [training]\nbatch_size = {}\nepochs = {}\n\n\
             [evaluation]\ngrid_cells = {}\nsolver_cells = {}\n\n\
             [output]\ndir = {}\ncache_dir = {}\n",
            self.pde.kind.name(),
            self.pde.kind.coefficient(),
            self.pde.ic_string(),
            self.pde.bc_string(),
            self.pde.bc_value,
            self.pde.forcing_string(),
            d.x_min,
            d.x_max,
            d.t_max,
            self.model.layers_string(),
            o.kind.id(),
            o.hyper.eta,
            o.hyper.beta1,
            o.hyper.beta2,
            o.hyper.epsilon,
            match o.gradient_source {
                GradientSource::TotalLoss => "total-loss",
                GradientSource::PdeOnly => "pde-only",
            },
            match o.per_sample_form {
                PerSampleForm::SquaredResidual => "squared",
                PerSampleForm::RawResidual => "raw",
            },
            self.n_interior,
            self.n_initial,
            self.n_boundary,
            self.seed,
            self.batch_size,
            self.epochs,
            self.eval_cells,
            self.solver_cells,
            self.out_dir.display(),
            self.cache_dir.display(),
        )
    }
}

fn parse_ic(v: &str) -> std::result::Result<IcKind, String> {
    if let Some(rest) = v.strip_prefix("const:") {
        return Ok(IcKind::Const(
            rest.parse().map_err(|e| format!("bad constant ({e})"))?,
        ));
    }
    if let Some(rest) = v.strip_prefix("soliton:") {
        let (c, x0) = rest
            .split_once(',')
            .ok_or("soliton needs two comma-separated numbers")?;
        return Ok(IcKind::Soliton {
            c: c.trim().parse().map_err(|e| format!("bad c ({e})"))?,
            x0: x0.trim().parse().map_err(|e| format!("bad x0 ({e})"))?,
        });
    }
    match v {
        "neg_sin_pi" => Ok(IcKind::NegSinPi),
        "x2_cos_pi" => Ok(IcKind::X2CosPi),
        "cos_pi" => Ok(IcKind::CosPi),
        _ => Err("expected neg_sin_pi, x2_cos_pi, cos_pi, const:<v> or soliton:<c>,<x0>".into()),
    }
}

fn parse_forcing(v: &str) -> std::result::Result<Forcing, String> {
    if let Some(rest) = v.strip_prefix("const:") {
        return Ok(Forcing::Const(
            rest.parse().map_err(|e| format!("bad constant ({e})"))?,
        ));
    }
    if let Some(rest) = v.strip_prefix("sin_pi:") {
        return Ok(Forcing::SinPi(
            rest.parse().map_err(|e| format!("bad amplitude ({e})"))?,
        ));
    }
    match v {
        "zero" => Ok(Forcing::Zero),
        _ => Err("expected zero, const:<v> or sin_pi:<a>".into()),
    }
}

/// (section, key, value) triples in file order. Blank lines and lines
/// starting with # or ; are skipped; everything else must be a section
/// header or a key = value pair.
fn parse_ini(text: &str) -> Result<Vec<(String, String, String)>> {
    let mut out = Vec::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let name = inner.strip_suffix(']').ok_or_else(|| {
                Error::Config(format!("line {}: unterminated section {raw:?}", idx + 1))
            })?;
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key = value, got {raw:?}", idx + 1))
        })?;
        if section.is_empty() {
            return Err(Error::Config(format!(
                "line {}: key before any [section]",
                idx + 1
            )));
        }
        out.push((section.clone(), k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Named configurations. `<pde>-paper` is the full protocol; `<pde>-desk`
/// shrinks the net to 2×32, the points to 2,000/200/200, batches to 200
/// and epochs to 2,000 so a run finishes in minutes on one core. An
/// `-adam` suffix switches the optimizer to the baseline; bare `paper`
/// aliases `burgers-paper`.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let resolved = if name == "paper" { "burgers-paper" } else { name };
    let (base, adam) = match resolved.strip_suffix("-adam") {
        Some(b) => (b, true),
        None => (resolved, false),
    };
    let (pde_name, scale) = base.rsplit_once('-').ok_or_else(|| {
        Error::Config(format!("unknown preset {name:?} (try: {})", PRESETS.join(", ")))
    })?;
    let mut cfg = ExperimentConfig::base_for(pde_name)
        .map_err(|_| Error::Config(format!("unknown preset {name:?} (try: {})", PRESETS.join(", "))))?;
    match scale {
        "paper" => {}
        "desk" => {
            cfg.model = ModelSpec::desk_scale();
            cfg.n_interior = 2_000;
            cfg.n_initial = 200;
            cfg.n_boundary = 200;
            cfg.batch_size = 200;
            cfg.epochs = 2_000;
        }
        _ => {
            return Err(Error::Config(format!(
                "unknown preset {name:?} (try: {})",
                PRESETS.join(", ")
            )))
        }
    }
    if adam {
        cfg.optimizer.kind = OptimizerKind::Adam;
        cfg.optimizer.hyper = Hyper::adam_default();
    }
    cfg.out_dir = PathBuf::from(format!("runs/{resolved}"));
    Ok(cfg)
}

pub const PRESETS: [&str; 13] = [
    "burgers-desk",
    "burgers-desk-adam",
    "allen-cahn-desk",
    "allen-cahn-desk-adam",
    "kdv-desk",
    "kdv-desk-adam",
    "burgers-paper",
    "burgers-paper-adam",
    "allen-cahn-paper",
    "allen-cahn-paper-adam",
    "kdv-paper",
    "kdv-paper-adam",
    "paper",
];

/// Everything `train` leaves behind, with enough provenance to re-derive
/// or re-verify each artifact.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub pde: String,
    pub spec_hash: String,
    pub optimizer: String,
    pub seed: u64,
    /// "completed" or "diverged".
    pub status: String,
    pub epochs_run: usize,
    pub epoch_convention: String,
    pub final_loss: Option<LossRecord>,
    pub rel_l2: Option<f64>,
    pub wall_seconds: f64,
    pub config_ini: String,
    pub loss_history_path: String,
    pub checkpoint_path: String,
    pub solution_field_path: String,
    pub error_field_path: String,
}

impl RunRecord {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidArgument(format!("record serialization: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// Uniform draw below `n`, bias-free via rejection.
fn rand_below(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    debug_assert!(n > 0);
    let zone = u64::MAX - u64::MAX % n;
    loop {
        let v = rng.next_u64();
        if v < zone {
            return v % n;
        }
    }
}

/// Fisher-Yates driven by the training stream.
fn shuffle(rng: &mut ChaCha8Rng, idx: &mut [usize]) {
    for i in (1..idx.len()).rev() {
        let j = rand_below(rng, (i + 1) as u64) as usize;
        idx.swap(i, j);
    }
}

enum OptState {
    Adam(AdamState),
    PdeAware(PdeAwareState),
}

struct TrainOutcome {
    params: crate::model::ParameterVector,
    history: LossHistory,
    /// (epoch, context) if the loss or a step went non-finite.
    diverged: Option<(usize, String)>,
}

/// The bare training loop: no artifacts, returns final parameters and
/// the per-epoch loss history. Divergence is reported in the outcome so
/// callers can preserve partial state; other errors abort.
fn run_training(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = model::init_params_rng(&cfg.model, &mut rng);
    let colloc = sample_collocation(
        &cfg.pde,
        cfg.n_interior,
        cfg.n_initial,
        cfg.n_boundary,
        cfg.seed,
    )?;
    let acfg = AssembleConfig {
        gradient_source: cfg.optimizer.gradient_source,
        per_sample_form: cfg.optimizer.per_sample_form,
    };
    let mut opt = match cfg.optimizer.kind {
        OptimizerKind::Adam => OptState::Adam(AdamState::new(params.len(), cfg.optimizer.hyper)?),
        OptimizerKind::PdeAware => OptState::PdeAware(PdeAwareState::new(
            params.len(),
            cfg.optimizer.hyper,
            cfg.optimizer.gradient_source,
            cfg.optimizer.per_sample_form,
        )?),
    };
    let mut history = LossHistory::new(cfg.optimizer.kind.id(), cfg.seed);
    let mut indices: Vec<usize> = (0..cfg.n_interior).collect();
    let mut batch: Vec<CollocationPoint> = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        shuffle(&mut rng, &mut indices);
        for chunk in indices.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| colloc.interior[i]));
            let step = (|| -> Result<()> {
                let psg = assemble_per_sample_gradients(&cfg.pde, &params, &batch, &colloc, acfg)?;
                let delta = match &mut opt {
                    OptState::Adam(a) => {
                        // The baseline consumes the mean gradient of the
                        // configured source: PDE mean plus IC/BC mean
                        // under total-loss, PDE mean alone otherwise.
                        let mut g = psg.mean().to_vec();
                        if let Some(aux) = psg.aux_mean() {
                            for (gi, ai) in g.iter_mut().zip(aux) {
                                *gi += ai;
                            }
                        }
                        a.step(&GradientVector::new(g)?)?
                    }
                    OptState::PdeAware(p) => p.step(&psg)?,
                };
                params.apply_delta(&delta)
            })();
            match step {
                Ok(()) => {}
                Err(Error::NonFinite { context }) => {
                    return Ok(TrainOutcome {
                        params,
                        history,
                        diverged: Some((epoch, context)),
                    });
                }
                Err(other) => return Err(other),
            }
        }
        match total_loss(&cfg.pde, &params, &colloc) {
            Ok(loss) => history.push(LossRecord {
                epoch,
                total: loss.total,
                ic: loss.ic,
                bc: loss.bc,
                pde: loss.pde,
            })?,
            Err(Error::NonFinite { context }) => {
                return Ok(TrainOutcome {
                    params,
                    history,
                    diverged: Some((epoch, context)),
                });
            }
            Err(other) => return Err(other),
        }
    }
    Ok(TrainOutcome {
        params,
        history,
        diverged: None,
    })
}

/// Train per the config and write the full artifact set into
/// `cfg.out_dir`: `loss.csv`, `model.ckpt`, `solution.field`,
/// `abs_error.field` and `record.json`. On divergence the partial
/// history, checkpoint and record are still written before the error
/// returns.
pub fn train(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let t0 = Instant::now();
    std::fs::create_dir_all(&cfg.out_dir)?;
    let outcome = run_training(cfg)?;

    let history_path = cfg.out_dir.join("loss.csv");
    outcome.history.write_csv(&history_path)?;
    let ckpt_path = cfg.out_dir.join("model.ckpt");
    let extra = vec![
        ("spec_hash".to_string(), cfg.pde.content_hash()),
        ("optimizer".to_string(), cfg.optimizer.kind.id().to_string()),
        ("epochs".to_string(), cfg.epochs.to_string()),
        ("epoch_convention".to_string(), EPOCH_CONVENTION.to_string()),
    ];
    model::save_checkpoint(&outcome.params, cfg.seed, &extra, &ckpt_path)?;

    let mut record = RunRecord {
        pde: cfg.pde.kind.name().to_string(),
        spec_hash: cfg.pde.content_hash(),
        optimizer: cfg.optimizer.kind.id().to_string(),
        seed: cfg.seed,
        status: "completed".to_string(),
        epochs_run: outcome.history.len(),
        epoch_convention: EPOCH_CONVENTION.to_string(),
        final_loss: outcome.history.last().copied(),
        rel_l2: None,
        wall_seconds: 0.0,
        config_ini: cfg.to_ini(),
        loss_history_path: history_path.display().to_string(),
        checkpoint_path: ckpt_path.display().to_string(),
        solution_field_path: String::new(),
        error_field_path: String::new(),
    };

    if let Some((epoch, context)) = outcome.diverged {
        record.status = "diverged".to_string();
        record.wall_seconds = t0.elapsed().as_secs_f64();
        record.save(&cfg.out_dir.join("record.json"))?;
        return Err(Error::Divergence { epoch, context });
    }

    let eval_grid = Grid::square(cfg.eval_cells, cfg.pde.domain)?;
    let mut pred = refsolve::evaluate_on_grid(&outcome.params, &eval_grid);
    pred.metadata = vec![
        ("pde".into(), cfg.pde.kind.name().into()),
        ("spec_hash".into(), cfg.pde.content_hash()),
        ("optimizer".into(), cfg.optimizer.kind.id().into()),
        ("seed".into(), cfg.seed.to_string()),
    ];
    let reference = reference_field(&cfg.pde, cfg.solver_cells, cfg.eval_cells, &cfg.cache_dir)?;
    let rel = metrics::rel_l2(&pred, &reference)?;
    let mut err_field = metrics::abs_error_field(&pred, &reference)?;
    err_field.metadata = pred.metadata.clone();
    let solution_path = cfg.out_dir.join("solution.field");
    let error_path = cfg.out_dir.join("abs_error.field");
    pred.write(&solution_path)?;
    err_field.write(&error_path)?;

    record.rel_l2 = Some(rel);
    record.solution_field_path = solution_path.display().to_string();
    record.error_field_path = error_path.display().to_string();
    record.wall_seconds = t0.elapsed().as_secs_f64();
    record.save(&cfg.out_dir.join("record.json"))?;
    Ok(record)
}

/// One hyperparameter cell of the 2×2×2 search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridCell {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Total loss on the held-out collocation set; absent if the cell
    /// diverged.
    pub validation_loss: Option<f64>,
    pub status: String,
}

/// Train every (η, β₁, β₂) combination of the canonical grid on the base
/// config and score each on a freshly drawn held-out collocation set
/// (same counts, seed + 1). A diverging cell is recorded, not fatal.
pub fn grid_search(base: &ExperimentConfig) -> Result<Vec<GridCell>> {
    base.validate()?;
    let holdout = sample_collocation(
        &base.pde,
        base.n_interior,
        base.n_initial,
        base.n_boundary,
        base.seed + 1,
    )?;
    let mut cells = Vec::with_capacity(8);
    for eta in [1e-3, 1e-4] {
        for beta1 in [0.9, 0.99] {
            for beta2 in [0.99, 0.999] {
                let mut cfg = base.clone();
                cfg.optimizer.hyper = Hyper {
                    eta,
                    beta1,
                    beta2,
                    ..base.optimizer.hyper
                };
                let outcome = run_training(&cfg)?;
                let cell = match outcome.diverged {
                    Some((epoch, _)) => GridCell {
                        eta,
                        beta1,
                        beta2,
                        validation_loss: None,
                        status: format!("diverged at epoch {epoch}"),
                    },
                    None => {
                        let loss = total_loss(&cfg.pde, &outcome.params, &holdout)?;
                        GridCell {
                            eta,
                            beta1,
                            beta2,
                            validation_loss: Some(loss.total),
                            status: "ok".to_string(),
                        }
                    }
                };
                cells.push(cell);
            }
        }
    }
    Ok(cells)
}

/// `eta,beta1,beta2,validation_loss,status` rows in search order.
pub fn write_grid_csv(cells: &[GridCell], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for cell in cells {
        w.serialize(cell)
            .map_err(|e| Error::InvalidArgument(format!("grid row: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Where a reference field is (or would be) cached: the file name keys
/// on the PDE's canonical description, the scheme and both grid sizes.
pub fn reference_cache_path(
    spec: &PdeSpec,
    solver_cells: usize,
    eval_cells: usize,
    cache_dir: &Path,
) -> PathBuf {
    let key_src = format!(
        "{};scheme={};solver_cells={solver_cells};eval_cells={eval_cells}",
        spec.canonical_string(),
        refsolve::scheme_id(&spec.kind)
    );
    let mut h = Sha256::new();
    h.update(key_src.as_bytes());
    let key: String = h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect();
    cache_dir.join(format!("ref-{key}.field"))
}

/// Reference solution on the evaluation grid, cached on disk.
///
/// A cache miss solves at `solver_cells` and at half resolution, and the
/// two must agree within Rel-L² 1e-2 (on the half grid) before anything
/// is cached; an unstable or under-resolved reference never enters the
/// cache. Hits are re-verified against the stored content hash and spec
/// hash.
pub fn reference_field(
    spec: &PdeSpec,
    solver_cells: usize,
    eval_cells: usize,
    cache_dir: &Path,
) -> Result<SolutionField> {
    spec.validate()?;
    if eval_cells == 0 || solver_cells % eval_cells != 0 || solver_cells % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "solver grid {solver_cells} must be an even multiple of evaluation grid {eval_cells}"
        )));
    }
    let path = reference_cache_path(spec, solver_cells, eval_cells, cache_dir);

    if path.exists() {
        let field = SolutionField::read(&path)?;
        let stored = field
            .metadata
            .iter()
            .find(|(k, _)| k == "spec_hash")
            .map(|(_, v)| v.clone())
            .unwrap_or_default();
        if stored != spec.content_hash() {
            return Err(Error::Verification(format!(
                "cached reference {} belongs to spec {stored}, expected {}",
                path.display(),
                spec.content_hash()
            )));
        }
        return Ok(field);
    }

    let full = refsolve::solve(spec, &Grid::square(solver_cells, spec.domain)?)?;
    let half = refsolve::solve(spec, &Grid::square(solver_cells / 2, spec.domain)?)?;
    let full_on_half = refsolve::restrict(&full, half.grid())?;
    let self_check = metrics::rel_l2(&full_on_half, &half)?;
    if self_check >= 1e-2 {
        return Err(Error::Verification(format!(
            "reference for {} is not converged: Rel-L2 {self_check:.3e} between {} and {} cells",
            spec.kind.name(),
            solver_cells,
            solver_cells / 2
        )));
    }
    let mut restricted = refsolve::restrict(&full, &Grid::square(eval_cells, spec.domain)?)?;
    restricted
        .metadata
        .retain(|(k, _)| k != "restricted_from");
    restricted
        .metadata
        .push(("solver_cells".into(), solver_cells.to_string()));
    restricted
        .metadata
        .push(("self_check_rel_l2".into(), format!("{self_check:.16e}")));
    std::fs::create_dir_all(cache_dir)?;
    restricted.write(&path)?;
    Ok(restricted)
}

pub struct EvalReport {
    pub rel_l2: f64,
    pub solution_field_path: PathBuf,
    pub error_field_path: PathBuf,
}

/// Evaluate a checkpoint against the cached reference for the config's
/// PDE. The checkpoint must carry the same spec hash as the config.
pub fn evaluate(ckpt_path: &Path, cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let ckpt = model::load_checkpoint(ckpt_path)?;
    let expected = cfg.pde.content_hash();
    let stored = ckpt
        .metadata
        .get("spec_hash")
        .cloned()
        .unwrap_or_else(|| "absent".to_string());
    if stored != expected {
        return Err(Error::SpecHashMismatch {
            checkpoint: stored,
            config: expected,
        });
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let eval_grid = Grid::square(cfg.eval_cells, cfg.pde.domain)?;
    let mut pred = refsolve::evaluate_on_grid(&ckpt.params, &eval_grid);
    pred.metadata = vec![
        ("pde".into(), cfg.pde.kind.name().into()),
        ("spec_hash".into(), expected.clone()),
        ("checkpoint".into(), ckpt_path.display().to_string()),
    ];
    let reference = reference_field(&cfg.pde, cfg.solver_cells, cfg.eval_cells, &cfg.cache_dir)?;
    let rel = metrics::rel_l2(&pred, &reference)?;
    let mut err_field = metrics::abs_error_field(&pred, &reference)?;
    err_field.metadata = pred.metadata.clone();
    let solution_path = cfg.out_dir.join("eval_solution.field");
    let error_path = cfg.out_dir.join("eval_abs_error.field");
    pred.write(&solution_path)?;
    err_field.write(&error_path)?;
    Ok(EvalReport {
        rel_l2: rel,
        solution_field_path: solution_path,
        error_field_path: error_path,
    })
}

/// One row of a run comparison.
#[derive(Clone, Debug, Serialize)]
pub struct CompareRow {
    pub optimizer: String,
    pub seed: u64,
    pub final_total: f64,
    pub rel_l2: f64,
    pub smoothness: f64,
    pub wall_seconds: f64,
}

/// Side-by-side table of completed runs on the same PDE: final loss,
/// Rel-L², loss smoothness over the trailing half, wall time. Written as
/// CSV to `out_path` and returned.
pub fn compare(records: &[RunRecord], out_path: &Path) -> Result<Vec<CompareRow>> {
    if records.len() < 2 {
        return Err(Error::InvalidArgument(
            "compare needs at least two run records".into(),
        ));
    }
    let hash0 = &records[0].spec_hash;
    if let Some(odd) = records.iter().find(|r| &r.spec_hash != hash0) {
        return Err(Error::InvalidArgument(format!(
            "mixed-PDE comparison: {} ({}) vs {} ({})",
            records[0].pde, hash0, odd.pde, odd.spec_hash
        )));
    }
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        let final_loss = r.final_loss.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "run {} (seed {}) has no final loss; only completed runs compare",
                r.optimizer, r.seed
            ))
        })?;
        let rel = r.rel_l2.ok_or_else(|| {
            Error::InvalidArgument(format!(
                "run {} (seed {}) has no Rel-L2; only completed runs compare",
                r.optimizer, r.seed
            ))
        })?;
        let history = LossHistory::read_csv(Path::new(&r.loss_history_path))?;
        let smoothness = metrics::loss_smoothness(&history, 0.5)?;
        rows.push(CompareRow {
            optimizer: r.optimizer.clone(),
            seed: r.seed,
            final_total: final_loss.total,
            rel_l2: rel,
            smoothness,
            wall_seconds: r.wall_seconds,
        });
    }
    let mut w = csv::Writer::from_path(out_path)?;
    for row in &rows {
        w.serialize(row)
            .map_err(|e| Error::InvalidArgument(format!("compare row: {e}")))?;
    }
    w.flush()?;
    Ok(rows)
}

pub struct GradCheckReport {
    pub draws: usize,
    pub worst: f64,
    pub tol: f64,
}

/// Finite-difference verification sweep: random small nets and random
/// points, checking the analytic parameter gradient of each scalar
/// family (interior squared residual, IC, BC) against central
/// differences. The third-derivative path (KdV) tolerates 1e-4, the
/// rest 1e-5.
pub fn grad_check_suite(spec: &PdeSpec, draws: usize, seed: u64) -> Result<GradCheckReport> {
    spec.validate()?;
    if draws == 0 {
        return Err(Error::InvalidArgument("grad check needs draws > 0".into()));
    }
    let tol = match spec.kind {
        PdeKind::Kdv { .. } => 1e-4,
        _ => 1e-5,
    };
    let net = ModelSpec::new(vec![2, 8, 8, 1])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.domain;
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let params = model::init_params_rng(&net, &mut rng);
        let point = CollocationPoint {
            x: d.x_min + d.x_extent() * model::unit_open(&mut rng),
            t: d.t_max * model::unit_open(&mut rng),
            role: PointRole::Interior,
        };
        worst = worst.max(autodiff::grad_check(
            &params,
            &point,
            ScalarExpr::InteriorSquared,
            spec,
            1e-5,
        )?);
        let ic = CollocationPoint {
            x: d.x_min + d.x_extent() * model::unit_open(&mut rng),
            t: 0.0,
            role: PointRole::Initial,
        };
        worst = worst.max(autodiff::grad_check(
            &params,
            &ic,
            ScalarExpr::IcSquared,
            spec,
            1e-5,
        )?);
        let bc = CollocationPoint {
            x: if model::unit_open(&mut rng) < 0.5 {
                d.x_min
            } else {
                d.x_max
            },
            t: d.t_max * model::unit_open(&mut rng),
            role: PointRole::Boundary,
        };
        worst = worst.max(autodiff::grad_check(
            &params,
            &bc,
            ScalarExpr::BcSquared,
            spec,
            1e-5,
        )?);
    }
    if worst > tol {
        return Err(Error::Verification(format!(
            "gradient check on {}: worst relative error {worst:.3e} exceeds {tol:.0e}",
            spec.kind.name()
        )));
    }
    Ok(GradCheckReport { draws, worst, tol })
}
