//! Run configuration, experiment drivers and output files.
//!
//! Every driver takes a [`RunConfig`], computes exact targets, trains the
//! ansatz and writes CSV/JSON tables into the configured output directory.
//! CSV files start with a `#` line naming the table and its schema version.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::circuit::{layer_profile, Ansatz, AnglesFile, AnsatzOptions, LayerRow, TrotterOrder};
use crate::eigensolver::{correlation_length, eigenstates, Parity, TargetState, MAX_ED_SITES};
use crate::error::{Error, Result};
use crate::model::{build_ising, build_tci, build_xxz, HamiltonianSpec, XxzGrouping};
use crate::operators::SymmetryCharge;
use crate::qng::{optimize, OptimizationTrace, OptimizerConfig, Restart, Status};
use crate::statevector::State;

pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_SCHEMA: &str = "scqaoa/summary/v1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Ising,
    Tci,
    Xxz,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ising" => Ok(ModelKind::Ising),
            "tci" => Ok(ModelKind::Tci),
            "xxz" => Ok(ModelKind::Xxz),
            _ => Err(Error::Config(format!("unknown model {s:?}"))),
        }
    }
}

/// When to retry a failed run from random angles.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RestartOn {
    Never,
    /// Only for targets above the sector ground state.
    #[default]
    Excited,
    Always,
}

/// How a layer sweep looks for the smallest converging depth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerSearch {
    /// Every depth from `min_layers` upwards.
    #[default]
    Scan,
    /// Start at a hint, then step down while runs converge or up until one
    /// does. Assumes a deeper circuit never does worse.
    Hint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub size: usize,
    pub lambda_x: f64,
    pub lambda_z: f64,
    pub lambda_zxx: f64,
    pub gamma: f64,
    pub grouping: XxzGrouping,
    /// Parity sector of the target, `+1` or `-1`.
    pub sector: i64,
    pub state_index: usize,
    /// Sites flipped in the initial product state; derived from the sector when absent.
    pub initial_flips: Option<Vec<usize>>,
    pub layers: usize,
    pub min_layers: usize,
    /// Defaults to the chain length.
    pub max_layers: Option<usize>,
    pub layer_search: LayerSearch,
    pub layer_hint: Option<usize>,
    /// Stop a layer sweep at the first converged depth.
    pub stop_at_converged: bool,
    pub sizes: Vec<usize>,
    pub lambda_x_values: Vec<f64>,
    /// Eigenstates per sector for the spectrum dump.
    pub spectrum_states: usize,
    pub trotter_order: u8,
    pub tie_angles: bool,
    /// Generators carry the coupling strength instead of unit magnitude.
    pub coupling_weighted: bool,
    pub restart_on: RestartOn,
    pub restarts: usize,
    pub restart_amplitude: f64,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Ising,
            size: 8,
            lambda_x: 0.0,
            lambda_z: 1.0,
            lambda_zxx: 0.428,
            gamma: 0.0,
            grouping: XxzGrouping::ByPauli,
            sector: 1,
            state_index: 0,
            initial_flips: None,
            layers: 4,
            min_layers: 1,
            max_layers: None,
            layer_search: LayerSearch::Scan,
            layer_hint: None,
            stop_at_converged: false,
            sizes: vec![6, 8, 10, 12],
            lambda_x_values: vec![0.06, 0.1, 0.2],
            spectrum_states: 4,
            trotter_order: 2,
            tie_angles: false,
            coupling_weighted: false,
            restart_on: RestartOn::Excited,
            restarts: 3,
            restart_amplitude: 0.1,
            optimizer: OptimizerConfig { check_invariants: true, ..Default::default() },
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

/// Command-line overrides; `None` keeps the file or default value.
#[derive(Clone, Debug, Default)]
pub struct ConfigOverrides {
    pub model: Option<ModelKind>,
    pub size: Option<usize>,
    pub lambda_x: Option<f64>,
    pub lambda_z: Option<f64>,
    pub lambda_zxx: Option<f64>,
    pub gamma: Option<f64>,
    pub grouping: Option<XxzGrouping>,
    pub sector: Option<i64>,
    pub state_index: Option<usize>,
    pub layers: Option<usize>,
    pub eta: Option<f64>,
    pub epsilon: Option<f64>,
    pub cutoff: Option<f64>,
    pub max_iters: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub min_layers: Option<usize>,
    pub max_layers: Option<usize>,
    pub layer_hint: Option<usize>,
    pub stop_at_converged: Option<bool>,
    pub sizes: Option<Vec<usize>>,
    pub lambda_x_values: Option<Vec<f64>>,
    pub spectrum_states: Option<usize>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Defaults, then the optional file, then the overrides.
    pub fn resolve(file: Option<&Path>, o: &ConfigOverrides) -> Result<Self> {
        let mut c = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = o.$field.clone() { c.$field = v; })* };
        }
        set!(model, size, lambda_x, lambda_z, lambda_zxx, gamma, grouping, sector, state_index, layers, seed, out);
        set!(min_layers, stop_at_converged, sizes, lambda_x_values, spectrum_states);
        if o.max_layers.is_some() {
            c.max_layers = o.max_layers;
        }
        if o.layer_hint.is_some() {
            c.layer_hint = o.layer_hint;
            c.layer_search = LayerSearch::Hint;
        }
        if let Some(v) = o.eta {
            c.optimizer.eta = v;
        }
        if let Some(v) = o.epsilon {
            c.optimizer.epsilon = v;
        }
        if let Some(v) = o.cutoff {
            c.optimizer.cutoff = v;
        }
        if let Some(v) = o.max_iters {
            c.optimizer.max_iters = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.optimizer.validate()?;
        if self.sector != 1 && self.sector != -1 {
            return bad(format!("sector must be +1 or -1, got {}", self.sector));
        }
        if self.layers == 0 || self.min_layers == 0 {
            return bad("layer counts start at 1".into());
        }
        if let Some(m) = self.max_layers {
            if m < self.min_layers {
                return bad(format!("max_layers {m} below min_layers {}", self.min_layers));
            }
        }
        TrotterOrder::from_int(self.trotter_order)?;
        if !(self.restart_amplitude > 0.0 && self.restart_amplitude.is_finite()) {
            return bad("restart_amplitude must be positive".into());
        }
        if self.spectrum_states == 0 {
            return bad("spectrum_states must be at least 1".into());
        }
        for &l in std::iter::once(&self.size).chain(&self.sizes) {
            if l > MAX_ED_SITES {
                return Err(Error::TooLarge { len: l, limit: MAX_ED_SITES });
            }
        }
        // builder preconditions for every chain the config can touch
        self.build_spec(self.size)?;
        for &l in &self.sizes {
            self.build_spec(l)?;
        }
        for &lx in &self.lambda_x_values {
            if !lx.is_finite() {
                return bad("lambda_x values must be finite".into());
            }
        }
        if self.state_index >= 1 << (self.size - 1) {
            return Err(Error::TooManyStates { requested: self.state_index + 1, dim: 1 << (self.size - 1) });
        }
        if let Some(flips) = &self.initial_flips {
            State::<f64>::product_state(self.size, flips)?;
        }
        Ok(())
    }

    pub fn build_spec(&self, len: usize) -> Result<HamiltonianSpec<f64>> {
        self.build_spec_with(len, self.lambda_x)
    }

    fn build_spec_with(&self, len: usize, lambda_x: f64) -> Result<HamiltonianSpec<f64>> {
        match self.model {
            ModelKind::Ising => build_ising(len, lambda_x, self.lambda_z),
            ModelKind::Tci => build_tci(len, self.lambda_z, self.lambda_zxx),
            ModelKind::Xxz => build_xxz(len, self.gamma, self.grouping),
        }
    }

    fn ansatz_options(&self) -> AnsatzOptions {
        AnsatzOptions {
            trotter_order: TrotterOrder::from_int(self.trotter_order).unwrap_or_default(),
            tie_angles: self.tie_angles,
            coupling_weighted: self.coupling_weighted,
        }
    }

    fn max_layers_for(&self, len: usize) -> usize {
        self.max_layers.unwrap_or(len).max(self.min_layers)
    }
}

/// Initial product state: all up for `q = +1`, one flip at `floor(L/2)` for `q = -1`.
pub fn initial_state(len: usize, sector: i64, flips: Option<&[usize]>) -> Result<State<f64>> {
    match flips {
        Some(f) => State::product_state(len, f),
        None if sector == 1 => State::all_up(len),
        None => State::product_state(len, &[len / 2]),
    }
}

/// Exact eigenstate `index` of the parity sector, or of the full space when
/// the Hamiltonian does not conserve parity.
pub fn target_state(spec: &HamiltonianSpec<f64>, sector: i64, index: usize) -> Result<TargetState<f64>> {
    let parity = if spec.conserves(SymmetryCharge::ProductZ) { Some(Parity::from_charge(sector)?) } else { None };
    let mut states = eigenstates(spec, parity, index + 1)?;
    Ok(states.swap_remove(index))
}

/// Deterministic per-job seed.
pub fn job_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h = (h ^ p).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 31;
    }
    h
}

/// One trained circuit at fixed depth.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub ansatz: Ansatz<f64>,
    pub trace: OptimizationTrace<f64>,
    /// Optimizations started, including restarts.
    pub attempts: usize,
    pub restart_seed: Option<u64>,
}

/// Train an `layers`-deep circuit towards `target`, restarting from random
/// angles according to the config.
pub fn run_depth(
    cfg: &RunConfig,
    spec: &HamiltonianSpec<f64>,
    target: &TargetState<f64>,
    psi0: &State<f64>,
    layers: usize,
) -> Result<RunResult> {
    let ansatz = Ansatz::with_options(spec, layers, cfg.ansatz_options())?;
    let trace = optimize(&ansatz, psi0, Some(&target.state), &cfg.optimizer)?;
    let retry = match cfg.restart_on {
        RestartOn::Never => false,
        RestartOn::Excited => target.index > 0,
        RestartOn::Always => true,
    };
    let mut best = RunResult { ansatz, trace, attempts: 1, restart_seed: None };
    if !retry {
        return Ok(best);
    }
    for attempt in 0..cfg.restarts {
        if best.trace.converged() {
            break;
        }
        let seed = job_seed(cfg.seed, &[spec.len() as u64, layers as u64, target.index as u64, attempt as u64]);
        log::info!("L={} N={layers}: restart {} from random angles (seed {seed})", spec.len(), attempt + 1);
        let opt = OptimizerConfig { restart: Restart::Random { seed, amplitude: cfg.restart_amplitude }, ..cfg.optimizer.clone() };
        let mut trace = optimize(&best.ansatz, psi0, Some(&target.state), &opt)?;
        best.attempts += 1;
        // invariant checks cover every attempt, not only the kept one
        let (mut keep, drop) = (trace.invariants.take(), best.trace.invariants.take());
        if let (Some(k), Some(d)) = (keep.as_mut(), drop.as_ref()) {
            k.merge(d);
        }
        let (mut mk, md) = (trace.metric_checks.take(), best.trace.metric_checks.take());
        if let (Some(k), Some(d)) = (mk.as_mut(), md.as_ref()) {
            k.merge(d);
        }
        if trace.final_row().fidelity > best.trace.final_row().fidelity {
            best.trace = trace;
            best.restart_seed = Some(seed);
        }
        best.trace.invariants = keep.or(drop);
        best.trace.metric_checks = mk.or(md);
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub model: ModelKind,
    pub size: usize,
    pub lambda_x: f64,
    pub lambda_z: f64,
    pub lambda_zxx: f64,
    pub gamma: f64,
    pub sector: i64,
    pub state_index: usize,
    pub target_degenerate: bool,
    pub layers: usize,
    pub num_params: usize,
    pub status: Status,
    pub converged: bool,
    pub iterations: usize,
    pub attempts: usize,
    pub restart_seed: Option<u64>,
    pub cutoff: f64,
    pub fidelity: f64,
    pub energy: f64,
    pub energy_ed: f64,
    pub energy_error: f64,
    pub entropy: Option<f64>,
    pub entropy_ed: Option<f64>,
    pub entropy_error: Option<f64>,
    pub epsilon_escalations: usize,
    pub max_norm_error: Option<f64>,
    pub max_charge_drift: Option<f64>,
    pub min_metric_eigenvalue: Option<f64>,
    pub max_metric_asymmetry: Option<f64>,
}

impl Summary {
    pub fn new(cfg: &RunConfig, spec: &HamiltonianSpec<f64>, target: &TargetState<f64>, run: &RunResult) -> Result<Self> {
        let last = run.trace.final_row();
        let (entropy, entropy_ed) = if spec.len() % 2 == 0 {
            (Some(run.trace.state.half_chain_entropy()?), Some(target.state.half_chain_entropy()?))
        } else {
            (None, None)
        };
        let inv = run.trace.invariants.as_ref();
        let mc = run.trace.metric_checks.as_ref();
        Ok(Self {
            schema: SUMMARY_SCHEMA.into(),
            model: cfg.model,
            size: spec.len(),
            lambda_x: cfg.lambda_x,
            lambda_z: cfg.lambda_z,
            lambda_zxx: cfg.lambda_zxx,
            gamma: cfg.gamma,
            sector: cfg.sector,
            state_index: target.index,
            target_degenerate: target.degenerate,
            layers: run.ansatz.layers(),
            num_params: run.ansatz.num_params(),
            status: run.trace.status,
            converged: run.trace.converged(),
            iterations: run.trace.iterations,
            attempts: run.attempts,
            restart_seed: run.restart_seed,
            cutoff: cfg.optimizer.cutoff,
            fidelity: last.fidelity,
            energy: last.energy,
            energy_ed: target.energy,
            energy_error: (last.energy - target.energy).abs(),
            entropy,
            entropy_ed,
            entropy_error: entropy.zip(entropy_ed).map(|(a, b)| (a - b).abs()),
            epsilon_escalations: run.trace.epsilon_escalations,
            max_norm_error: inv.map(|m| m.max_norm_error),
            max_charge_drift: inv.map(|m| m.max_charge_drift),
            // no metric is built when the starting point already converges
            min_metric_eigenvalue: mc.map(|m| m.min_eigenvalue).filter(|v| v.is_finite()),
            max_metric_asymmetry: mc.map(|m| m.max_asymmetry),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub command: String,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct PrepareOutcome {
    pub summary: Summary,
    pub run: RunResult,
    pub profile: Vec<LayerRow>,
    pub wall_seconds: f64,
}

/// Exact target, training at `cfg.layers`, layer profile. Writes
/// `trace.csv`, `angles.json`, `profile.csv`, `summary.json` and `timing.json`.
pub fn cmd_prepare(cfg: &RunConfig) -> Result<PrepareOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let spec = cfg.build_spec(cfg.size)?;
    let target = target_state(&spec, cfg.sector, cfg.state_index)?;
    let psi0 = initial_state(cfg.size, cfg.sector, cfg.initial_flips.as_deref())?;
    let run = run_depth(cfg, &spec, &target, &psi0, cfg.layers)?;
    let profile = layer_profile(&run.ansatz, &run.trace.theta, &psi0, &target.state)?;
    let summary = Summary::new(cfg, &spec, &target, &run)?;
    let wall_seconds = start.elapsed().as_secs_f64();

    let out = &cfg.out;
    write_csv(&out.join("trace.csv"), "trace", &run.trace.rows)?;
    AnglesFile::from_params(&run.ansatz, &run.trace.theta).save(&out.join("angles.json"))?;
    write_csv(&out.join("profile.csv"), "profile", &profile)?;
    write_json(&out.join("summary.json"), &summary)?;
    write_json(&out.join("timing.json"), &Timing { command: "prepare".into(), wall_seconds })?;
    Ok(PrepareOutcome { summary, run, profile, wall_seconds })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerPoint {
    pub layers: usize,
    pub num_params: usize,
    pub fidelity: f64,
    pub energy_error: f64,
    pub iterations: usize,
    pub attempts: usize,
    pub status: Status,
    pub converged: bool,
    pub max_norm_error: Option<f64>,
    pub max_charge_drift: Option<f64>,
    pub min_metric_eigenvalue: Option<f64>,
    pub max_metric_asymmetry: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSweep {
    pub size: usize,
    pub lambda_x: f64,
    /// Ordered by depth.
    pub points: Vec<LayerPoint>,
    /// Smallest converged depth.
    pub n_c: Option<usize>,
}

/// Train circuits of several depths towards one target.
pub fn sweep_layers(
    cfg: &RunConfig,
    spec: &HamiltonianSpec<f64>,
    lambda_x: f64,
    hint: Option<usize>,
    stop_at_converged: bool,
) -> Result<LayerSweep> {
    let len = spec.len();
    let target = target_state(spec, cfg.sector, cfg.state_index)?;
    let psi0 = initial_state(len, cfg.sector, cfg.initial_flips.as_deref())?;
    let (lo, hi) = (cfg.min_layers, cfg.max_layers_for(len));
    let mut points: Vec<LayerPoint> = Vec::new();
    let mut run = |n: usize| -> Result<bool> {
        let r = run_depth(cfg, spec, &target, &psi0, n)?;
        let last = r.trace.final_row();
        log::info!("L={len} lambda_x={lambda_x} N={n}: fidelity {:.6} after {} steps", last.fidelity, r.trace.iterations);
        let p = LayerPoint {
            layers: n,
            num_params: r.ansatz.num_params(),
            fidelity: last.fidelity,
            energy_error: (last.energy - target.energy).abs(),
            iterations: r.trace.iterations,
            attempts: r.attempts,
            status: r.trace.status,
            converged: r.trace.converged(),
            max_norm_error: r.trace.invariants.as_ref().map(|m| m.max_norm_error),
            max_charge_drift: r.trace.invariants.as_ref().map(|m| m.max_charge_drift),
            min_metric_eigenvalue: r.trace.metric_checks.map(|m| m.min_eigenvalue).filter(|v| v.is_finite()),
            max_metric_asymmetry: r.trace.metric_checks.map(|m| m.max_asymmetry),
        };
        let tag = format!("L{len}_lx{lambda_x}_N{n}");
        write_json(&cfg.out.join("jobs").join(format!("{tag}.json")), &p)?;
        let ok = p.converged;
        points.push(p);
        Ok(ok)
    };
    match (cfg.layer_search, hint) {
        (LayerSearch::Hint, Some(h)) => {
            let mut n = h.clamp(lo, hi);
            if run(n)? {
                while n > lo {
                    n -= 1;
                    if !run(n)? {
                        break;
                    }
                }
            } else {
                while n < hi {
                    n += 1;
                    if run(n)? {
                        break;
                    }
                }
            }
        }
        _ => {
            for n in lo..=hi {
                if run(n)? && stop_at_converged {
                    break;
                }
            }
        }
    }
    points.sort_by_key(|p| p.layers);
    let n_c = points.iter().find(|p| p.converged).map(|p| p.layers);
    Ok(LayerSweep { size: len, lambda_x, points, n_c })
}

pub fn cmd_sweep_layers(cfg: &RunConfig) -> Result<LayerSweep> {
    cfg.validate()?;
    let start = Instant::now();
    let spec = cfg.build_spec(cfg.size)?;
    let sweep = sweep_layers(cfg, &spec, cfg.lambda_x, cfg.layer_hint, cfg.stop_at_converged)?;
    write_csv(&cfg.out.join("sweep_layers.csv"), "sweep-layers", &sweep.points)?;
    write_json(&cfg.out.join("sweep_layers.json"), &sweep)?;
    write_timing(cfg, "sweep-layers", start)?;
    Ok(sweep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizePoint {
    pub size: usize,
    pub n_c: Option<usize>,
    pub fidelity: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeSweep {
    pub points: Vec<SizePoint>,
    pub sweeps: Vec<LayerSweep>,
}

fn best_point(s: &LayerSweep) -> (f64, usize) {
    let p = match s.n_c {
        Some(n) => s.points.iter().find(|p| p.layers == n),
        None => s.points.iter().max_by(|a, b| a.fidelity.total_cmp(&b.fidelity)),
    };
    p.map_or((f64::NAN, 0), |p| (p.fidelity, p.iterations))
}

/// `N_c` for every chain length in `cfg.sizes`. Under hint search each
/// length starts from the previous `N_c`.
pub fn cmd_sweep_size(cfg: &RunConfig) -> Result<SizeSweep> {
    cfg.validate()?;
    let start = Instant::now();
    let mut hint = cfg.layer_hint;
    let mut sweeps = Vec::new();
    let mut points = Vec::new();
    for &len in &cfg.sizes {
        let spec = cfg.build_spec(len)?;
        let s = sweep_layers(cfg, &spec, cfg.lambda_x, hint.or(Some(cfg.min_layers)), true)?;
        hint = s.n_c.or(hint);
        let (fidelity, iterations) = best_point(&s);
        points.push(SizePoint { size: len, n_c: s.n_c, fidelity, iterations });
        sweeps.push(s);
    }
    let out = SizeSweep { points, sweeps };
    write_csv(&cfg.out.join("sweep_size.csv"), "sweep-size", &out.points)?;
    write_json(&cfg.out.join("sweep_size.json"), &out)?;
    write_timing(cfg, "sweep-size", start)?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingPoint {
    pub lambda_x: f64,
    pub xi: f64,
    pub n_c: Option<usize>,
    pub fidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingSweep {
    pub size: usize,
    pub points: Vec<CouplingPoint>,
    /// Rank correlation of `xi` against `N_c` over points with a defined `N_c`.
    pub spearman: f64,
    pub sweeps: Vec<LayerSweep>,
}

/// Correlation length and `N_c` for every `lambda_x` in `cfg.lambda_x_values`
/// at chain length `cfg.size`.
pub fn cmd_sweep_coupling(cfg: &RunConfig) -> Result<CouplingSweep> {
    cfg.validate()?;
    if cfg.model != ModelKind::Ising {
        return Err(Error::Config("coupling sweeps vary lambda_x of the Ising chain".into()));
    }
    let start = Instant::now();
    let mut hint = cfg.layer_hint;
    let mut points = Vec::new();
    let mut sweeps = Vec::new();
    for &lx in &cfg.lambda_x_values {
        let spec = cfg.build_spec_with(cfg.size, lx)?;
        let xi = correlation_length(lx, cfg.lambda_z, cfg.size)?.xi;
        let s = sweep_layers(cfg, &spec, lx, hint.or(Some(cfg.min_layers)), true)?;
        hint = s.n_c.or(hint);
        let (fidelity, _) = best_point(&s);
        points.push(CouplingPoint { lambda_x: lx, xi, n_c: s.n_c, fidelity });
        sweeps.push(s);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        points.iter().filter_map(|p| p.n_c.map(|n| (p.xi, n as f64))).unzip();
    let out = CouplingSweep { size: cfg.size, spearman: spearman(&xs, &ys), points, sweeps };
    write_csv(&cfg.out.join("sweep_coupling.csv"), "sweep-coupling", &out.points)?;
    write_json(&cfg.out.join("sweep_coupling.json"), &out)?;
    write_timing(cfg, "sweep-coupling", start)?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    /// `+1`/`-1`, or `0` for the full space of a parity-breaking model.
    pub sector: i64,
    pub i: usize,
    pub energy: f64,
    pub degenerate: bool,
}

/// Lowest `cfg.spectrum_states` levels of each parity sector, sorted by energy.
pub fn cmd_spectrum(cfg: &RunConfig) -> Result<Vec<SpectrumRow>> {
    cfg.validate()?;
    let spec = cfg.build_spec(cfg.size)?;
    let sectors: Vec<Option<Parity>> = if spec.conserves(SymmetryCharge::ProductZ) {
        vec![Some(Parity::Even), Some(Parity::Odd)]
    } else {
        vec![None]
    };
    let mut rows = Vec::new();
    for sector in sectors {
        for t in eigenstates(&spec, sector, cfg.spectrum_states)? {
            rows.push(SpectrumRow { sector: sector.map_or(0, Parity::charge), i: t.index, energy: t.energy, degenerate: t.degenerate });
        }
    }
    rows.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    write_csv(&cfg.out.join("spectrum.csv"), "spectrum", &rows)?;
    Ok(rows)
}

fn write_timing(cfg: &RunConfig, command: &str, start: Instant) -> Result<()> {
    let t = Timing { command: command.into(), wall_seconds: start.elapsed().as_secs_f64() };
    write_json(&cfg.out.join("timing.json"), &t)
}

/// Spearman rank correlation with average ranks for ties; `0` when either
/// column is constant or fewer than two points are given.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    if x.len() != y.len() || x.len() < 2 {
        return 0.0;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

/// Write `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// CSV with a leading `# scqaoa <table> v<version>` line.
pub fn write_csv<R: Serialize>(path: &Path, table: &str, rows: &[R]) -> Result<()> {
    let mut buf = format!("# scqaoa {table} v{CSV_SCHEMA_VERSION}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    write_atomic(path, &buf)
}

/// Read a table written by [`write_csv`], returning the header comment and rows.
pub fn read_csv<R: DeserializeOwned>(path: &Path) -> Result<(String, Vec<R>)> {
    let text = std::fs::read_to_string(path)?;
    let (first, body) = text.split_once('\n').unwrap_or((&text, ""));
    let comment = first
        .strip_prefix("# ")
        .ok_or_else(|| Error::Config(format!("{} lacks a schema comment", path.display())))?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let rows = r.deserialize().collect::<std::result::Result<Vec<R>, _>>()?;
    Ok((comment.to_string(), rows))
}

/// Process exit code: 1 configuration, 3 numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Eigensolver(_) | Error::CorrelationFit(_) | Error::Solve(_) => 3,
        _ => 1,
    }
}

pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Machine-readable error report.
pub fn error_report(e: &Error) -> serde_json::Value {
    let kind = format!("{e:?}");
    let kind = kind.split(['(', ' ', '{']).next().unwrap_or("Error").to_string();
    serde_json::json!({ "error": kind, "message": e.to_string(), "exit_code": exit_code(e) })
}
