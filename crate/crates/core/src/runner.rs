//! Scenario execution: named presets, flat config files, CSV output, and
//! parallel parameter sweeps.
//!
//! Output is meant to be a reproducibility artifact: configs are diff-able
//! key = value text, CSV bytes are identical across repeated runs of the
//! same configuration, and every run prints its regime report as comment
//! lines so a reader can tell at a glance which approximations were valid
//! at those parameters.

use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use thiserror::Error;

use crate::evolve::{
    default_step, propagate_lindblad, propagate_unitary, step_dividing, EvolveError, TimeGrid,
};
use crate::hilbert::{HilbertError, HilbertSpace, Level};
use crate::model::{
    collapse_operators, validate_regime, HamiltonianKind, ModelError, ModelParams, RegimeReport,
};
use crate::observe::{ObservableRecord, ObserveError};

/// Environment variable bounding sweep parallelism; unset or invalid means
/// machine parallelism.
pub const SWEEP_THREADS_VAR: &str = "BICAVITY_SWEEP_THREADS";

/// Fixed CSV column set, written for every scenario; quantities a scenario
/// does not produce stay as empty fields.
pub const CSV_HEADER: &str =
    "t,P_02,P_20,P_40,P_22,P_04,p_ground,entropy_bits,bell_fidelity,n_expect,trace";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Observe(#[from] ObserveError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// Process exit code: 2 for configuration problems, 3 for numerical
    /// invariant violations, 1 for plumbing failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Io(_) => 1,
            RunError::Config(_) | RunError::Model(_) | RunError::Hilbert(_) => 2,
            RunError::Observe(ObserveError::BellTargetOutOfRange { .. }) => 2,
            RunError::Observe(_) => 3,
            RunError::Evolve(e) => match e {
                EvolveError::NormDrift(_)
                | EvolveError::TraceDrift { .. }
                | EvolveError::NegativeEigenvalue { .. }
                | EvolveError::Linalg(_) => 3,
                _ => 2,
            },
        }
    }
}

/// A fully specified simulation: model tier, initial product state,
/// physical parameters, recording grid, and an optional Bell target.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub hamiltonian: HamiltonianKind,
    pub initial: (Level, usize, usize),
    pub params: ModelParams,
    pub grid: TimeGrid,
    pub bell_target_m: Option<usize>,
}

impl ScenarioConfig {
    /// The open-system integrator engages exactly when a decay rate is set.
    pub fn lindblad(&self) -> bool {
        self.params.kappa > 0.0 || self.params.gamma > 0.0
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.params.validate()?;
        let space = HilbertSpace::new(self.params.n_max, self.hamiltonian.atom_dim())?;
        let (level, m, n) = self.initial;
        space.level_index(level)?;
        if m + n > self.params.n_max {
            return Err(RunError::Config(format!(
                "initial state holds {} photons but n_max is {}; exchange would leak past the truncation",
                m + n,
                self.params.n_max
            )));
        }
        if let Some(target) = self.bell_target_m {
            if target > self.params.n_max {
                return Err(RunError::Config(format!(
                    "bell_m={} exceeds n_max={}",
                    target, self.params.n_max
                )));
            }
        }
        Ok(())
    }
}

/// Which parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Delta1,
    Delta2,
    DeltaSmall,
    Kappa,
    Gamma,
}

impl SweepAxis {
    fn apply(self, params: &mut ModelParams, value: f64) {
        match self {
            SweepAxis::Delta1 => params.delta_1 = value,
            SweepAxis::Delta2 => params.delta_2 = value,
            SweepAxis::DeltaSmall => params.delta_small = value,
            SweepAxis::Kappa => params.kappa = value,
            SweepAxis::Gamma => params.gamma = value,
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SweepAxis::Delta1 => "delta_1",
            SweepAxis::Delta2 => "delta_2",
            SweepAxis::DeltaSmall => "delta_small",
            SweepAxis::Kappa => "kappa",
            SweepAxis::Gamma => "gamma",
        };
        f.write_str(name)
    }
}

impl FromStr for SweepAxis {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "delta_1" => Ok(SweepAxis::Delta1),
            "delta_2" => Ok(SweepAxis::Delta2),
            "delta_small" => Ok(SweepAxis::DeltaSmall),
            "kappa" => Ok(SweepAxis::Kappa),
            "gamma" => Ok(SweepAxis::Gamma),
            other => Err(RunError::Config(format!(
                "unknown sweep axis '{other}' (expected delta_1, delta_2, delta_small, kappa, or gamma)"
            ))),
        }
    }
}

/// Summary statistic written per sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    PeakFidelity,
    PeakEntropy,
    TimeOfPeak,
}

impl fmt::Display for Reduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Reduction::PeakFidelity => "peak_fidelity",
            Reduction::PeakEntropy => "peak_entropy",
            Reduction::TimeOfPeak => "time_of_peak",
        };
        f.write_str(name)
    }
}

impl FromStr for Reduction {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "peak_fidelity" => Ok(Reduction::PeakFidelity),
            "peak_entropy" => Ok(Reduction::PeakEntropy),
            "time_of_peak" => Ok(Reduction::TimeOfPeak),
            other => Err(RunError::Config(format!(
                "unknown reduction '{other}' (expected peak_fidelity, peak_entropy, or time_of_peak)"
            ))),
        }
    }
}

/// One scenario re-run across a list of values on one parameter axis.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub base: ScenarioConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub reduction: Reduction,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        self.base.validate()?;
        if self.values.is_empty() {
            return Err(RunError::Config("sweep values list is empty".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(RunError::Config("sweep values must be finite".into()));
        }
        if self.reduction == Reduction::PeakFidelity && self.base.bell_target_m.is_none() {
            return Err(RunError::Config(
                "reduction peak_fidelity needs bell_m set on the base scenario".into(),
            ));
        }
        Ok(())
    }

    fn point(&self, value: f64) -> ScenarioConfig {
        let mut config = self.base.clone();
        self.axis.apply(&mut config.params, value);
        config
    }
}

/// Named preset scenarios at the standard working points: adiabatic
/// (delta 20, pair detuning 5) and fast (8, 3), each from a two-photon or
/// four-photon initial state, closed or with cavity decay.
pub fn builtin_scenario(name: &str) -> Result<ScenarioConfig, RunError> {
    let adiabatic = ModelParams {
        g: 1.0,
        delta_1: 20.0,
        delta_2: 20.0,
        delta_small: 5.0,
        kappa: 0.0,
        gamma: 0.0,
        n_max: 2,
    };
    let fast = ModelParams {
        delta_1: 8.0,
        delta_2: 8.0,
        delta_small: 3.0,
        ..adiabatic
    };
    let long_grid = TimeGrid::new(0.0, 1600.0, 1600).expect("static grid");
    let short_grid = TimeGrid::new(0.0, 160.0, 800).expect("static grid");

    let (params, initial, grid, bell) = match name {
        "fig2" => (adiabatic, (Level::G, 0, 2), long_grid, 2),
        "fig3" => (ModelParams { n_max: 4, ..adiabatic }, (Level::G, 4, 0), long_grid, 4),
        "fig4" => (fast, (Level::G, 0, 2), short_grid, 2),
        "fig5" => (ModelParams { n_max: 4, ..fast }, (Level::G, 4, 0), short_grid, 4),
        "fig6" => (ModelParams { kappa: 0.005, ..fast }, (Level::G, 0, 2), short_grid, 2),
        "fig7" => (
            ModelParams { kappa: 0.005, n_max: 4, ..fast },
            (Level::G, 4, 0),
            short_grid,
            4,
        ),
        other => {
            return Err(RunError::Config(format!(
                "unknown scenario '{other}' (expected fig2 through fig7)"
            )))
        }
    };
    Ok(ScenarioConfig {
        name: name.to_string(),
        hamiltonian: HamiltonianKind::Full,
        initial,
        params,
        grid,
        bell_target_m: Some(bell),
    })
}

/// Parse a flat key = value document. '#' starts a comment, blank lines are
/// skipped, keys may appear once.
fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, RunError> {
    let mut map = BTreeMap::new();
    for (number, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(RunError::Config(format!(
                "line {}: expected key = value, got '{raw}'",
                number + 1
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if map.insert(key.clone(), value).is_some() {
            return Err(RunError::Config(format!("line {}: duplicate key '{key}'", number + 1)));
        }
    }
    Ok(map)
}

const SCENARIO_KEYS: &[&str] = &[
    "scenario",
    "hamiltonian",
    "atom",
    "m",
    "n",
    "delta1",
    "delta2",
    "delta_small",
    "kappa",
    "gamma",
    "n_max",
    "t_end",
    "n_points",
    "bell_m",
];
const SWEEP_KEYS: &[&str] = &["axis", "values", "reduction"];

fn parse_value<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, RunError>
where
    T::Err: fmt::Display,
{
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|e| RunError::Config(format!("key '{key}': {e}"))),
    }
}

fn require<T>(value: Option<T>, key: &str) -> Result<T, RunError> {
    value.ok_or_else(|| RunError::Config(format!("missing key '{key}' (no scenario named to default from)")))
}

fn scenario_from_map(
    map: &BTreeMap<String, String>,
    scenario_flag: Option<&str>,
    allow_sweep_keys: bool,
) -> Result<ScenarioConfig, RunError> {
    for key in map.keys() {
        let known = SCENARIO_KEYS.contains(&key.as_str())
            || (allow_sweep_keys && SWEEP_KEYS.contains(&key.as_str()));
        if !known {
            return Err(RunError::Config(format!("unknown key '{key}'")));
        }
    }

    // A named preset provides defaults; explicit keys override it. The
    // command-line name takes precedence over the file's.
    let preset = match scenario_flag {
        Some(name) => Some(name.to_string()),
        None => map.get("scenario").cloned(),
    };

    let hamiltonian = parse_value::<HamiltonianKind>(map, "hamiltonian")?;
    let atom = parse_value::<Level>(map, "atom")?;
    let m = parse_value::<usize>(map, "m")?;
    let n = parse_value::<usize>(map, "n")?;
    let delta_1 = parse_value::<f64>(map, "delta1")?;
    let delta_2 = parse_value::<f64>(map, "delta2")?;
    let delta_small = parse_value::<f64>(map, "delta_small")?;
    let kappa = parse_value::<f64>(map, "kappa")?;
    let gamma = parse_value::<f64>(map, "gamma")?;
    let n_max = parse_value::<usize>(map, "n_max")?;
    let t_end = parse_value::<f64>(map, "t_end")?;
    let n_points = parse_value::<usize>(map, "n_points")?;
    let bell_m = parse_value::<usize>(map, "bell_m")?;

    let mut config = match preset {
        Some(name) => builtin_scenario(&name)?,
        None => ScenarioConfig {
            name: "custom".to_string(),
            hamiltonian: require(hamiltonian, "hamiltonian")?,
            initial: (
                require(atom, "atom")?,
                require(m, "m")?,
                require(n, "n")?,
            ),
            params: ModelParams {
                g: 1.0,
                delta_1: require(delta_1, "delta1")?,
                delta_2: require(delta_2, "delta2")?,
                delta_small: require(delta_small, "delta_small")?,
                kappa: kappa.unwrap_or(0.0),
                gamma: gamma.unwrap_or(0.0),
                n_max: require(n_max, "n_max")?,
            },
            grid: TimeGrid::new(0.0, require(t_end, "t_end")?, require(n_points, "n_points")?)?,
            bell_target_m: bell_m,
        },
    };

    // Presets already populated everything; apply the explicit overrides.
    if let Some(v) = hamiltonian {
        config.hamiltonian = v;
    }
    if let Some(v) = atom {
        config.initial.0 = v;
    }
    if let Some(v) = m {
        config.initial.1 = v;
    }
    if let Some(v) = n {
        config.initial.2 = v;
    }
    if let Some(v) = delta_1 {
        config.params.delta_1 = v;
    }
    if let Some(v) = delta_2 {
        config.params.delta_2 = v;
    }
    if let Some(v) = delta_small {
        config.params.delta_small = v;
    }
    if let Some(v) = kappa {
        config.params.kappa = v;
    }
    if let Some(v) = gamma {
        config.params.gamma = v;
    }
    if let Some(v) = n_max {
        config.params.n_max = v;
    }
    let grid_changed = t_end.is_some() || n_points.is_some();
    if grid_changed {
        config.grid = TimeGrid::new(
            config.grid.t_start,
            t_end.unwrap_or(config.grid.t_end),
            n_points.unwrap_or(config.grid.n_points),
        )?;
    }
    if let Some(v) = bell_m {
        config.bell_target_m = Some(v);
    }
    config.validate()?;
    Ok(config)
}

/// Build a scenario from an optional config document and an optional named
/// preset from the command line.
pub fn scenario_from_config(
    config_text: Option<&str>,
    scenario_flag: Option<&str>,
) -> Result<ScenarioConfig, RunError> {
    if config_text.is_none() && scenario_flag.is_none() {
        return Err(RunError::Config(
            "nothing to run: name a scenario or provide a config file".into(),
        ));
    }
    let map = match config_text {
        Some(text) => parse_pairs(text)?,
        None => BTreeMap::new(),
    };
    scenario_from_map(&map, scenario_flag, false)
}

/// Build a sweep from its config document: scenario keys plus `axis`,
/// `values` (comma separated), and `reduction`.
pub fn sweep_from_config(config_text: &str) -> Result<SweepConfig, RunError> {
    let map = parse_pairs(config_text)?;
    let base = scenario_from_map(&map, None, true)?;
    let axis: SweepAxis = require(map.get("axis"), "axis")?.parse()?;
    let reduction: Reduction = require(map.get("reduction"), "reduction")?.parse()?;
    let raw_values = require(map.get("values"), "values")?;
    let values = raw_values
        .split(',')
        .map(|piece| {
            piece
                .trim()
                .parse::<f64>()
                .map_err(|e| RunError::Config(format!("values entry '{}': {e}", piece.trim())))
        })
        .collect::<Result<Vec<f64>, RunError>>()?;
    let sweep = SweepConfig {
        base,
        axis,
        values,
        reduction,
    };
    sweep.validate()?;
    Ok(sweep)
}

/// Propagate one scenario and measure every observable at each grid point.
/// Also returns the integrator step for open runs, for the output header.
pub fn simulate_records(config: &ScenarioConfig) -> Result<(Vec<ObservableRecord>, Option<f64>), RunError> {
    config.validate()?;
    let space = HilbertSpace::new(config.params.n_max, config.hamiltonian.atom_dim())?;
    let h = config.hamiltonian.build(&config.params, space)?;
    let (level, m, n) = config.initial;
    let psi0 = space.basis_state(level, m, n)?;

    let (trajectory, step) = if config.lindblad() {
        let c_ops = collapse_operators(&config.params, space)?;
        let step = step_dividing(config.grid.spacing(), default_step(&h, &c_ops)?);
        let run = propagate_lindblad(&h, &c_ops, &psi0.to_density(), config.grid, step)?;
        (run, Some(step))
    } else {
        (propagate_unitary(&h, &psi0, config.grid)?, None)
    };

    let times = config.grid.times();
    let mut records = Vec::with_capacity(trajectory.states.len());
    for (state, t) in trajectory.states.iter().zip(times) {
        records.push(ObservableRecord::measure(state, t, config.bell_target_m)?);
    }
    Ok((records, step))
}

fn field(value: Option<f64>) -> String {
    match value {
        Some(v) => v.to_string(),
        None => String::new(),
    }
}

fn write_header(
    out: &mut impl Write,
    config: &ScenarioConfig,
    step: Option<f64>,
    regime: &RegimeReport,
) -> Result<(), RunError> {
    writeln!(out, "# scenario = {}", config.name)?;
    writeln!(out, "# hamiltonian = {}", config.hamiltonian)?;
    let (level, m, n) = config.initial;
    writeln!(out, "# initial = ({level}, {m}, {n})")?;
    let p = &config.params;
    writeln!(
        out,
        "# params: g = {}, delta_1 = {}, delta_2 = {}, delta_small = {}, kappa = {}, gamma = {}, n_max = {}",
        p.g, p.delta_1, p.delta_2, p.delta_small, p.kappa, p.gamma, p.n_max
    )?;
    writeln!(
        out,
        "# grid: t in [{}, {}], {} points",
        config.grid.t_start, config.grid.t_end, config.grid.n_points
    )?;
    match step {
        Some(s) => writeln!(out, "# integrator: fixed-step open-system, step = {s}")?,
        None => writeln!(out, "# integrator: eigendecomposition, exact")?,
    }
    for (name, check) in regime.checks() {
        writeln!(
            out,
            "# regime: {} = {:.6} ({})",
            name,
            check.value,
            if check.pass { "pass" } else { "fail" }
        )?;
    }
    Ok(())
}

/// Run one scenario, writing comment headers, the fixed CSV header, and one
/// row per grid point.
pub fn run(config: &ScenarioConfig, out: &mut impl Write) -> Result<(), RunError> {
    let (records, step) = simulate_records(config)?;
    let regime = validate_regime(&config.params);
    write_header(out, config, step, &regime)?;
    writeln!(out, "{CSV_HEADER}")?;
    for r in &records {
        let pop = |m: usize, n: usize| r.pop.get(&(m, n)).copied();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            field(pop(0, 2)),
            field(pop(2, 0)),
            field(pop(4, 0)),
            field(pop(2, 2)),
            field(pop(0, 4)),
            r.p_ground,
            r.entropy_bits,
            field(r.bell_fidelity),
            r.n_expect,
            field(r.trace),
        )?;
    }
    Ok(())
}

fn reduce(records: &[ObservableRecord], reduction: Reduction, has_bell: bool) -> f64 {
    let fidelity_peak = || {
        records
            .iter()
            .filter_map(|r| r.bell_fidelity)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    match reduction {
        Reduction::PeakFidelity => fidelity_peak(),
        Reduction::PeakEntropy => records.iter().map(|r| r.entropy_bits).fold(f64::NEG_INFINITY, f64::max),
        Reduction::TimeOfPeak => {
            // Peak of the fidelity when a target exists, of the entropy
            // otherwise; first time wins on exact ties.
            let key = |r: &ObservableRecord| {
                if has_bell {
                    r.bell_fidelity.unwrap_or(f64::NEG_INFINITY)
                } else {
                    r.entropy_bits
                }
            };
            let mut best = (f64::NEG_INFINITY, 0.0);
            for r in records {
                let k = key(r);
                if k > best.0 {
                    best = (k, r.t);
                }
            }
            best.1
        }
    }
}

/// Run each sweep point, possibly in parallel, and write one summary row
/// per value, ordered by value. A failing point writes a `failed` row and
/// a diagnostic comment instead of aborting its siblings.
pub fn run_sweep(sweep: &SweepConfig, out: &mut impl Write) -> Result<(), RunError> {
    sweep.validate()?;
    let has_bell = sweep.base.bell_target_m.is_some();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(SWEEP_THREADS_VAR) {
        if let Ok(threads) = raw.trim().parse::<usize>() {
            if threads > 0 {
                builder = builder.num_threads(threads);
            }
        }
    }
    let pool = builder
        .build()
        .map_err(|e| RunError::Config(format!("sweep thread pool: {e}")))?;

    let mut outcomes: Vec<(f64, Result<f64, RunError>)> = pool.install(|| {
        sweep
            .values
            .par_iter()
            .map(|&value| {
                let point = sweep.point(value);
                let outcome = simulate_records(&point)
                    .map(|(records, _)| reduce(&records, sweep.reduction, has_bell));
                (value, outcome)
            })
            .collect()
    });
    outcomes.sort_by(|a, b| a.0.total_cmp(&b.0));

    writeln!(out, "# sweep: axis = {}, reduction = {}", sweep.axis, sweep.reduction)?;
    writeln!(out, "# base scenario = {}", sweep.base.name)?;
    for (value, outcome) in &outcomes {
        if let Err(e) = outcome {
            writeln!(out, "# point {value} failed: {e}")?;
        }
    }
    writeln!(out, "{},{}", sweep.axis, sweep.reduction)?;
    for (value, outcome) in &outcomes {
        match outcome {
            Ok(result) => writeln!(out, "{value},{result}")?,
            Err(_) => writeln!(out, "{value},failed")?,
        }
    }
    Ok(())
}
