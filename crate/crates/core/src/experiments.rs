//! End-to-end studies behind the command-line tool.
//!
//! Every physical value in an [`ExperimentConfig`] file is SI; conversion to
//! internal units happens here. Each `run_*` computes, then writes CSV and
//! JSON under `output.dir`, tagging every JSON file with a content hash of
//! the effective configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::ansatz::{synthesize_waveform, AnsatzOrder, DesignDescriptor, ProtocolDesign, WaveformDiagnostics};
use crate::classical::{self, ClassicalOptions, ClassicalRun, ExcitationReport, Integrator};
use crate::error::{Error, Result};
use crate::nelder_mead::NelderMeadOptions;
use crate::potential;
use crate::quantum::{self, GridSpec, QuantumOptions, QuantumRun};
use crate::reference::ReferenceRamp;
use crate::schedule::ControlSchedule;
use crate::shooting::{self, Objective, ShootOptions, ShootTemplate, ShootingResult};
use crate::units::{TrapInput, TrapSpec, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Design,
    Simulate,
    ExcitationCurve,
    TcritTable,
    BiasSweep,
    ReferenceCompare,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Design => "design",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::ExcitationCurve => "excitation-curve",
            ExperimentKind::TcritTable => "tcrit-table",
            ExperimentKind::BiasSweep => "bias-sweep",
            ExperimentKind::ReferenceCompare => "reference-compare",
        }
    }

    /// Engine used when the config leaves it open.
    pub fn default_engine(self) -> Engine {
        match self {
            ExperimentKind::Simulate => Engine::Quantum,
            _ => Engine::Classical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Classical,
    Quantum,
    Both,
}

impl Engine {
    fn classical(self) -> bool {
        self != Engine::Quantum
    }
    fn quantum(self) -> bool {
        self != Engine::Classical
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    #[default]
    Sta,
    Reference,
}

/// Uniform duration range, both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DurationRange {
    pub start_s: f64,
    pub stop_s: f64,
    pub step_s: f64,
}

impl DurationRange {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.start_s > 0.0 && self.stop_s >= self.start_s && self.step_s > 0.0) {
            return Err(Error::InvalidInput(format!("bad duration range {self:?}")));
        }
        let n = ((self.stop_s - self.start_s) / self.step_s + 1e-9).floor() as usize + 1;
        if n > 100_000 {
            return Err(Error::InvalidInput("duration range has too many points".into()));
        }
        Ok((0..n).map(|i| self.start_s + i as f64 * self.step_s).collect())
    }
}

/// How single designs are reached: cold start at `anchor_cycles` (in units of
/// the trap period) and warm-started steps of at most `max_step_cycles` down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Continuation {
    pub anchor_cycles: f64,
    pub max_step_cycles: f64,
}

impl Default for Continuation {
    fn default() -> Self {
        Continuation { anchor_cycles: 12.0, max_step_cycles: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    pub t_f_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_f_list_s: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_f_range_s: Option<DurationRange>,
    pub order: AnsatzOrder,
    pub objective: Objective,
    /// Objective of the order-12 curve in `excitation-curve`.
    pub order12_objective: Objective,
    pub expansion_factor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_params: Option<Vec<f64>>,
    /// Replay a design JSON instead of shooting.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design_file: Option<PathBuf>,
    pub center_steps: usize,
    pub max_iters: usize,
    pub continuation: Continuation,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            kind: ProtocolKind::Sta,
            t_f_s: 5.2e-6,
            t_f_list_s: None,
            t_f_range_s: None,
            order: AnsatzOrder::Eleven,
            objective: Objective::Plain,
            order12_objective: Objective::Perturbative,
            expansion_factor: 10.0,
            initial_params: None,
            design_file: None,
            center_steps: shooting::DEFAULT_CENTER_STEPS,
            max_iters: NelderMeadOptions::default().max_iters,
            continuation: Continuation::default(),
        }
    }
}

impl ProtocolConfig {
    /// The explicit list, else the range, else `default`.
    pub fn durations(&self, default: &[f64]) -> Result<Vec<f64>> {
        let v = match (&self.t_f_list_s, &self.t_f_range_s) {
            (Some(l), _) => l.clone(),
            (None, Some(r)) => r.values()?,
            (None, None) => default.to_vec(),
        };
        if v.is_empty() || v.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidInput("durations must be positive and finite".into()));
        }
        Ok(v)
    }

    fn shoot_options(&self) -> ShootOptions {
        ShootOptions {
            simplex: NelderMeadOptions { max_iters: self.max_iters, ..Default::default() },
            center_steps: self.center_steps,
            initial: None,
            samples: 1000,
        }
    }
}

/// Explicit quantum grid; half-widths in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nq: usize,
    pub ny: usize,
    pub q_half_m: f64,
    pub y_half_m: f64,
}

impl GridConfig {
    pub fn to_internal(&self, trap: &TrapSpec) -> GridSpec {
        GridSpec {
            nq: self.nq,
            q_half: trap.from_si(self.q_half_m, Unit::Length),
            ny: self.ny,
            y_half: trap.from_si(self.y_half_m, Unit::Length),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// `None` picks the experiment's default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub engine: Option<Engine>,
    pub classical_steps: usize,
    pub integrator: Integrator,
    pub trajectory_samples: usize,
    pub quantum_steps: usize,
    /// `None` fits a grid to a classical pre-run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    pub waveform_samples: usize,
    /// Tilt force on each ion for `simulate`, newtons.
    pub lambda_n: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            engine: None,
            classical_steps: classical::DEFAULT_STEPS,
            integrator: Integrator::Rk4,
            trajectory_samples: 2000,
            quantum_steps: quantum::DEFAULT_STEPS,
            grid: None,
            waveform_samples: crate::ansatz::DEFAULT_SAMPLES,
            lambda_n: 0.0,
        }
    }
}

/// Tilts for `bias-sweep`: forces in newtons, or target well-energy
/// differences in units of `hbar omega0`. Forces win when both are given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BiasConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_n: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_e_quanta: Option<Vec<f64>>,
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig {
            lambda_n: None,
            delta_e_quanta: Some(vec![0.0, 125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TcritConfig {
    pub omega0_hz: Vec<f64>,
    pub threshold_quanta: f64,
    pub tolerance_s: f64,
    /// Bisection bracket as `t_f * omega0 / 2pi`.
    pub bracket_cycles: [f64; 2],
}

impl Default for TcritConfig {
    fn default() -> Self {
        TcritConfig {
            omega0_hz: vec![3.0e6, 2.0e6, 1.2e6, 0.8e6],
            threshold_quanta: 0.1,
            tolerance_s: 1e-7,
            bracket_cycles: [6.0, 12.0],
        }
    }
}

/// Smoothstep order of the reference `alpha` ramp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmoothOrder {
    /// Lowest order that keeps both modes bound.
    #[default]
    Auto,
    Fixed(u32),
}

impl Serialize for SmoothOrder {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SmoothOrder::Auto => s.serialize_str("auto"),
            SmoothOrder::Fixed(n) => s.serialize_u32(*n),
        }
    }
}

impl<'de> Deserialize<'de> for SmoothOrder {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::String(s) if s == "auto" => Ok(SmoothOrder::Auto),
            Value::Number(n) => n
                .as_u64()
                .filter(|n| *n >= 2 && *n <= 64)
                .map(|n| SmoothOrder::Fixed(n as u32))
                .ok_or_else(|| serde::de::Error::custom("smooth_order must be an integer >= 2 or \"auto\"")),
            _ => Err(serde::de::Error::custom("smooth_order must be an integer >= 2 or \"auto\"")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    pub smooth_order: SmoothOrder,
    pub threshold_quanta: f64,
    /// Bracket for the reference ramp's threshold search, seconds.
    pub bracket_s: [f64; 2],
    pub tolerance_s: f64,
    /// Bracket for the designed protocol's threshold, in trap periods.
    pub sta_bracket_cycles: [f64; 2],
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            smooth_order: SmoothOrder::Auto,
            threshold_quanta: 1.0,
            bracket_s: [5e-6, 500e-6],
            tolerance_s: 1e-6,
            sta_bracket_cycles: [4.0, 12.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

fn default_trap() -> TrapInput {
    TrapInput { species: Some("Be9+".into()), mass_kg: None, charge_c: None, omega0_hz: 2.0e6 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; must match the subcommand when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(default = "default_trap")]
    pub trap: TrapInput,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub bias: BiasConfig,
    #[serde(default)]
    pub tcrit: TcritConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            trap: default_trap(),
            protocol: ProtocolConfig::default(),
            simulation: SimulationConfig::default(),
            bias: BiasConfig::default(),
            tcrit: TcritConfig::default(),
            reference: ReferenceConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Set `path` (dot-separated) inside a JSON object, creating objects as needed.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::InvalidInput(format!("bad override path `{path}`")));
    }
    for key in &keys[..keys.len() - 1] {
        if !cur.is_object() {
            return Err(Error::InvalidInput(format!("override `{path}` descends into a non-object")));
        }
        cur = cur.as_object_mut().unwrap().entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    match cur.as_object_mut() {
        Some(obj) => {
            obj.insert(keys[keys.len() - 1].to_string(), value);
            Ok(())
        }
        None => Err(Error::InvalidInput(format!("override `{path}` descends into a non-object"))),
    }
}

/// Recursive object merge; non-object values in `over` replace.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Parse an override value: JSON if it parses, a bare string otherwise.
pub fn parse_override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl ExperimentConfig {
    /// Defaults, merged with the file at `path`, then `overrides`; validated.
    pub fn load(path: Option<&Path>, overrides: &[(String, Value)], kind: ExperimentKind) -> Result<Self> {
        let mut root = serde_json::to_value(ExperimentConfig::default())?;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::InvalidInput(format!("cannot read config {}: {e}", p.display())))?;
            let file: Value = serde_json::from_str(&text)?;
            if !file.is_object() {
                return Err(Error::InvalidInput("config file must hold a JSON object".into()));
            }
            merge(&mut root, file);
        }
        for (k, v) in overrides {
            set_path(&mut root, k, v.clone())?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(root)?;
        cfg.validate(kind)?;
        Ok(ExperimentConfig { experiment: Some(kind), ..cfg })
    }

    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        if let Some(k) = self.experiment {
            if k != kind {
                return Err(Error::InvalidInput(format!(
                    "config is for `{}` but `{}` was requested",
                    k.name(),
                    kind.name()
                )));
            }
        }
        self.trap.build()?;
        let p = &self.protocol;
        if !(p.t_f_s > 0.0 && p.t_f_s.is_finite()) {
            return Err(Error::InvalidInput(format!("t_f_s must be positive, got {}", p.t_f_s)));
        }
        if !(p.expansion_factor > 1.0 && p.expansion_factor.is_finite()) {
            return Err(Error::InvalidInput("expansion_factor must exceed 1".into()));
        }
        if p.center_steps == 0 || p.max_iters == 0 {
            return Err(Error::InvalidInput("center_steps and max_iters must be positive".into()));
        }
        if !(p.continuation.anchor_cycles > 0.0 && p.continuation.max_step_cycles > 0.0) {
            return Err(Error::InvalidInput("continuation cycles must be positive".into()));
        }
        p.durations(&[p.t_f_s])?;
        if let Some(v) = &p.initial_params {
            if v.len() != p.order.free_count() {
                return Err(Error::WrongParameterCount { expected: p.order.free_count(), got: v.len() });
            }
        }
        if p.objective == Objective::Perturbative && p.order != AnsatzOrder::Twelve {
            return Err(Error::InvalidInput("the perturbative objective needs order 12".into()));
        }
        if p.order12_objective == Objective::Residual {
            return Err(Error::InvalidInput("order12_objective must be plain or perturbative".into()));
        }
        let s = &self.simulation;
        if s.classical_steps == 0 || s.quantum_steps == 0 {
            return Err(Error::InvalidInput("step counts must be positive".into()));
        }
        if s.waveform_samples < 1001 {
            return Err(Error::InvalidInput("waveform_samples must be at least 1001".into()));
        }
        if !s.lambda_n.is_finite() {
            return Err(Error::InvalidInput("lambda_n must be finite".into()));
        }
        if let Some(g) = &s.grid {
            if !(g.q_half_m > 0.0 && g.y_half_m > 0.0) {
                return Err(Error::InvalidInput("grid half-widths must be positive".into()));
            }
            GridSpec { nq: g.nq, q_half: 1.0, ny: g.ny, y_half: 1.0 }.validate()?;
        }
        let b = &self.bias;
        let lists = [&b.lambda_n, &b.delta_e_quanta];
        if lists.iter().all(|l| l.is_none()) && kind == ExperimentKind::BiasSweep {
            return Err(Error::InvalidInput("bias sweep needs lambda_n or delta_e_quanta".into()));
        }
        for l in lists.into_iter().flatten() {
            if l.is_empty() || l.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput("bias lists must be non-empty and finite".into()));
            }
        }
        let t = &self.tcrit;
        if t.omega0_hz.is_empty() || t.omega0_hz.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::InvalidInput("tcrit.omega0_hz must be a non-empty list of positive values".into()));
        }
        check_bracket(t.bracket_cycles, t.tolerance_s, t.threshold_quanta)?;
        let r = &self.reference;
        check_bracket(r.bracket_s, r.tolerance_s, r.threshold_quanta)?;
        check_bracket(r.sta_bracket_cycles, r.tolerance_s, r.threshold_quanta)?;
        Ok(())
    }

    pub fn trap(&self) -> Result<TrapSpec> {
        self.trap.build()
    }

    pub fn engine(&self, kind: ExperimentKind) -> Engine {
        self.simulation.engine.unwrap_or(kind.default_engine())
    }

    /// Git-style content hash: SHA-256 of `"blob <len>\0" + canonical JSON`.
    pub fn content_hash(&self) -> String {
        let body = serde_json::to_vec(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", body.len()).as_bytes());
        h.update(&body);
        hex::encode(h.finalize())
    }

    fn classical_options(&self) -> ClassicalOptions {
        ClassicalOptions {
            steps: self.simulation.classical_steps,
            integrator: self.simulation.integrator,
            samples: 0,
        }
    }

    fn quantum_options(&self, trap: &TrapSpec) -> QuantumOptions {
        QuantumOptions {
            grid: self.simulation.grid.map(|g| g.to_internal(trap)),
            steps: self.simulation.quantum_steps,
            ..Default::default()
        }
    }

    fn smooth_order(&self, trap: &TrapSpec) -> Result<u32> {
        match self.reference.smooth_order {
            SmoothOrder::Auto => ReferenceRamp::min_stable_order(trap, self.protocol.expansion_factor),
            SmoothOrder::Fixed(n) => Ok(n),
        }
    }
}

fn check_bracket(b: [f64; 2], tol: f64, threshold: f64) -> Result<()> {
    if !(b[0] > 0.0 && b[1] > b[0] && tol > 0.0 && threshold > 0.0) {
        return Err(Error::InvalidInput(format!("bad bracket {b:?} / tolerance {tol} / threshold {threshold}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// designed protocols

/// Solves designed protocols on one continuation branch.
#[derive(Debug, Clone)]
pub struct StaSolver {
    pub trap: TrapSpec,
    pub order: AnsatzOrder,
    pub objective: Objective,
    pub expansion_factor: f64,
    pub options: ShootOptions,
    pub continuation: Continuation,
}

impl StaSolver {
    pub fn from_config(cfg: &ExperimentConfig, trap: &TrapSpec) -> Self {
        let p = &cfg.protocol;
        let mut options = p.shoot_options();
        options.initial = p.initial_params.clone();
        StaSolver {
            trap: trap.clone(),
            order: p.order,
            objective: p.objective,
            expansion_factor: p.expansion_factor,
            options,
            continuation: p.continuation,
        }
    }

    fn cycles_to_s(&self, c: f64) -> f64 {
        c / self.trap.omega0_hz()
    }

    fn template(&self, t_f: f64) -> ShootTemplate {
        ShootTemplate { trap: self.trap.clone(), t_f, expansion_factor: self.expansion_factor, order: self.order }
    }

    fn shoot_at(&self, t_f: f64, warm: Option<&[f64]>) -> Result<ShootingResult> {
        let mut opts = self.options.clone();
        if let Some(w) = warm {
            opts.initial = Some(w.to_vec());
        }
        shooting::shoot(&self.template(t_f), self.objective, &opts)
    }

    /// Walk from `from` down (or up) to `t_f` in steps no longer than the
    /// continuation step, warm-starting each search.
    pub fn continue_to(&self, from: &ShootingResult, t_f: f64) -> Result<ShootingResult> {
        let step = self.cycles_to_s(self.continuation.max_step_cycles);
        let n = ((from.t_f_s - t_f).abs() / step).ceil().max(1.0) as usize;
        let mut cur = from.clone();
        for k in 1..=n {
            let t = if k == n { t_f } else { from.t_f_s + (t_f - from.t_f_s) * k as f64 / n as f64 };
            cur = self.shoot_at(t, Some(&cur.free_params))?;
        }
        Ok(cur)
    }

    /// Designs for every duration, in input order. Durations at or below the
    /// anchor share one branch reached by continuation from the anchor;
    /// longer ones are solved from the configured start.
    pub fn solve(&self, durations: &[f64]) -> Result<Vec<ShootingResult>> {
        let anchor = self.cycles_to_s(self.continuation.anchor_cycles);
        let mut out: Vec<Option<ShootingResult>> = vec![None; durations.len()];
        let mut idx: Vec<usize> = (0..durations.len()).collect();
        idx.sort_by(|&a, &b| durations[b].total_cmp(&durations[a]));
        let mut branch: Option<ShootingResult> = None;
        for i in idx {
            let t = durations[i];
            let res = if t > anchor {
                self.shoot_at(t, None)?
            } else {
                let prev = match branch.take() {
                    Some(b) => b,
                    None => self.shoot_at(anchor, None)?,
                };
                let r = if prev.t_f_s == t { prev } else { self.continue_to(&prev, t)? };
                branch = Some(r.clone());
                r
            };
            out[i] = Some(res);
        }
        Ok(out.into_iter().map(|r| r.expect("every duration visited")).collect())
    }

    pub fn design(&self, res: &ShootingResult) -> Result<ProtocolDesign> {
        res.design(&self.template(res.t_f_s))
    }

    /// Order-12 search seeded from an order-11 optimum with `c12 = 0`.
    pub fn refine_order12(&self, r11: &ShootingResult, objective: Objective) -> Result<ShootingResult> {
        if r11.order != AnsatzOrder::Eleven {
            return Err(Error::InvalidInput("order-12 refinement starts from an order-11 design".into()));
        }
        let template = ShootTemplate { order: AnsatzOrder::Twelve, ..self.template(r11.t_f_s) };
        let opts = ShootOptions {
            initial: Some(vec![r11.free_params[0], r11.free_params[1], 0.0]),
            ..self.options.clone()
        };
        shooting::shoot(&template, objective, &opts)
    }
}

/// Designed protocol of a config: the replayed design file, else a fresh
/// single-point solve.
pub fn resolve_design(cfg: &ExperimentConfig, trap: &TrapSpec) -> Result<(ProtocolDesign, Option<ShootingResult>)> {
    if let Some(path) = &cfg.protocol.design_file {
        let desc = load_descriptor(path)?;
        return Ok((ProtocolDesign::from_descriptor(&desc)?, None));
    }
    let solver = StaSolver::from_config(cfg, trap);
    let res = solver.solve(&[cfg.protocol.t_f_s])?.remove(0);
    Ok((solver.design(&res)?, Some(res)))
}

/// Read a descriptor from a bare descriptor file or from a `design` output.
pub fn load_descriptor(path: &Path) -> Result<DesignDescriptor> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read design {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)?;
    let inner = v.pointer("/results/design").cloned().unwrap_or(v);
    Ok(serde_json::from_value(inner)?)
}

// ---------------------------------------------------------------------------
// excitation of one schedule

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointExcitation {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classical: Option<ExcitationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantum: Option<ExcitationReport>,
}

impl PointExcitation {
    /// Quantum value when available, classical otherwise.
    pub fn quanta(&self) -> f64 {
        self.quantum.or(self.classical).map(|r| r.excitation_quanta).unwrap_or(f64::NAN)
    }

    pub fn classical_quanta(&self) -> Option<f64> {
        self.classical.map(|r| r.excitation_quanta)
    }

    pub fn quantum_quanta(&self) -> Option<f64> {
        self.quantum.map(|r| r.excitation_quanta)
    }
}

pub fn excite<S: ControlSchedule + ?Sized>(
    schedule: &S,
    trap: &TrapSpec,
    lambda: f64,
    engine: Engine,
    cfg: &ExperimentConfig,
) -> Result<PointExcitation> {
    let classical = if engine.classical() {
        Some(classical::propagate_classical(schedule, trap, None, lambda, &cfg.classical_options())?.report)
    } else {
        None
    };
    let quantum = if engine.quantum() {
        Some(quantum::simulate_quantum(schedule, trap, lambda, &cfg.quantum_options(trap))?.report)
    } else {
        None
    };
    Ok(PointExcitation { classical, quantum })
}

// ---------------------------------------------------------------------------
// output plumbing

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub experiment: ExperimentKind,
    pub version: &'static str,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub labels: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(cfg: &ExperimentConfig, kind: ExperimentKind) -> Self {
        let mut labels = BTreeMap::new();
        labels.insert("units".into(), "SI columns carry a unit suffix; _internal columns use hbar = m = omega0 = 1".into());
        labels.insert(
            "excitation_reference".into(),
            "classical: minimum of the final (tilted) potential; quantum: imaginary-time ground state of the final potential".into(),
        );
        labels.insert(
            "branch".into(),
            format!(
                "cold start at {} trap periods, warm-started steps of at most {} periods",
                cfg.protocol.continuation.anchor_cycles, cfg.protocol.continuation.max_step_cycles
            ),
        );
        Provenance {
            experiment: kind,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: cfg.content_hash(),
            config: cfg.clone(),
            labels,
        }
    }

    fn label(mut self, k: &str, v: String) -> Self {
        self.labels.insert(k.into(), v);
        self
    }
}

#[derive(Debug, Clone, Serialize)]
struct Envelope<'a, T: Serialize> {
    provenance: &'a Provenance,
    results: &'a T,
}

fn write_json<T: Serialize>(path: &Path, prov: &Provenance, results: &T) -> Result<()> {
    let f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), &Envelope { provenance: prov, results })?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// What a run left behind.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    /// False when any shooting search stopped before converging.
    pub converged: bool,
    pub outputs: Vec<PathBuf>,
    pub lines: Vec<String>,
}

fn prepare_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output.dir)?;
    Ok(cfg.output.dir.clone())
}

// ---------------------------------------------------------------------------
// design

#[derive(Debug, Clone, Serialize)]
pub struct DesignResults {
    pub design: DesignDescriptor,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shooting: Option<ShootingResult>,
    pub diagnostics: WaveformDiagnostics,
}

pub fn run_design(cfg: &ExperimentConfig) -> Result<RunSummary> {
    if cfg.protocol.kind != ProtocolKind::Sta {
        return Err(Error::InvalidInput("`design` applies to the designed protocol (protocol.kind = \"sta\")".into()));
    }
    let trap = cfg.trap()?;
    let (design, shooting) = resolve_design(cfg, &trap)?;
    let wf = synthesize_waveform(&design, cfg.simulation.waveform_samples)?;
    let diagnostics = wf.diagnostics();
    let dir = prepare_dir(cfg)?;
    let csv = dir.join("waveform.csv");
    wf.save_csv(&csv)?;
    let json = dir.join("design.json");
    let converged = shooting.as_ref().map_or(true, |s| s.converged);
    let results = DesignResults { design: design.descriptor(), shooting, diagnostics };
    write_json(&json, &Provenance::new(cfg, ExperimentKind::Design), &results)?;
    let mut lines = vec![
        format!("beta_max = {:.4e} N/m^3 at t = {:.4e} s", diagnostics.beta_max_si, diagnostics.t_beta_max_s),
        match diagnostics.t_alpha_zero_s {
            Some(t) => format!("alpha changes sign at t = {t:.4e} s"),
            None => "alpha keeps its sign".into(),
        },
        format!(
            "min Omega-^2 = {:.6} omega0^2, min Omega+^2 = {:.6} omega0^2",
            diagnostics.min_omega2_minus, diagnostics.min_omega2_plus
        ),
    ];
    if let Some(s) = &results.shooting {
        lines.push(format!("free parameters {:?}, excess energy {:.3e}", s.free_params, s.excess_energy));
    }
    if !converged {
        lines.push("WARNING: shooting did not converge; outputs flagged (shooting.converged = false)".into());
    }
    Ok(RunSummary { converged, outputs: vec![csv, json], lines })
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, Serialize)]
pub struct SimulateResults {
    pub protocol: ProtocolKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignDescriptor>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceRamp>,
    pub lambda_n: f64,
    pub lambda_internal: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classical: Option<ExcitationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantum: Option<ExcitationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantum_grid: Option<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantum_energies: Option<[f64; 3]>,
}

pub fn run_simulate(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let trap = cfg.trap()?;
    let engine = cfg.engine(ExperimentKind::Simulate);
    let lambda = trap.from_si(cfg.simulation.lambda_n, Unit::Force);
    let mut converged = true;
    let (schedule, design, reference): (Box<dyn ControlSchedule>, _, _) = match cfg.protocol.kind {
        ProtocolKind::Sta => {
            let (d, s) = resolve_design(cfg, &trap)?;
            converged = s.map_or(true, |s| s.converged);
            let desc = d.descriptor();
            (Box::new(d), Some(desc), None)
        }
        ProtocolKind::Reference => {
            let r = ReferenceRamp::new(&trap, cfg.protocol.t_f_s, cfg.protocol.expansion_factor, cfg.smooth_order(&trap)?)?;
            (Box::new(r.clone()), None, Some(r))
        }
    };
    let dir = prepare_dir(cfg)?;
    let mut outputs = Vec::new();
    let mut lines = Vec::new();
    let classical_run: Option<ClassicalRun> = if engine.classical() {
        let opts = ClassicalOptions { samples: cfg.simulation.trajectory_samples, ..cfg.classical_options() };
        let run = classical::propagate_classical(schedule.as_ref(), &trap, None, lambda, &opts)?;
        let p = dir.join("trajectory.csv");
        run.save_csv(&trap, &p)?;
        outputs.push(p);
        lines.push(format!("classical excitation {:.6} quanta", run.report.excitation_quanta));
        Some(run)
    } else {
        None
    };
    let quantum_run: Option<QuantumRun> = if engine.quantum() {
        let run = quantum::simulate_quantum(schedule.as_ref(), &trap, lambda, &cfg.quantum_options(&trap))?;
        let p = dir.join("wavefunction.bin");
        run.final_state.save_snapshot(&p)?;
        outputs.push(p);
        let p = dir.join("marginals.csv");
        let f = std::fs::File::create(&p)?;
        run.final_state.write_marginals_csv(&trap, std::io::BufWriter::new(f))?;
        outputs.push(p);
        lines.push(format!("quantum excitation {:.6} quanta", run.report.excitation_quanta));
        Some(run)
    } else {
        None
    };
    let results = SimulateResults {
        protocol: cfg.protocol.kind,
        design,
        reference: reference.clone(),
        lambda_n: cfg.simulation.lambda_n,
        lambda_internal: lambda,
        classical: classical_run.as_ref().map(|r| r.report),
        quantum: quantum_run.as_ref().map(|r| r.report),
        quantum_grid: quantum_run.as_ref().map(|r| r.final_state.grid),
        quantum_energies: quantum_run.as_ref().map(|r| [r.initial_energy, r.final_energy, r.final_ground_energy]),
    };
    let mut prov = Provenance::new(cfg, ExperimentKind::Simulate);
    if let Some(r) = &reference {
        prov = prov.label("reference_alpha", smooth_label(r.smooth_order, cfg.reference.smooth_order));
    }
    let p = dir.join("simulate.json");
    write_json(&p, &prov, &results)?;
    outputs.push(p);
    Ok(RunSummary { converged, outputs, lines })
}

fn smooth_label(n: u32, how: SmoothOrder) -> String {
    let src = match how {
        SmoothOrder::Auto => "auto: lowest order keeping both modes bound",
        SmoothOrder::Fixed(_) => "configured",
    };
    format!("alpha(s) = alpha0 + (alpha_f - alpha0) (1 - (1-s)^n (1 + n s)), n = {n} ({src}); n = 2 is the cubic smoothstep")
}

// ---------------------------------------------------------------------------
// excitation curve

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub t_f_s: f64,
    pub t_f_internal: f64,
    pub order11: ShootingResult,
    pub order12: ShootingResult,
    pub excitation11: PointExcitation,
    pub excitation12: PointExcitation,
    pub design11: DesignDescriptor,
    pub design12: DesignDescriptor,
}

/// Order-11 branch by continuation, order-12 refinement of every point, and
/// the simulated excitation of both.
pub fn excitation_curve(cfg: &ExperimentConfig, durations: &[f64], engine: Engine) -> Result<Vec<CurvePoint>> {
    let trap = cfg.trap()?;
    let solver = StaSolver { order: AnsatzOrder::Eleven, objective: Objective::Plain, ..StaSolver::from_config(cfg, &trap) };
    if cfg.protocol.order != AnsatzOrder::Eleven {
        return Err(Error::InvalidInput("excitation-curve runs order 11 and order 12; leave protocol.order at 11".into()));
    }
    let r11 = solver.solve(durations)?;
    let obj12 = cfg.protocol.order12_objective;
    r11.into_par_iter()
        .map(|r11| {
            let r12 = solver.refine_order12(&r11, obj12)?;
            let d11 = solver.design(&r11)?;
            let d12 = ProtocolDesign::new(&trap, r12.t_f_s, solver.expansion_factor, AnsatzOrder::Twelve, &r12.free_params)?;
            let (e11, e12) = rayon::join(
                || excite(&d11, &trap, 0.0, engine, cfg),
                || excite(&d12, &trap, 0.0, engine, cfg),
            );
            Ok(CurvePoint {
                t_f_s: r11.t_f_s,
                t_f_internal: trap.from_si(r11.t_f_s, Unit::Time),
                design11: d11.descriptor(),
                design12: d12.descriptor(),
                excitation11: e11?,
                excitation12: e12?,
                order11: r11,
                order12: r12,
            })
        })
        .collect()
}

pub const CURVE_COLUMNS: [&str; 15] = [
    "t_f",
    "E_ex_order11",
    "E_ex_order12",
    "a10",
    "a11",
    "c10",
    "c11",
    "c12",
    "t_f_internal",
    "E_ex_order11_J",
    "E_ex_order12_J",
    "E_ex_order11_quantum",
    "E_ex_order12_quantum",
    "converged11",
    "converged12",
];

pub fn write_curve_csv<W: std::io::Write>(trap: &TrapSpec, points: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_COLUMNS)?;
    let e = |x: f64| trap.to_si(x, Unit::Energy);
    for p in points {
        let (x11, x12) = (p.excitation11.quanta(), p.excitation12.quanta());
        let c11 = p.excitation11.classical_quanta().unwrap_or(x11);
        let c12 = p.excitation12.classical_quanta().unwrap_or(x12);
        let (q11, q12) = if p.excitation11.classical.is_some() {
            (p.excitation11.quantum_quanta(), p.excitation12.quantum_quanta())
        } else {
            (None, None)
        };
        w.write_record(&[
            fmt(p.t_f_s),
            fmt(c11),
            fmt(c12),
            fmt(p.order11.free_params[0]),
            fmt(p.order11.free_params[1]),
            fmt(p.order12.free_params[0]),
            fmt(p.order12.free_params[1]),
            fmt(p.order12.free_params[2]),
            fmt(p.t_f_internal),
            fmt(e(c11)),
            fmt(e(c12)),
            opt(q11),
            opt(q12),
            p.order11.converged.to_string(),
            p.order12.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const DEFAULT_CURVE_US: [f64; 21] = [
    2.6, 2.8, 3.0, 3.2, 3.4, 3.6, 3.8, 4.0, 4.2, 4.4, 4.6, 4.8, 5.0, 5.2, 5.4, 5.6, 5.8, 6.0, 8.0, 10.0, 15.0,
];

pub fn run_excitation_curve(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let trap = cfg.trap()?;
    let default: Vec<f64> = DEFAULT_CURVE_US.iter().map(|t| t * 1e-6).collect();
    let durations = cfg.protocol.durations(&default)?;
    let points = excitation_curve(cfg, &durations, cfg.engine(ExperimentKind::ExcitationCurve))?;
    let dir = prepare_dir(cfg)?;
    let csv = dir.join("excitation_curve.csv");
    write_curve_csv(&trap, &points, std::io::BufWriter::new(std::fs::File::create(&csv)?))?;
    let json = dir.join("excitation_curve.json");
    write_json(&json, &Provenance::new(cfg, ExperimentKind::ExcitationCurve), &points)?;
    let converged = points.iter().all(|p| p.order11.converged && p.order12.converged);
    let lines = points
        .iter()
        .map(|p| {
            format!(
                "t_f = {:.2} us: order 11 {:.4e}, order 12 {:.4e} quanta",
                p.t_f_s * 1e6,
                p.excitation11.quanta(),
                p.excitation12.quanta()
            )
        })
        .collect();
    Ok(RunSummary { converged, outputs: vec![csv, json], lines })
}

// ---------------------------------------------------------------------------
// critical times

/// Bisection for the shortest duration whose excitation stays below
/// `threshold`. `eval(t, warm)` gets the state of the current upper end.
pub fn bisect_threshold<T: Clone>(
    lo: f64,
    hi: f64,
    tolerance: f64,
    threshold: f64,
    mut eval: impl FnMut(f64, Option<&T>) -> Result<(f64, T)>,
) -> Result<ThresholdSearch<T>> {
    let (e_hi, s_hi) = eval(hi, None)?;
    if !(e_hi < threshold) {
        return Err(Error::Bracket { lo, hi });
    }
    let (e_lo, _) = eval(lo, Some(&s_hi))?;
    if !(e_lo >= threshold) {
        return Err(Error::Bracket { lo, hi });
    }
    let mut s = ThresholdSearch { lo, hi, excitation_lo: e_lo, excitation_hi: e_hi, state_hi: s_hi, evaluations: 2 };
    while s.hi - s.lo > tolerance {
        let mid = 0.5 * (s.lo + s.hi);
        let (e, st) = eval(mid, Some(&s.state_hi))?;
        s.evaluations += 1;
        if e < threshold {
            s.hi = mid;
            s.excitation_hi = e;
            s.state_hi = st;
        } else {
            s.lo = mid;
            s.excitation_lo = e;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdSearch<T> {
    /// Longest duration seen above threshold.
    pub lo: f64,
    /// Shortest duration seen below threshold; reported as the critical time.
    pub hi: f64,
    pub excitation_lo: f64,
    pub excitation_hi: f64,
    pub state_hi: T,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TcritRow {
    pub omega0_hz: f64,
    pub t_crit_s: f64,
    pub t_crit_internal: f64,
    pub t_above_s: f64,
    pub excitation_at_t_crit: f64,
    pub excitation_above: f64,
    pub beta_max_si: f64,
    pub beta_max_internal: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub design: DesignDescriptor,
}

/// One table row: bisection over the designed protocol's duration.
pub fn tcrit_row(cfg: &ExperimentConfig, omega0_hz: f64, engine: Engine) -> Result<TcritRow> {
    let mut trap_in = cfg.trap.clone();
    trap_in.omega0_hz = omega0_hz;
    let trap = trap_in.build()?;
    let solver = StaSolver::from_config(cfg, &trap);
    let t = &cfg.tcrit;
    let (lo, hi) = (t.bracket_cycles[0] / omega0_hz, t.bracket_cycles[1] / omega0_hz);
    let eval = |tf: f64, warm: Option<&ShootingResult>| -> Result<(f64, ShootingResult)> {
        let r = match warm {
            Some(w) => solver.continue_to(w, tf)?,
            None => solver.solve(&[tf])?.remove(0),
        };
        let e = excite(&solver.design(&r)?, &trap, 0.0, engine, cfg)?;
        Ok((e.quanta(), r))
    };
    let s = bisect_threshold(lo, hi, t.tolerance_s, t.threshold_quanta, eval)?;
    let design = solver.design(&s.state_hi)?;
    let diag = synthesize_waveform(&design, cfg.simulation.waveform_samples)?.diagnostics();
    Ok(TcritRow {
        omega0_hz,
        t_crit_s: s.hi,
        t_crit_internal: trap.from_si(s.hi, Unit::Time),
        t_above_s: s.lo,
        excitation_at_t_crit: s.excitation_hi,
        excitation_above: s.excitation_lo,
        beta_max_si: diag.beta_max_si,
        beta_max_internal: diag.beta_max,
        evaluations: s.evaluations,
        converged: s.state_hi.converged,
        design: design.descriptor(),
    })
}

pub fn run_tcrit_table(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let engine = cfg.engine(ExperimentKind::TcritTable);
    let rows: Vec<TcritRow> =
        cfg.tcrit.omega0_hz.par_iter().map(|&f| tcrit_row(cfg, f, engine)).collect::<Result<_>>()?;
    let dir = prepare_dir(cfg)?;
    let csv = dir.join("tcrit_table.csv");
    let mut w = csv::Writer::from_path(&csv)?;
    w.write_record([
        "omega0_hz",
        "t_crit_s",
        "t_crit_internal",
        "t_above_s",
        "E_ex_at_t_crit",
        "E_ex_above",
        "beta_max_N_per_m3",
        "beta_max_internal",
    ])?;
    for r in &rows {
        w.write_record(&[
            fmt(r.omega0_hz),
            fmt(r.t_crit_s),
            fmt(r.t_crit_internal),
            fmt(r.t_above_s),
            fmt(r.excitation_at_t_crit),
            fmt(r.excitation_above),
            fmt(r.beta_max_si),
            fmt(r.beta_max_internal),
        ])?;
    }
    w.flush()?;
    let json = dir.join("tcrit_table.json");
    write_json(&json, &Provenance::new(cfg, ExperimentKind::TcritTable), &rows)?;
    let lines = rows
        .iter()
        .map(|r| {
            format!(
                "{:.2} MHz: t_crit = {:.2} us, beta_max = {:.3e} N/m^3",
                r.omega0_hz * 1e-6,
                r.t_crit_s * 1e6,
                r.beta_max_si
            )
        })
        .collect();
    Ok(RunSummary { converged: rows.iter().all(|r| r.converged), outputs: vec![csv, json], lines })
}

// ---------------------------------------------------------------------------
// bias sweep

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasPoint {
    pub lambda_n: f64,
    pub lambda_internal: f64,
    pub delta_e_j: f64,
    pub delta_e_quanta: f64,
    pub excitation: PointExcitation,
}

/// Tilt (internal) whose final wells differ by `target` quanta.
pub fn lambda_for_delta_e(params: &potential::PotentialParams, target: f64) -> Result<f64> {
    if target == 0.0 {
        return Ok(0.0);
    }
    let de = |l: f64| match potential::well_energy_difference(&params.with_bias(l)) {
        Ok(v) => Ok(v.abs()),
        Err(Error::LostMinimum(_)) => Err(Error::InvalidInput(format!(
            "delta E = {target} quanta is beyond the largest tilt that keeps both final minima"
        ))),
        Err(e) => Err(e),
    };
    let sign = target.signum();
    let goal = target.abs();
    let (mut lo, mut hi) = (0.0, 1e-6);
    while de(hi)? < goal {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::InvalidInput(format!("no tilt reaches delta E = {target}")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if de(mid)? < goal {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(sign * 0.5 * (lo + hi))
}

pub fn bias_sweep(cfg: &ExperimentConfig, design: &ProtocolDesign, engine: Engine) -> Result<Vec<BiasPoint>> {
    let trap = &design.trap;
    let final_params = design.params(design.tau_f);
    let lambdas: Vec<f64> = match (&cfg.bias.lambda_n, &cfg.bias.delta_e_quanta) {
        (Some(l), _) => l.iter().map(|x| trap.from_si(*x, Unit::Force)).collect(),
        (None, Some(d)) => d.iter().map(|x| lambda_for_delta_e(&final_params, *x)).collect::<Result<_>>()?,
        (None, None) => return Err(Error::InvalidInput("bias sweep needs lambda_n or delta_e_quanta".into())),
    };
    lambdas
        .par_iter()
        .map(|&l| {
            let de = potential::well_energy_difference(&final_params.with_bias(l))?.abs();
            Ok(BiasPoint {
                lambda_n: trap.to_si(l, Unit::Force),
                lambda_internal: l,
                delta_e_j: trap.to_si(de, Unit::Energy),
                delta_e_quanta: de,
                excitation: excite(design, trap, l, engine, cfg)?,
            })
        })
        .collect()
}

pub fn run_bias_sweep(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let trap = cfg.trap()?;
    if cfg.protocol.kind != ProtocolKind::Sta {
        return Err(Error::InvalidInput("bias sweep uses the designed protocol".into()));
    }
    let (design, shooting) = resolve_design(cfg, &trap)?;
    let points = bias_sweep(cfg, &design, cfg.engine(ExperimentKind::BiasSweep))?;
    let dir = prepare_dir(cfg)?;
    let csv = dir.join("bias_sweep.csv");
    let mut w = csv::Writer::from_path(&csv)?;
    w.write_record([
        "lambda_N",
        "lambda_internal",
        "delta_E_J",
        "delta_E_quanta",
        "E_ex",
        "E_ex_J",
        "E_ex_classical",
        "E_ex_quantum",
    ])?;
    for p in &points {
        let x = p.excitation.quanta();
        w.write_record(&[
            fmt(p.lambda_n),
            fmt(p.lambda_internal),
            fmt(p.delta_e_j),
            fmt(p.delta_e_quanta),
            fmt(x),
            fmt(trap.to_si(x, Unit::Energy)),
            opt(p.excitation.classical_quanta()),
            opt(p.excitation.quantum_quanta()),
        ])?;
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Out<'a> {
        design: DesignDescriptor,
        points: &'a [BiasPoint],
    }
    let json = dir.join("bias_sweep.json");
    write_json(
        &json,
        &Provenance::new(cfg, ExperimentKind::BiasSweep),
        &Out { design: design.descriptor(), points: &points },
    )?;
    let lines = points
        .iter()
        .map(|p| format!("delta E = {:.1} quanta (lambda = {:.3e} N): {:.4e} quanta", p.delta_e_quanta, p.lambda_n, p.excitation.quanta()))
        .collect();
    Ok(RunSummary { converged: shooting.map_or(true, |s| s.converged), outputs: vec![csv, json], lines })
}

// ---------------------------------------------------------------------------
// reference comparison

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparePoint {
    pub t_f_s: f64,
    pub t_f_internal: f64,
    pub sta: PointExcitation,
    pub reference: PointExcitation,
    pub sta_converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Thresholds {
    pub threshold_quanta: f64,
    pub reference: ThresholdSearch<()>,
    pub sta: ThresholdSearch<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareResults {
    pub smooth_order: u32,
    pub points: Vec<ComparePoint>,
    pub thresholds: Option<Thresholds>,
}

pub fn reference_points(cfg: &ExperimentConfig, durations: &[f64], engine: Engine) -> Result<(u32, Vec<ComparePoint>)> {
    let trap = cfg.trap()?;
    let n = cfg.smooth_order(&trap)?;
    let solver = StaSolver::from_config(cfg, &trap);
    let sta = solver.solve(durations)?;
    let points = sta
        .par_iter()
        .map(|r| {
            let ramp = ReferenceRamp::new(&trap, r.t_f_s, solver.expansion_factor, n)?;
            let design = solver.design(r)?;
            Ok(ComparePoint {
                t_f_s: r.t_f_s,
                t_f_internal: trap.from_si(r.t_f_s, Unit::Time),
                sta: excite(&design, &trap, 0.0, engine, cfg)?,
                reference: excite(&ramp, &trap, 0.0, engine, cfg)?,
                sta_converged: r.converged,
            })
        })
        .collect::<Result<_>>()?;
    Ok((n, points))
}

/// Shortest sub-threshold durations of the reference ramp and of the designed protocol.
pub fn reference_thresholds(cfg: &ExperimentConfig, engine: Engine) -> Result<Thresholds> {
    let trap = cfg.trap()?;
    let n = cfg.smooth_order(&trap)?;
    let rc = &cfg.reference;
    let reference = bisect_threshold(rc.bracket_s[0], rc.bracket_s[1], rc.tolerance_s, rc.threshold_quanta, |t, _| {
        let ramp = ReferenceRamp::new(&trap, t, cfg.protocol.expansion_factor, n)?;
        Ok((excite(&ramp, &trap, 0.0, engine, cfg)?.quanta(), ()))
    })?;
    let solver = StaSolver::from_config(cfg, &trap);
    let f = trap.omega0_hz();
    let sta = bisect_threshold(
        rc.sta_bracket_cycles[0] / f,
        rc.sta_bracket_cycles[1] / f,
        rc.tolerance_s.min(1e-7),
        rc.threshold_quanta,
        |t, warm: Option<&ShootingResult>| {
            let r = match warm {
                Some(w) => solver.continue_to(w, t)?,
                None => solver.solve(&[t])?.remove(0),
            };
            Ok((excite(&solver.design(&r)?, &trap, 0.0, engine, cfg)?.quanta(), r))
        },
    )?;
    let sta = ThresholdSearch {
        lo: sta.lo,
        hi: sta.hi,
        excitation_lo: sta.excitation_lo,
        excitation_hi: sta.excitation_hi,
        state_hi: sta.state_hi.free_params,
        evaluations: sta.evaluations,
    };
    Ok(Thresholds { threshold_quanta: rc.threshold_quanta, reference, sta })
}

pub const DEFAULT_COMPARE_US: [f64; 10] = [3.0, 4.0, 5.2, 6.0, 10.0, 20.0, 40.0, 80.0, 100.0, 200.0];

pub fn run_reference_compare(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let trap = cfg.trap()?;
    let engine = cfg.engine(ExperimentKind::ReferenceCompare);
    let default: Vec<f64> = DEFAULT_COMPARE_US.iter().map(|t| t * 1e-6).collect();
    let durations = cfg.protocol.durations(&default)?;
    let (n, points) = reference_points(cfg, &durations, engine)?;
    let thresholds = match reference_thresholds(cfg, engine) {
        Ok(t) => Some(t),
        Err(Error::Bracket { .. }) => None,
        Err(e) => return Err(e),
    };
    let dir = prepare_dir(cfg)?;
    let csv = dir.join("reference_compare.csv");
    let mut w = csv::Writer::from_path(&csv)?;
    w.write_record(["t_f_s", "t_f_internal", "E_ex_sta", "E_ex_reference", "E_ex_sta_J", "E_ex_reference_J", "smooth_order"])?;
    for p in &points {
        let (a, b) = (p.sta.quanta(), p.reference.quanta());
        w.write_record(&[
            fmt(p.t_f_s),
            fmt(p.t_f_internal),
            fmt(a),
            fmt(b),
            fmt(trap.to_si(a, Unit::Energy)),
            fmt(trap.to_si(b, Unit::Energy)),
            n.to_string(),
        ])?;
    }
    w.flush()?;
    let mut lines: Vec<String> = points
        .iter()
        .map(|p| format!("t_f = {:.1} us: designed {:.4e}, reference {:.4e} quanta", p.t_f_s * 1e6, p.sta.quanta(), p.reference.quanta()))
        .collect();
    match &thresholds {
        Some(t) => lines.push(format!(
            "sub-{} quantum threshold: reference {:.1} us, designed {:.2} us",
            t.threshold_quanta,
            t.reference.hi * 1e6,
            t.sta.hi * 1e6
        )),
        None => lines.push("threshold bracket did not straddle the threshold; no threshold reported".into()),
    }
    let converged = points.iter().all(|p| p.sta_converged);
    let results = CompareResults { smooth_order: n, points, thresholds };
    let json = dir.join("reference_compare.json");
    let prov = Provenance::new(cfg, ExperimentKind::ReferenceCompare).label("reference_alpha", smooth_label(n, cfg.reference.smooth_order));
    write_json(&json, &prov, &results)?;
    Ok(RunSummary { converged, outputs: vec![csv, json], lines })
}

pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<RunSummary> {
    match kind {
        ExperimentKind::Design => run_design(cfg),
        ExperimentKind::Simulate => run_simulate(cfg),
        ExperimentKind::ExcitationCurve => run_excitation_curve(cfg),
        ExperimentKind::TcritTable => run_tcrit_table(cfg),
        ExperimentKind::BiasSweep => run_bias_sweep(cfg),
        ExperimentKind::ReferenceCompare => run_reference_compare(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(dir: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.protocol.center_steps = 4000;
        c.simulation.classical_steps = 40_000;
        c.output.dir = dir.to_path_buf();
        c
    }

    #[test]
    fn defaults_round_trip_and_validate() {
        let c = ExperimentConfig::default();
        let v = serde_json::to_value(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back, c);
        for k in [ExperimentKind::Design, ExperimentKind::BiasSweep, ExperimentKind::TcritTable] {
            c.validate(k).unwrap();
        }
    }

    #[test]
    fn overrides_and_rejections() {
        let ov = vec![
            ("protocol.t_f_s".to_string(), parse_override_value("4.4e-6")),
            ("trap.omega0_hz".to_string(), parse_override_value("3e6")),
            ("simulation.engine".to_string(), parse_override_value("both")),
        ];
        let c = ExperimentConfig::load(None, &ov, ExperimentKind::Simulate).unwrap();
        assert_eq!(c.protocol.t_f_s, 4.4e-6);
        assert_eq!(c.trap.omega0_hz, 3e6);
        assert_eq!(c.engine(ExperimentKind::Simulate), Engine::Both);
        let bad = |k: &str, v: &str| {
            ExperimentConfig::load(None, &[(k.to_string(), parse_override_value(v))], ExperimentKind::Design).is_err()
        };
        assert!(bad("protocol.order", "10"));
        assert!(bad("protocol.t_f_s", "-1"));
        assert!(bad("protocol.bogus", "1"));
        assert!(bad("trap.species", "\"Xe\""));
        assert!(bad("experiment", "\"bias-sweep\""));
        assert!(bad("protocol.objective", "\"perturbative\""));
        assert!(bad("reference.smooth_order", "1"));
        assert!(!bad("reference.smooth_order", "2"));
    }

    // Every key a populated config serializes must be described by the
    // shipped schema.
    #[test]
    fn schema_covers_config() {
        fn walk(v: &Value, schema: &Value, path: &str) {
            let Value::Object(map) = v else { return };
            for (k, child) in map {
                let sub = schema
                    .pointer(&format!("/properties/{k}"))
                    .unwrap_or_else(|| panic!("schema misses {path}.{k}"));
                walk(child, sub, &format!("{path}.{k}"));
            }
        }
        let schema: Value = serde_json::from_str(include_str!("../../../schemas/experiment_config.schema.json")).unwrap();
        let mut cfg = ExperimentConfig { experiment: Some(ExperimentKind::Simulate), ..Default::default() };
        cfg.protocol.t_f_list_s = Some(vec![3e-6]);
        cfg.protocol.t_f_range_s = Some(DurationRange { start_s: 3e-6, stop_s: 4e-6, step_s: 1e-7 });
        cfg.protocol.initial_params = Some(vec![0.0, 0.0]);
        cfg.protocol.design_file = Some("d.json".into());
        cfg.simulation.engine = Some(Engine::Both);
        cfg.simulation.grid = Some(GridConfig { nq: 64, ny: 64, q_half_m: 1e-6, y_half_m: 1e-6 });
        cfg.bias.lambda_n = Some(vec![0.0]);
        walk(&serde_json::to_value(&cfg).unwrap(), &schema, "");
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.content_hash(), b.content_hash());
        b.protocol.t_f_s = 5.3e-6;
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash().len(), 64);
        // independent git-style framing of the same bytes
        let body = serde_json::to_vec(&a).unwrap();
        let mut framed = format!("blob {}\0", body.len()).into_bytes();
        framed.extend_from_slice(&body);
        assert_eq!(a.content_hash(), hex::encode(Sha256::digest(&framed)));
    }

    #[test]
    fn duration_range_includes_both_ends() {
        let r = DurationRange { start_s: 3e-6, stop_s: 4e-6, step_s: 2e-7 };
        let v = r.values().unwrap();
        assert_eq!(v.len(), 6);
        assert!((v[5] - 4e-6).abs() < 1e-18);
    }

    #[test]
    fn bisection_finds_step() {
        let s = bisect_threshold(0.0, 10.0, 1e-3, 0.5, |t, _: Option<&()>| Ok((if t < 3.7 { 1.0 } else { 0.0 }, ()))).unwrap();
        assert!(s.hi >= 3.7 && s.hi - 3.7 < 1e-3);
        assert!(matches!(
            bisect_threshold(4.0, 10.0, 1e-3, 0.5, |t, _: Option<&()>| Ok((if t < 3.7 { 1.0 } else { 0.0 }, ()))),
            Err(Error::Bracket { .. })
        ));
    }

    #[test]
    fn tilt_solver_hits_target() {
        let trap = TrapSpec::new(crate::units::Species::Beryllium9, 2e6).unwrap();
        let d = ProtocolDesign::new(&trap, 5.2e-6, 10.0, AnsatzOrder::Eleven, &[0.0, 0.0]).unwrap();
        let p = d.params(d.tau_f);
        let l = lambda_for_delta_e(&p, 1000.0).unwrap();
        let de = potential::well_energy_difference(&p.with_bias(l)).unwrap().abs();
        assert!((de - 1000.0).abs() < 1e-6);
        // lambda d_f estimate
        let d_f = d.point(d.tau_f).unwrap().separation.d;
        assert!((l * d_f / 1000.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn design_replays_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick(dir.path());
        let s = run_design(&cfg).unwrap();
        assert!(s.converged);
        let first = std::fs::read(dir.path().join("waveform.csv")).unwrap();
        let sub = dir.path().join("replay");
        let mut replay = cfg.clone();
        replay.output.dir = sub.clone();
        replay.protocol.design_file = Some(dir.path().join("design.json"));
        run_design(&replay).unwrap();
        assert_eq!(first, std::fs::read(sub.join("waveform.csv")).unwrap());
        let header = String::from_utf8(first).unwrap();
        assert!(header.starts_with("t_s,alpha_si,beta_si,d_si,omega_minus,omega_plus"));
        let meta: Value = serde_json::from_slice(&std::fs::read(dir.path().join("design.json")).unwrap()).unwrap();
        assert_eq!(meta["provenance"]["config_hash"].as_str().unwrap().len(), 64);
    }

    #[test]
    fn solver_branch_is_deterministic() {
        let trap = TrapSpec::new(crate::units::Species::Beryllium9, 2e6).unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.protocol.center_steps = 3000;
        let s = StaSolver::from_config(&cfg, &trap);
        let a = s.solve(&[5.2e-6, 5.6e-6]).unwrap();
        let b = s.solve(&[5.6e-6, 5.2e-6]).unwrap();
        assert_eq!(a[0].free_params, b[1].free_params);
        assert_eq!(a[1].free_params, b[0].free_params);
    }
}
