//! Scenario configs, runs and reports.
//!
//! A scenario is a TOML document with the sections `[plant]`, `[controller]`,
//! `[reference]`, `[fault]`, `[thresholds]`, `[estimator]` and `[solver]` plus
//! the top-level keys `name`, `mitigation` and `seed`. Unknown keys are
//! rejected. See `scenarios/*.toml` for the three bundled benchmarks.

use std::fmt::{self, Write as _};
use std::io::Write;
use std::path::Path;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linsys::{gain_bound, tf_to_ss, FrequencySweep, RationalTF, StateSpaceModel, DEFAULT_GAIN_SAFETY};
use crate::mmatrix::{Case, MMatrix};
use crate::passivity::{detect, EstimatorConfig, PassivityEstimate, Thresholds, Verdict};
use crate::plants::{self, FaultSchedule, MassDamperSpring};
use crate::reconfig::{fmt_num, fmt_opt, Action, FaultEvent, ReconfigState, EVENT_HEADER};
use crate::simcore::{Divergence, LoopStepper, Method, Plant, SolverConfig, DIVERGENCE_THRESHOLD};

pub const RUN_HEADER: &str = "t,r,e,y,u,rho_bar,nu_bar,verdict,m11,m12,m21,m22,diverged";

/// Bundled benchmark configs as `(name, text)`.
pub const BUNDLED: [(&str, &str); 3] = [
    ("ex1_delay", include_str!("../scenarios/ex1_delay.toml")),
    ("ex2_nonlinear", include_str!("../scenarios/ex2_nonlinear.toml")),
    ("ex3_spring", include_str!("../scenarios/ex3_spring.toml")),
];

/// Known keys per section (`""` is the top level).
const SCHEMA: &[(&str, &[&str])] = &[
    ("", &["name", "mitigation", "seed"]),
    ("plant", &["kind", "num", "den", "m", "c", "k"]),
    ("controller", &["num", "den", "gain", "gain_safety"]),
    ("reference", &["kind", "amplitude", "period", "offset"]),
    ("fault", &["kind", "t_start", "t_full", "magnitude"]),
    ("thresholds", &["rho0", "nu0", "eps_margin"]),
    ("estimator", &["window", "warmup", "eps_den"]),
    ("solver", &["dt", "t_end", "method"]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "yes", deserialize_with = "switch")]
    pub mitigation: bool,
    #[serde(default)]
    pub seed: u64,
    pub plant: PlantSpec,
    pub controller: ControllerSpec,
    #[serde(default)]
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub fault: Option<FaultSchedule>,
    pub thresholds: Thresholds,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub solver: SolverSpec,
}

fn yes() -> bool {
    true
}

fn switch<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Switch {
        Bool(bool),
        Text(String),
    }
    match Switch::deserialize(d)? {
        Switch::Bool(b) => Ok(b),
        Switch::Text(s) => match s.as_str() {
            "on" | "true" => Ok(true),
            "off" | "false" => Ok(false),
            other => Err(de::Error::custom(format!("expected on/off, got `{other}`"))),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    /// `(s^2+3s+2)/(s^2+s+2)` with an input delay fault.
    Ex1,
    /// Same linearization, quadratic term switched in by the fault.
    Ex2,
    /// Base-excited mass damper with a softening spring.
    Ex3 {
        #[serde(default = "default_m")]
        m: f64,
        #[serde(default = "default_c")]
        c: f64,
        #[serde(default = "default_k")]
        k: f64,
    },
    /// Fault-free LTI plant.
    Tf { num: Vec<f64>, den: Vec<f64> },
}

fn default_m() -> f64 {
    MassDamperSpring::default().m
}
fn default_c() -> f64 {
    MassDamperSpring::default().c
}
fn default_k() -> f64 {
    MassDamperSpring::default().k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    /// Multiplies `num`.
    #[serde(default = "one")]
    pub gain: f64,
    /// Inflation of the grid gain before it is used as `gamma`.
    #[serde(default = "default_safety")]
    pub gain_safety: f64,
}

fn one() -> f64 {
    1.0
}
fn default_safety() -> f64 {
    DEFAULT_GAIN_SAFETY
}

impl ControllerSpec {
    pub fn tf(&self) -> Result<RationalTF> {
        RationalTF::new(self.num.iter().map(|c| c * self.gain).collect(), self.den.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Step,
    Square,
    Sine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub kind: ReferenceKind,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default)]
    pub offset: f64,
}

fn default_period() -> f64 {
    20.0
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self {
            kind: ReferenceKind::Square,
            amplitude: 1.0,
            period: default_period(),
            offset: 0.0,
        }
    }
}

impl ReferenceSpec {
    pub fn value(&self, t: f64) -> f64 {
        let wave = match self.kind {
            ReferenceKind::Step => 1.0,
            ReferenceKind::Square => {
                if t.rem_euclid(self.period) < 0.5 * self.period {
                    1.0
                } else {
                    -1.0
                }
            }
            ReferenceKind::Sine => (2.0 * std::f64::consts::PI * t / self.period).sin(),
        };
        self.offset + self.amplitude * wave
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    /// Moving-window length in seconds; absent or `"none"` integrates from zero.
    #[serde(default, deserialize_with = "window", skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(default = "default_warmup")]
    pub warmup: f64,
    #[serde(default = "default_eps_den")]
    pub eps_den: f64,
}

fn default_warmup() -> f64 {
    crate::passivity::DEFAULT_WARMUP
}
fn default_eps_den() -> f64 {
    crate::passivity::DEFAULT_EPS_DEN
}

fn window<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Window {
        Seconds(f64),
        Text(String),
    }
    match Window::deserialize(d)? {
        Window::Seconds(s) => Ok(Some(s)),
        Window::Text(s) if s == "none" => Ok(None),
        Window::Text(s) => Err(de::Error::custom(format!("expected seconds or \"none\", got `{s}`"))),
    }
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self {
            window: None,
            warmup: default_warmup(),
            eps_den: default_eps_den(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub method: MethodSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodSpec {
    #[default]
    Rk4,
    Euler,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_t_end() -> f64 {
    120.0
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            t_end: default_t_end(),
            method: MethodSpec::Rk4,
        }
    }
}

impl SolverSpec {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            dt: self.dt,
            t_end: self.t_end,
            method: match self.method {
                MethodSpec::Rk4 => Method::Rk4,
                MethodSpec::Euler => Method::Euler,
            },
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn toml_error(text: &str, err: toml::de::Error) -> Error {
    Error::Config {
        line: err.span().map(|s| line_of(text, s.start)),
        message: err.message().trim().to_string(),
    }
}

/// Applies `key=value` overrides to a parsed config table.
///
/// Keys are either dotted (`thresholds.rho0`) or bare when the name belongs
/// to exactly one section (`rho0`, `window`, `mitigation`). Values are parsed
/// as TOML and fall back to plain strings, so `mitigation=off` and
/// `window=none` work unquoted.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[(String, String)]) -> Result<()> {
    for (key, raw) in overrides {
        let (section, field) = resolve_key(key)?;
        let value = parse_value(raw);
        if section.is_empty() {
            table.insert(field.to_string(), value);
        } else {
            let entry = table
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let toml::Value::Table(sub) = entry else {
                return Err(Error::config(format!("`{section}` is not a section")));
            };
            sub.insert(field.to_string(), value);
        }
    }
    Ok(())
}

fn resolve_key(key: &str) -> Result<(&'static str, &'static str)> {
    if let Some((section, field)) = key.split_once('.') {
        for (s, fields) in SCHEMA {
            if *s == section {
                if let Some(f) = fields.iter().find(|f| **f == field) {
                    return Ok((s, f));
                }
            }
        }
        return Err(Error::config(format!("unknown override key `{key}`")));
    }
    let hits: Vec<(&'static str, &'static str)> = SCHEMA
        .iter()
        .flat_map(|(s, fields)| fields.iter().filter(|f| **f == key).map(move |f| (*s, *f)))
        .collect();
    match hits.as_slice() {
        [hit] => Ok(*hit),
        [] => Err(Error::config(format!("unknown override key `{key}`"))),
        _ => Err(Error::config(format!(
            "override key `{key}` is ambiguous; use one of {}",
            hits.iter()
                .map(|(s, f)| format!("{s}.{f}"))
                .collect::<Vec<_>>()
                .join(", ")
        ))),
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Splits `KEY=VALUE`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override `{s}` is not KEY=VALUE")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub controller: StateSpaceModel,
    /// Gain bound of the controller used by the wrapper designers.
    pub gamma: f64,
    /// SHA-256 of the config re-serialized with all defaults filled in.
    pub hash: String,
}

impl Scenario {
    pub fn load(text: &str) -> Result<Self> {
        Self::load_with_overrides(text, &[])
    }

    pub fn load_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| toml_error(text, e))?;
        let merged;
        let source = if overrides.is_empty() {
            text
        } else {
            apply_overrides(&mut table, overrides)?;
            merged = toml::to_string(&table).map_err(|e| Error::config(e.to_string()))?;
            merged.as_str()
        };
        let config: ScenarioConfig = toml::from_str(source).map_err(|e| toml_error(source, e))?;
        let canonical = toml::to_string(&config).map_err(|e| Error::config(e.to_string()))?;
        let digest = Sha256::digest(canonical.as_bytes());
        let hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        Self::from_config(config, hash)
    }

    pub fn from_file(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::load_with_overrides(&text, overrides)
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::config(format!("no bundled scenario `{name}`")))?;
        Self::load(text)
    }

    pub fn from_config(config: ScenarioConfig, hash: String) -> Result<Self> {
        if config.name.trim().is_empty() {
            return Err(Error::config("name must not be empty"));
        }
        config.thresholds.validate()?;
        let solver = config.solver.config();
        solver.validate()?;
        estimator_config(&config).validate()?;
        if let Some(f) = &config.fault {
            f.validate()?;
            if !(config.solver.t_end > f.t_full) {
                return Err(Error::config(format!(
                    "solver.t_end ({}) must exceed fault.t_full ({})",
                    config.solver.t_end, f.t_full
                )));
            }
        }
        let r = &config.reference;
        if !(r.period > 0.0) || !r.amplitude.is_finite() || !r.offset.is_finite() {
            return Err(Error::config("reference.period must be positive and values finite"));
        }
        if !(config.controller.gain_safety >= 1.0) {
            return Err(Error::config("controller.gain_safety must be >= 1"));
        }
        let controller = tf_to_ss(&config.controller.tf()?)?;
        let gamma = gain_bound(&controller, &FrequencySweep::default(), config.controller.gain_safety)?;
        let scenario = Self {
            config,
            controller,
            gamma,
            hash,
        };
        scenario.plant()?;
        // surfaces loop ill-posedness before any stepping
        scenario.stepper(false)?;
        Ok(scenario)
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn solver(&self) -> SolverConfig {
        self.config.solver.config()
    }

    pub fn plant(&self) -> Result<Box<dyn Plant>> {
        let fault = self.config.fault;
        let need = |what: &str| {
            fault.ok_or_else(|| Error::config(format!("plant kind {what} needs a [fault] section")))
        };
        Ok(match &self.config.plant {
            PlantSpec::Ex1 => Box::new(plants::plant_ex1(need("ex1")?)?),
            PlantSpec::Ex2 => Box::new(plants::plant_ex2(need("ex2")?)?),
            PlantSpec::Ex3 { m, c, k } => Box::new(plants::plant_ex3(
                MassDamperSpring { m: *m, c: *c, k: *k },
                need("ex3")?,
            )?),
            PlantSpec::Tf { num, den } => {
                if fault.is_some() {
                    return Err(Error::config("plant kind tf does not take a [fault] section"));
                }
                Box::new(plants::plant_tf(&RationalTF::new(num.clone(), den.clone())?)?)
            }
        })
    }

    pub fn reference(&self) -> Box<dyn Fn(f64) -> f64 + Send> {
        let r = self.config.reference;
        Box::new(move |t| r.value(t))
    }

    /// Loop stepper at rest; `wrapped` selects the wrapper wiring with `M = I`.
    pub fn stepper(&self, wrapped: bool) -> Result<LoopStepper> {
        if wrapped {
            LoopStepper::wrapped(
                self.plant()?,
                &self.controller,
                &MMatrix::identity(),
                self.reference(),
                self.solver(),
            )
        } else {
            LoopStepper::nominal(self.plant()?, &self.controller, self.reference(), self.solver())
        }
    }
}

fn estimator_config(c: &ScenarioConfig) -> EstimatorConfig {
    EstimatorConfig {
        window: c.estimator.window,
        warmup: c.estimator.warmup,
        eps_den: c.estimator.eps_den,
    }
}

/// One logged solver step.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub t: f64,
    pub r: f64,
    pub e: f64,
    pub y: f64,
    pub u: f64,
    pub rho_bar: Option<f64>,
    pub nu_bar: Option<f64>,
    pub verdict: Verdict,
    pub m: [f64; 4],
    pub diverged: bool,
    /// `(rho_bar + nu_c, nu_bar + rho_c)` for the installed wrapper.
    pub index_sums: Option<(f64, f64)>,
    /// The part of `index_sums` the installed wrapper compensates.
    pub margin: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub name: String,
    pub mitigation: bool,
    pub eps_margin: f64,
    pub rows: Vec<Row>,
    pub events: Vec<FaultEvent>,
    pub final_m: MMatrix,
    pub divergence: Option<Divergence>,
    pub metadata: Vec<(String, String)>,
}

impl RunLog {
    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{RUN_HEADER}")?;
        let mut line = String::with_capacity(256);
        for row in &self.rows {
            line.clear();
            for v in [row.t, row.r, row.e, row.y, row.u] {
                line.push_str(&fmt_num(v));
                line.push(',');
            }
            line.push_str(&fmt_opt(row.rho_bar));
            line.push(',');
            line.push_str(&fmt_opt(row.nu_bar));
            line.push(',');
            line.push_str(row.verdict.as_str());
            for v in row.m {
                line.push(',');
                line.push_str(&fmt_num(v));
            }
            line.push_str(if row.diverged { ",true\n" } else { ",false\n" });
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn events_csv(&self) -> String {
        let mut s = String::from(EVENT_HEADER);
        s.push('\n');
        for ev in &self.events {
            s.push_str(&ev.csv_line());
            s.push('\n');
        }
        s
    }
}

fn index_sum_terms(m: &MMatrix, rho_bar: Option<f64>, nu_bar: Option<f64>) -> (Option<(f64, f64)>, Option<f64>) {
    let (Some((nu_c, rho_c)), Some(rho), Some(nu)) = (m.claimed_indices(), rho_bar, nu_bar) else {
        return (None, None);
    };
    let pair = (rho + nu_c, nu + rho_c);
    let margin = match m.case {
        Case::Identity => return (None, None),
        Case::Ifp => pair.0,
        Case::Ofp => pair.1,
        Case::Ifofp | Case::Passive => pair.0.min(pair.1),
    };
    (Some(pair), Some(margin))
}

/// Runs the scenario from rest to `t_end` or until divergence.
pub fn run(s: &Scenario) -> Result<RunLog> {
    let solver = s.solver();
    let th = s.config.thresholds;
    let mitigation = s.config.mitigation;
    let mut stepper = s.stepper(false)?;
    let dc = stepper.controller_feedthrough();
    let mut est = PassivityEstimate::new(estimator_config(&s.config));
    let mut state = ReconfigState::new();
    let steps = solver.steps();
    let mut rows = Vec::with_capacity(steps);
    for _ in 0..steps {
        let rec = match stepper.step()? {
            Ok(rec) => rec,
            Err(_) => break,
        };
        est.update(rec.e, rec.y, solver.dt);
        let verdict = if mitigation {
            if let Some(m) = state.tick(&est, &th, s.gamma, dc, rec.t) {
                stepper.install(&m)?;
            }
            state.last_verdict()
        } else {
            state.observe(&est, &th, rec.t)
        };
        let (rho_bar, nu_bar) = (est.rho_bar(), est.nu_bar());
        let (index_sums, margin) = index_sum_terms(&state.current, rho_bar, nu_bar);
        let diverged = stepper.divergence().is_some();
        rows.push(Row {
            t: rec.t,
            r: rec.r,
            e: rec.e,
            y: rec.y,
            u: rec.u,
            rho_bar,
            nu_bar,
            verdict,
            m: state.current.entries(),
            diverged,
            index_sums,
            margin,
        });
        if diverged {
            break;
        }
    }
    debug_assert!(verdict_consistent(&rows, &est, &th));
    Ok(RunLog {
        name: s.name().to_string(),
        mitigation,
        eps_margin: th.eps_margin,
        rows,
        events: state.log,
        final_m: state.current,
        divergence: stepper.divergence(),
        metadata: metadata(s),
    })
}

fn verdict_consistent(rows: &[Row], est: &PassivityEstimate, th: &Thresholds) -> bool {
    rows.last().is_none_or(|r| r.diverged || r.verdict == detect(est, th))
}

fn metadata(s: &Scenario) -> Vec<(String, String)> {
    let c = &s.config;
    let sweep = FrequencySweep::default();
    vec![
        ("scenario".into(), c.name.clone()),
        ("scenario_sha256".into(), s.hash.clone()),
        ("version".into(), env!("CARGO_PKG_VERSION").into()),
        ("mitigation".into(), if c.mitigation { "on" } else { "off" }.into()),
        ("dt".into(), c.solver.dt.to_string()),
        ("t_end".into(), c.solver.t_end.to_string()),
        ("steps".into(), s.solver().steps().to_string()),
        ("method".into(), format!("{:?}", c.solver.method).to_lowercase()),
        (
            "window".into(),
            c.estimator.window.map_or("none".into(), |w| w.to_string()),
        ),
        ("warmup".into(), c.estimator.warmup.to_string()),
        ("eps_den".into(), c.estimator.eps_den.to_string()),
        ("rho0".into(), c.thresholds.rho0.to_string()),
        ("nu0".into(), c.thresholds.nu0.to_string()),
        ("eps_margin".into(), c.thresholds.eps_margin.to_string()),
        ("gain_safety".into(), c.controller.gain_safety.to_string()),
        ("gamma".into(), s.gamma.to_string()),
        (
            "gain_sweep".into(),
            format!(
                "{}..{} rad/s, {} points/decade",
                sweep.omega_min, sweep.omega_max, sweep.points_per_decade
            ),
        ),
        ("fault_ramp".into(), "linear".into()),
        ("divergence_threshold".into(), DIVERGENCE_THRESHOLD.to_string()),
        ("seed".into(), c.seed.to_string()),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub name: String,
    pub mitigation: bool,
    pub sup_y: f64,
    pub first_fault: Option<f64>,
    pub reconfigurations: usize,
    pub final_m: MMatrix,
    pub divergence_time: Option<f64>,
    pub last_reconfiguration: Option<f64>,
    /// Smallest compensated index-sum margin from the last reconfiguration on.
    pub min_margin_after_final: Option<f64>,
    pub eps_margin: f64,
    /// `(t, rho_bar + nu_c, nu_bar + rho_c)` sampled once per second.
    pub margin_trace: Vec<(f64, f64, f64)>,
    pub metadata: Vec<(String, String)>,
    pub critical_events: usize,
}

pub fn report(log: &RunLog) -> Summary {
    let sup_y = log.rows.iter().map(|r| r.y.abs()).fold(0.0, f64::max);
    let first_fault = log.rows.iter().find(|r| r.verdict.is_fault()).map(|r| r.t);
    let installs: Vec<f64> = log
        .events
        .iter()
        .filter(|e| matches!(e.action, Action::Synthesized(_)))
        .map(|e| e.t)
        .collect();
    let last_reconfiguration = installs.last().copied();
    let min_margin_after_final = last_reconfiguration.and_then(|t0| {
        log.rows
            .iter()
            .filter(|r| r.t >= t0)
            .filter_map(|r| r.margin)
            .reduce(f64::min)
    });
    let mut margin_trace = Vec::new();
    let mut next = 0.0;
    for r in &log.rows {
        if r.t + 1e-9 >= next {
            if let Some((a, b)) = r.index_sums {
                margin_trace.push((r.t, a, b));
            }
            next = r.t.floor() + 1.0;
        }
    }
    Summary {
        name: log.name.clone(),
        mitigation: log.mitigation,
        sup_y,
        first_fault,
        reconfigurations: installs.len(),
        final_m: log.final_m.clone(),
        divergence_time: log.divergence.map(|d| d.t),
        last_reconfiguration,
        min_margin_after_final,
        eps_margin: log.eps_margin,
        margin_trace,
        metadata: log.metadata.clone(),
        critical_events: log
            .events
            .iter()
            .filter(|e| matches!(e.action, Action::Critical(_)))
            .count(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.metadata {
            writeln!(f, "# {k} = {v}")?;
        }
        writeln!(f, "scenario            {}", self.name)?;
        writeln!(f, "mitigation          {}", if self.mitigation { "on" } else { "off" })?;
        writeln!(f, "sup|y|              {:.6}", self.sup_y)?;
        writeln!(
            f,
            "diverged            {}",
            self.divergence_time
                .map_or_else(|| "no".to_string(), |t| format!("yes, t = {t:.3}"))
        )?;
        writeln!(f, "first fault event   {}", opt(self.first_fault))?;
        writeln!(f, "reconfigurations    {}", self.reconfigurations)?;
        writeln!(f, "critical events     {}", self.critical_events)?;
        let m = &self.final_m;
        writeln!(
            f,
            "final M             {} [{:.6}, {:.6}; {:.6}, {:.6}]",
            m.case, m.m11, m.m12, m.m21, m.m22
        )?;
        if let Some(w) = &m.warning {
            writeln!(f, "final M warning     {w}")?;
        }
        writeln!(f, "last reconfig       {}", opt(self.last_reconfiguration))?;
        writeln!(
            f,
            "min margin after    {} (eps_margin {})",
            opt(self.min_margin_after_final),
            self.eps_margin
        )?;
        if !self.margin_trace.is_empty() {
            writeln!(f, "margin trace        t, rho_bar+nu_c, nu_bar+rho_c")?;
            let mut s = String::new();
            for (t, a, b) in &self.margin_trace {
                let _ = writeln!(s, "  {t:8.3} {a:+.6} {b:+.6}");
            }
            f.write_str(&s)?;
        }
        Ok(())
    }
}

/// Writes `<name>.csv`, `<name>.events.csv` and `<name>.summary.txt`.
pub fn write_outputs(log: &RunLog, dir: &Path) -> Result<Summary> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let csv = dir.join(format!("{}.csv", log.name));
    let file = std::fs::File::create(&csv).map_err(io(&csv))?;
    let mut w = std::io::BufWriter::new(file);
    log.write_csv(&mut w).map_err(io(&csv))?;
    w.flush().map_err(io(&csv))?;
    let events = dir.join(format!("{}.events.csv", log.name));
    std::fs::write(&events, log.events_csv()).map_err(io(&events))?;
    let summary = report(log);
    let path = dir.join(format!("{}.summary.txt", log.name));
    std::fs::write(&path, summary.to_string()).map_err(io(&path))?;
    Ok(summary)
}
