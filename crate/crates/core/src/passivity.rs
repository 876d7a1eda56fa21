//! Online passivity-index estimation from input/output data.
//!
//! For a system driven by `e` with output `y` the running estimates are
//!
//! ```text
//! rho_bar(t) = ∫ e y / ∫ y²      nu_bar(t) = ∫ e y / ∫ e²
//! ```
//!
//! which never fall below the true OFP and IFP indices of a system started
//! from rest. Integrals use the trapezoid rule with compensated summation and
//! can be restricted to a moving window.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPS_DEN: f64 = 1e-9;
pub const DEFAULT_WARMUP: f64 = 1.0;

/// Kahan-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let y = v - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    /// Moving-window length in seconds; `None` integrates from zero.
    pub window: Option<f64>,
    pub warmup: f64,
    pub eps_den: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            window: None,
            warmup: DEFAULT_WARMUP,
            eps_den: DEFAULT_EPS_DEN,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.window {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::config(format!("estimator.window must be positive, got {w}")));
            }
        }
        if !(self.warmup >= 0.0) {
            return Err(Error::config("estimator.warmup must be >= 0"));
        }
        if !(self.eps_den > 0.0) {
            return Err(Error::config("estimator.eps_den must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Increment {
    t_start: f64,
    ey: f64,
    yy: f64,
    ee: f64,
}

#[derive(Debug, Clone)]
pub struct PassivityEstimate {
    config: EstimatorConfig,
    i_ey: KahanSum,
    i_yy: KahanSum,
    i_ee: KahanSum,
    t: f64,
    last: Option<(f64, f64)>,
    history: VecDeque<Increment>,
    signal_fault: bool,
}

impl PassivityEstimate {
    pub fn new(config: EstimatorConfig) -> Self {
        Self {
            config,
            i_ey: KahanSum::default(),
            i_yy: KahanSum::default(),
            i_ee: KahanSum::default(),
            t: 0.0,
            last: None,
            history: VecDeque::new(),
            signal_fault: false,
        }
    }

    pub fn cumulative() -> Self {
        Self::new(EstimatorConfig::default())
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    /// Adds the sample `(e, y)` taken `dt` after the previous one. The first
    /// sample only seeds the trapezoid.
    pub fn update(&mut self, e: f64, y: f64, dt: f64) {
        if self.signal_fault {
            return;
        }
        if !e.is_finite() || !y.is_finite() {
            self.signal_fault = true;
            return;
        }
        let Some((pe, py)) = self.last.replace((e, y)) else {
            return;
        };
        let t_start = self.t;
        self.t += dt;
        let inc = Increment {
            t_start,
            ey: 0.5 * dt * (pe * py + e * y),
            yy: 0.5 * dt * (py * py + y * y),
            ee: 0.5 * dt * (pe * pe + e * e),
        };
        self.i_ey.add(inc.ey);
        self.i_yy.add(inc.yy);
        self.i_ee.add(inc.ee);
        if let Some(window) = self.config.window {
            self.history.push_back(inc);
            let horizon = self.t - window - 1e-9 * dt;
            while let Some(old) = self.history.front() {
                if old.t_start >= horizon {
                    break;
                }
                self.i_ey.add(-old.ey);
                self.i_yy.add(-old.yy);
                self.i_ee.add(-old.ee);
                self.history.pop_front();
            }
        }
    }

    /// Time covered since the first sample.
    pub fn elapsed(&self) -> f64 {
        self.t
    }

    pub fn i_ey(&self) -> f64 {
        self.i_ey.value()
    }

    pub fn i_yy(&self) -> f64 {
        self.i_yy.value().max(0.0)
    }

    pub fn i_ee(&self) -> f64 {
        self.i_ee.value().max(0.0)
    }

    pub fn rho_bar(&self) -> Option<f64> {
        let den = self.i_yy();
        (den > self.config.eps_den).then(|| self.i_ey() / den)
    }

    pub fn nu_bar(&self) -> Option<f64> {
        let den = self.i_ee();
        (den > self.config.eps_den).then(|| self.i_ey() / den)
    }

    pub fn signal_fault(&self) -> bool {
        self.signal_fault
    }

    /// Both ratios defined, warmup elapsed and no signal fault.
    pub fn ready(&self) -> bool {
        !self.signal_fault
            && self.t > self.config.warmup
            && self.rho_bar().is_some()
            && self.nu_bar().is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub rho0: f64,
    pub nu0: f64,
    #[serde(default = "default_eps_margin")]
    pub eps_margin: f64,
}

fn default_eps_margin() -> f64 {
    0.05
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !self.rho0.is_finite() || !self.nu0.is_finite() {
            return Err(Error::config("thresholds must be finite"));
        }
        if !(self.eps_margin > 0.0) || !self.eps_margin.is_finite() {
            return Err(Error::config(format!(
                "thresholds.eps_margin must be positive, got {}",
                self.eps_margin
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Nominal,
    RhoLow,
    NuLow,
    BothLow,
    Indeterminate,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Nominal => "NOMINAL",
            Verdict::RhoLow => "RHO_LOW",
            Verdict::NuLow => "NU_LOW",
            Verdict::BothLow => "BOTH_LOW",
            Verdict::Indeterminate => "INDETERMINATE",
        }
    }

    pub fn is_fault(self) -> bool {
        matches!(self, Verdict::RhoLow | Verdict::NuLow | Verdict::BothLow)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Verdict for given index estimates.
pub fn classify(rho_bar: Option<f64>, nu_bar: Option<f64>, th: &Thresholds) -> Verdict {
    match (rho_bar, nu_bar) {
        (Some(rho), Some(nu)) => match (rho < th.rho0, nu < th.nu0) {
            (false, false) => Verdict::Nominal,
            (true, false) => Verdict::RhoLow,
            (false, true) => Verdict::NuLow,
            (true, true) => Verdict::BothLow,
        },
        _ => Verdict::Indeterminate,
    }
}

/// Verdict for the estimator; indeterminate until [`PassivityEstimate::ready`].
pub fn detect(est: &PassivityEstimate, th: &Thresholds) -> Verdict {
    if !est.ready() {
        return Verdict::Indeterminate;
    }
    classify(est.rho_bar(), est.nu_bar(), th)
}

/// `∫ [(1 + eps delta) u y - delta y² - eps u²]` over a uniformly sampled
/// trace, trapezoid rule.
pub fn verify_dissipativity(u: &[f64], y: &[f64], dt: f64, eps: f64, delta: f64) -> f64 {
    running_supply(u, y, dt, eps, delta).last().copied().unwrap_or(0.0)
}

/// Running value of the supply integral at every sample.
pub fn running_supply(u: &[f64], y: &[f64], dt: f64, eps: f64, delta: f64) -> Vec<f64> {
    assert_eq!(u.len(), y.len(), "trace lengths differ");
    let w = |u: f64, y: f64| (1.0 + eps * delta) * u * y - delta * y * y - eps * u * u;
    let mut acc = KahanSum::default();
    let mut out = Vec::with_capacity(u.len());
    for k in 0..u.len() {
        if k > 0 {
            acc.add(0.5 * dt * (w(u[k - 1], y[k - 1]) + w(u[k], y[k])));
        }
        out.push(acc.value());
    }
    out
}
