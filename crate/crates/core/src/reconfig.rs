//! Detection and reconfiguration state machine.
//!
//! Every tick classifies the current index estimates. A fault verdict whose
//! offending estimate is below its lowest value seen so far (the watermark)
//! triggers synthesis of a new wrapper:
//!
//! | verdict    | condition                 | design                               |
//! |------------|---------------------------|--------------------------------------|
//! | `RHO_LOW`  | `rho_bar < rho_min`       | IFP with `nu_t = eps - rho_bar`       |
//! | `NU_LOW`   | `nu_bar < nu_min`         | OFP with `rho_t = eps - nu_bar`       |
//! | `BOTH_LOW` | either below its watermark | IF-OFP with both targets              |
//!
//! A fault verdict that does not lower a watermark is already compensated and
//! causes no action. Synthesis or installation failures keep the previous
//! wrapper in place and are logged as `CRITICAL`.

use std::fmt::{self, Write as _};

use crate::mmatrix::{design_ifofp, design_ifp, design_ofp, Case, MMatrix};
use crate::passivity::{detect, PassivityEstimate, Thresholds, Verdict};
use crate::simcore::check_well_posed;

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Verdict changed, nothing to do.
    None,
    Synthesized(Case),
    Critical(String),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::None => f.write_str("NONE"),
            Action::Synthesized(case) => write!(f, "INSTALL_{case}"),
            Action::Critical(msg) => write!(f, "CRITICAL {}", msg.replace([',', '\n'], ";")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultEvent {
    pub t: f64,
    pub verdict: Verdict,
    pub rho_bar: Option<f64>,
    pub nu_bar: Option<f64>,
    pub action: Action,
    pub m: [f64; 4],
}

pub const EVENT_HEADER: &str = "t,verdict,rho_bar,nu_bar,action,m11,m12,m21,m22";

/// Number format shared by all CSV outputs (15 significant digits).
pub fn fmt_num(v: f64) -> String {
    format!("{v:.14e}")
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), fmt_num)
}

impl FaultEvent {
    pub fn csv_line(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{}",
            fmt_num(self.t),
            self.verdict,
            fmt_opt(self.rho_bar),
            fmt_opt(self.nu_bar),
            self.action
        );
        for v in self.m {
            s.push(',');
            s.push_str(&fmt_num(v));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct ReconfigState {
    pub rho_min: f64,
    pub nu_min: f64,
    pub current: MMatrix,
    pub log: Vec<FaultEvent>,
    pub manual_override: bool,
    last_verdict: Verdict,
    installs: usize,
}

impl Default for ReconfigState {
    fn default() -> Self {
        Self::new()
    }
}

impl ReconfigState {
    pub fn new() -> Self {
        Self {
            rho_min: f64::INFINITY,
            nu_min: f64::INFINITY,
            current: MMatrix::identity(),
            log: Vec::new(),
            manual_override: false,
            last_verdict: Verdict::Indeterminate,
            installs: 0,
        }
    }

    pub fn installs(&self) -> usize {
        self.installs
    }

    pub fn last_verdict(&self) -> Verdict {
        self.last_verdict
    }

    fn push(&mut self, t: f64, verdict: Verdict, est: &PassivityEstimate, action: Action) {
        self.log.push(FaultEvent {
            t,
            verdict,
            rho_bar: est.rho_bar(),
            nu_bar: est.nu_bar(),
            action,
            m: self.current.entries(),
        });
    }

    /// Records verdict transitions without acting on them.
    pub fn observe(&mut self, est: &PassivityEstimate, th: &Thresholds, t: f64) -> Verdict {
        let verdict = detect(est, th);
        if verdict != self.last_verdict {
            self.push(t, verdict, est, Action::None);
            self.last_verdict = verdict;
        }
        verdict
    }

    /// One pass of the detection loop. Returns a wrapper to install when one
    /// was synthesized; it has already been checked for well-posedness against
    /// a controller with feedthrough `dc`.
    pub fn tick(
        &mut self,
        est: &PassivityEstimate,
        th: &Thresholds,
        gamma: f64,
        dc: f64,
        t: f64,
    ) -> Option<MMatrix> {
        if self.manual_override {
            return None;
        }
        let verdict = detect(est, th);
        let changed = verdict != self.last_verdict;
        self.last_verdict = verdict;
        let (Some(rho), Some(nu)) = (est.rho_bar(), est.nu_bar()) else {
            if changed {
                self.push(t, verdict, est, Action::None);
            }
            return None;
        };
        let eps = th.eps_margin;
        let design = match verdict {
            Verdict::RhoLow if rho < self.rho_min => {
                self.rho_min = rho;
                Some(design_ifp(gamma, eps - rho))
            }
            Verdict::NuLow if nu < self.nu_min => {
                self.nu_min = nu;
                Some(design_ofp(gamma, eps - nu))
            }
            Verdict::BothLow if rho < self.rho_min || nu < self.nu_min => {
                self.rho_min = self.rho_min.min(rho);
                self.nu_min = self.nu_min.min(nu);
                Some(design_ifofp(gamma, eps - nu, eps - rho))
            }
            _ => None,
        };
        let Some(design) = design else {
            if changed {
                self.push(t, verdict, est, Action::None);
            }
            return None;
        };
        match design.and_then(|m| check_well_posed(&m, dc).map(|_| m)) {
            Ok(m) => {
                let case = m.case;
                self.current = m.clone();
                self.installs += 1;
                self.push(t, verdict, est, Action::Synthesized(case));
                Some(m)
            }
            Err(err) => {
                self.push(t, verdict, est, Action::Critical(err.to_string()));
                None
            }
        }
    }

    pub fn events_csv(&self) -> String {
        let mut s = String::from(EVENT_HEADER);
        s.push('\n');
        for ev in &self.log {
            s.push_str(&ev.csv_line());
            s.push('\n');
        }
        s
    }
}
