//! Reconfiguration matrices.
//!
//! `M = [[m11, m12], [m21, m22]]` wraps a finite-gain stable controller `C`
//! with gain at most `gamma` so that the wrapped map `Σ0: y -> u` becomes
//! passive, OFP, IFP or IF-OFP with a prescribed index. Each designer pins
//! the free parameters of its feasible set deterministically and re-checks the
//! case's inequalities before returning. [`certify`] spot-checks the claimed
//! property by simulating `Σ0` on a fixed set of probe inputs.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linsys::StateSpaceModel;
use crate::passivity::running_supply;
use crate::simcore::{check_well_posed, step_ode, Method, Siso};

/// Constraint slack required by the post-synthesis checks.
pub const CONSTRAINT_MARGIN: f64 = 1e-12;
/// Certification fails when a running supply integral drops below this.
pub const CERTIFY_TOL: f64 = -1e-6;
/// Upper bound on `rho_target * nu_target` for the IF-OFP designer.
pub const IFOFP_PRODUCT_CAP: f64 = 0.24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Case {
    Identity,
    Passive,
    Ofp,
    Ifp,
    Ifofp,
}

impl Case {
    pub fn as_str(self) -> &'static str {
        match self {
            Case::Identity => "IDENTITY",
            Case::Passive => "PASSIVE",
            Case::Ofp => "OFP",
            Case::Ifp => "IFP",
            Case::Ifofp => "IFOFP",
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MMatrix {
    pub m11: f64,
    pub m12: f64,
    pub m21: f64,
    pub m22: f64,
    pub case: Case,
    /// IF-OFP shape parameter in (0, 1).
    pub a: Option<f64>,
    pub gamma_used: f64,
    pub rho_target: Option<f64>,
    pub nu_target: Option<f64>,
    pub warning: Option<String>,
}

impl MMatrix {
    pub fn identity() -> Self {
        Self::raw(1.0, 0.0, 0.0, 1.0)
    }

    /// Unchecked matrix, tagged as identity case. Used for hand-built wrappers.
    pub fn raw(m11: f64, m12: f64, m21: f64, m22: f64) -> Self {
        Self {
            m11,
            m12,
            m21,
            m22,
            case: Case::Identity,
            a: None,
            gamma_used: 0.0,
            rho_target: None,
            nu_target: None,
            warning: None,
        }
    }

    pub fn det(&self) -> f64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    pub fn entries(&self) -> [f64; 4] {
        [self.m11, self.m12, self.m21, self.m22]
    }

    /// Index pair `(eps, delta)` the case guarantees for `Σ0`, i.e. the
    /// weights of `∫ (1 + eps delta) y u - delta u² - eps y²` with input `y`
    /// and output `u`. `None` for the identity.
    pub fn claimed_indices(&self) -> Option<(f64, f64)> {
        let (m11, m12, m21, m22) = (self.m11, self.m12, self.m21, self.m22);
        match self.case {
            Case::Identity => None,
            Case::Passive => Some((0.0, 0.0)),
            Case::Ofp => Some((0.0, 0.5 * (m11 / m21 + m12 / m22))),
            Case::Ifp => Some((0.5 * (m21 / m11 + m22 / m12), 0.0)),
            Case::Ifofp => {
                let a = self.a.unwrap_or(f64::NAN);
                Some((0.5 * a * m21 / m11, 0.5 * m11 / m21))
            }
        }
    }

    /// Achieved IFP index of `Σ0` (zero when only OFP is claimed).
    pub fn nu_c(&self) -> Option<f64> {
        self.claimed_indices().map(|(eps, _)| eps)
    }

    /// Achieved OFP index of `Σ0` (zero when only IFP is claimed).
    pub fn rho_c(&self) -> Option<f64> {
        self.claimed_indices().map(|(_, delta)| delta)
    }

    /// The case's inequalities evaluated at this matrix.
    pub fn constraints(&self) -> Vec<Constraint> {
        let (m11, m12, m21, m22, g) = (self.m11, self.m12, self.m21, self.m22, self.gamma_used);
        use ConstraintKind::*;
        match self.case {
            Case::Identity => vec![],
            Case::Passive => vec![
                Constraint::new("m11 = m21", m11 - m21, Equal),
                Constraint::new("m12 = -m22", m12 + m22, Equal),
                Constraint::new("m11 >= m22*gamma", m11 - m22 * g, AtLeast),
                Constraint::new("m22*gamma > 0", m22 * g, Positive),
            ],
            Case::Ofp => vec![
                Constraint::new("m21 >= m22*gamma", m21 - m22 * g, AtLeast),
                Constraint::new("m22*gamma > 0", m22 * g, Positive),
                Constraint::new("m11*m22 > m12*m21", m11 * m22 - m12 * m21, Positive),
                Constraint::new("m12*m21 > 0", m12 * m21, Positive),
            ],
            Case::Ifp => vec![
                Constraint::new("m11 >= m12*gamma", m11 - m12 * g, AtLeast),
                Constraint::new("m12*gamma > 0", m12 * g, Positive),
                Constraint::new("m12*m21 > m11*m22", m12 * m21 - m11 * m22, Positive),
                Constraint::new("m11*m22 > 0", m11 * m22, Positive),
            ],
            Case::Ifofp => {
                let a = self.a.unwrap_or(f64::NAN);
                let bound = m22 * g / (1.0 - a).sqrt();
                vec![
                    Constraint::new("m11 > 0", m11, Positive),
                    Constraint::new("m12 = 0", m12, Equal),
                    Constraint::new("m21 >= m22*gamma/sqrt(1-a)", m21 - bound, AtLeast),
                    Constraint::new("m22*gamma/sqrt(1-a) > 0", bound, Positive),
                    Constraint::new("a > 0", a, Positive),
                    Constraint::new("a < 1", 1.0 - a, Positive),
                ]
            }
        }
    }

    pub fn check_constraints(&self) -> Result<()> {
        let failed: Vec<String> = self
            .constraints()
            .iter()
            .filter(|c| !c.holds())
            .map(|c| format!("{} (slack {:e})", c.label, c.slack))
            .collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::ConstraintViolation(format!("{}: {}", self.case, failed.join(", "))))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `lhs - rhs == 0`
    Equal,
    /// `lhs - rhs >= margin`
    AtLeast,
    /// `value >= margin`
    Positive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: &'static str,
    pub slack: f64,
    pub kind: ConstraintKind,
}

impl Constraint {
    fn new(label: &'static str, slack: f64, kind: ConstraintKind) -> Self {
        Self { label, slack, kind }
    }

    pub fn holds(&self) -> bool {
        match self.kind {
            ConstraintKind::Equal => self.slack == 0.0,
            ConstraintKind::AtLeast | ConstraintKind::Positive => self.slack >= CONSTRAINT_MARGIN,
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTarget(format!("gamma must be positive, got {gamma}")))
    }
}

fn check_target(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTarget(format!("{name} must be positive, got {v}")))
    }
}

fn finish(m: MMatrix) -> Result<MMatrix> {
    m.check_constraints()?;
    Ok(m)
}

/// Wrapper making `Σ0` passive.
///
/// The printed constraint set `m11 = m21, m22 = -m21, m11 >= m22 gamma > 0`
/// contradicts itself (`m22 < 0` and `m22 gamma > 0`). The sign relation is
/// placed on the second column instead: `m11 = m21`, `m12 = -m22`,
/// `m11 >= m22 gamma > 0`, which gives the passive Cayley-type map
/// `(1 + k C) / (1 - k C)` with `k gamma <= 1`.
pub fn design_passive(gamma: f64) -> Result<MMatrix> {
    check_gamma(gamma)?;
    let m11 = 1.05 * gamma;
    finish(MMatrix {
        case: Case::Passive,
        gamma_used: gamma,
        ..MMatrix::raw(m11, -1.0, m11, 1.0)
    })
}

/// Wrapper making `Σ0` OFP with index at least `rho_target`.
pub fn design_ofp(gamma: f64, rho_target: f64) -> Result<MMatrix> {
    check_gamma(gamma)?;
    check_target("rho_target", rho_target)?;
    let m22 = 1.0;
    let m21 = 2.0 * gamma;
    let m12 = m22 * rho_target;
    let m11 = f64::max(2.0 * m12 * m21 / m22, rho_target * m21);
    finish(MMatrix {
        case: Case::Ofp,
        gamma_used: gamma,
        rho_target: Some(rho_target),
        ..MMatrix::raw(m11, m12, m21, m22)
    })
}

/// Wrapper making `Σ0` IFP with index at least `nu_target`.
pub fn design_ifp(gamma: f64, nu_target: f64) -> Result<MMatrix> {
    check_gamma(gamma)?;
    check_target("nu_target", nu_target)?;
    let m11 = 1.0;
    let m12 = 1.0 / (2.0 * gamma);
    let m22 = m12 * nu_target;
    let m21 = f64::max(2.0 * m11 * m22 / m12, nu_target);
    finish(MMatrix {
        case: Case::Ifp,
        gamma_used: gamma,
        nu_target: Some(nu_target),
        ..MMatrix::raw(m11, m12, m21, m22)
    })
}

/// Wrapper making `Σ0` IF-OFP with `delta0 >= rho_target` and
/// `eps0 >= nu_target`.
///
/// `delta0 * eps0 = a / 4 < 1/4`, so joint targets whose product reaches
/// [`IFOFP_PRODUCT_CAP`] are scaled down by a common factor and the result
/// carries a warning.
pub fn design_ifofp(gamma: f64, rho_target: f64, nu_target: f64) -> Result<MMatrix> {
    check_gamma(gamma)?;
    check_target("rho_target", rho_target)?;
    check_target("nu_target", nu_target)?;
    let (mut rho_t, mut nu_t) = (rho_target, nu_target);
    let mut warning = None;
    let product = rho_t * nu_t;
    if product >= IFOFP_PRODUCT_CAP {
        let s = (IFOFP_PRODUCT_CAP / product).sqrt();
        rho_t *= s;
        nu_t *= s;
        warning = Some(format!(
            "targets (rho {rho_target}, nu {nu_target}) have product {product} >= {IFOFP_PRODUCT_CAP}; \
             scaled to (rho {rho_t}, nu {nu_t})"
        ));
    }
    let a = f64::min(4.0 * rho_t * nu_t * 1.01, 0.99);
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Infeasible {
            product: rho_t * nu_t,
            bound: IFOFP_PRODUCT_CAP,
        });
    }
    let m22 = 1.0;
    let m21 = m22 * gamma / (1.0 - a).sqrt() * 1.05;
    let m11 = 2.0 * rho_t * m21;
    finish(MMatrix {
        case: Case::Ifofp,
        a: Some(a),
        gamma_used: gamma,
        rho_target: Some(rho_t),
        nu_target: Some(nu_t),
        warning,
        ..MMatrix::raw(m11, 0.0, m21, m22)
    })
}

/// Probe input for certification.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub name: String,
    pub samples: Vec<f64>,
}

/// The fixed certification probe set: steps, a pulse, a square wave, sines
/// and low-pass filtered uniform noise drawn from `seed`.
pub fn probe_set(dt: f64, duration: f64, seed: u64) -> Vec<Probe> {
    let n = (duration / dt).round() as usize + 1;
    let time = |k: usize| k as f64 * dt;
    let make = |name: String, f: &dyn Fn(f64) -> f64| Probe {
        name,
        samples: (0..n).map(|k| f(time(k))).collect(),
    };
    let mut probes = vec![
        make("step(1)".into(), &|_| 1.0),
        make("step(-2)".into(), &|_| -2.0),
        make("step(1)@5".into(), &|t| if t >= 5.0 { 1.0 } else { 0.0 }),
        make("pulse(0..2)".into(), &|t| if t < 2.0 { 1.0 } else { 0.0 }),
        make("square(4)".into(), &|t| if (t % 4.0) < 2.0 { 1.0 } else { -1.0 }),
    ];
    for omega in [0.05, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0] {
        probes.push(make(format!("sin({omega})"), &|t| (omega * t).sin()));
    }
    probes.push(make("ramp-sat".into(), &|t| (t / 5.0).min(1.0)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for j in 0..6 {
        let tc = [0.05, 0.2, 1.0, 0.05, 0.2, 1.0][j];
        let mut state = 0.0;
        let samples = (0..n)
            .map(|_| {
                let w: f64 = rng.random_range(-1.0..1.0);
                state += dt / tc * (w * 3.0 - state);
                state
            })
            .collect();
        probes.push(Probe {
            name: format!("noise(tc={tc},#{j})"),
            samples,
        });
    }
    probes
}

/// Runs `Σ0` (input `y`, output `u`) on a sampled input from rest.
pub fn simulate_wrapped(m: &MMatrix, controller: &StateSpaceModel, input: &[f64], dt: f64) -> Result<Vec<f64>> {
    let c = Siso::new(controller)?;
    check_well_posed(m, c.d())?;
    let den = m.m11 + m.m12 * c.d();
    let mut x = vec![0.0; c.order()];
    let mut out = Vec::with_capacity(input.len());
    for (k, &y) in input.iter().enumerate() {
        let ccx = c.cx(&x);
        let c_in = (y - m.m12 * ccx) / den;
        let c_out = ccx + c.d() * c_in;
        out.push(m.m21 * c_in + m.m22 * c_out);
        x = step_ode(|_, x, u, dx| c.deriv(x, u, dx), k as f64 * dt, &x, c_in, dt, Method::Rk4)
            .map_err(|d| Error::Unstable { max_real_part: d.state_norm })?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub name: String,
    pub min_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub case: Case,
    pub eps: f64,
    pub delta: f64,
    pub probes: Vec<ProbeResult>,
}

impl Certificate {
    pub fn min_residual(&self) -> f64 {
        self.probes
            .iter()
            .map(|p| p.min_residual)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn passed(&self) -> bool {
        self.min_residual() >= CERTIFY_TOL
    }
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "case {} eps {:.6} delta {:.6}", self.case, self.eps, self.delta)?;
        for p in &self.probes {
            writeln!(f, "  {:<18} min residual {:+.3e}", p.name, p.min_residual)?;
        }
        write!(
            f,
            "{}: min residual {:+.3e}",
            if self.passed() { "CERTIFIED" } else { "CERTIFICATION FAILURE" },
            self.min_residual()
        )
    }
}

/// Simulates `Σ0` on every probe and records the smallest running value of
/// the supply integral for the case's claimed indices.
///
/// The identity wrapper is checked against plain passivity.
pub fn certify(m: &MMatrix, controller: &StateSpaceModel, probes: &[Probe], dt: f64) -> Result<Certificate> {
    controller.ensure_stable()?;
    let (eps, delta) = m.claimed_indices().unwrap_or((0.0, 0.0));
    let mut results = Vec::with_capacity(probes.len());
    for p in probes {
        let u = simulate_wrapped(m, controller, &p.samples, dt)?;
        let supply = running_supply(&p.samples, &u, dt, eps, delta);
        let min_residual = supply.iter().copied().fold(f64::INFINITY, f64::min);
        results.push(ProbeResult {
            name: p.name.clone(),
            min_residual,
        });
    }
    Ok(Certificate {
        case: m.case,
        eps,
        delta,
        probes: results,
    })
}

/// Certification with the default probe set (20 s at 1 ms).
pub fn certify_default(m: &MMatrix, controller: &StateSpaceModel, seed: u64) -> Result<Certificate> {
    let dt = 1e-3;
    certify(m, controller, &probe_set(dt, 20.0, seed), dt)
}
