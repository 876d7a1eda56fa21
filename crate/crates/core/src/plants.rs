//! The three benchmark plants and their fault schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsys::{tf_to_ss, RationalTF, StateSpaceModel};
use crate::simcore::{LtiPlant, Plant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    InputDelayRamp,
    DynamicsSwap,
    SpringSoftening,
}

impl FaultKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::InputDelayRamp => "input_delay_ramp",
            FaultKind::DynamicsSwap => "dynamics_swap",
            FaultKind::SpringSoftening => "spring_softening",
        }
    }
}

/// Fault magnitude ramps linearly from zero at `t_start` to `magnitude` at
/// `t_full` and is held afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSchedule {
    pub kind: FaultKind,
    pub t_start: f64,
    pub t_full: f64,
    pub magnitude: f64,
}

impl FaultSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_start <= self.t_full) || !self.t_start.is_finite() || !self.t_full.is_finite() {
            return Err(Error::config(format!(
                "fault.t_start ({}) must not exceed fault.t_full ({})",
                self.t_start, self.t_full
            )));
        }
        if !self.magnitude.is_finite() {
            return Err(Error::config("fault.magnitude must be finite"));
        }
        match self.kind {
            FaultKind::InputDelayRamp if self.magnitude < 0.0 => {
                Err(Error::config("input delay magnitude must be >= 0"))
            }
            FaultKind::SpringSoftening if self.magnitude > 0.0 => {
                Err(Error::config("spring softening magnitude must be <= 0"))
            }
            _ => Ok(()),
        }
    }

    /// Ramp value at `t`.
    pub fn level(&self, t: f64) -> f64 {
        if t < self.t_start {
            0.0
        } else if t >= self.t_full {
            self.magnitude
        } else {
            self.magnitude * (t - self.t_start) / (self.t_full - self.t_start)
        }
    }

    /// Whether the fault is switched on at `t` (used by the binary swap).
    pub fn active(&self, t: f64) -> bool {
        self.magnitude != 0.0 && t >= self.t_start
    }

    fn expect(&self, kind: FaultKind) -> Result<()> {
        self.validate()?;
        if self.kind != kind {
            return Err(Error::config(format!(
                "fault kind {} does not fit this plant (expected {})",
                self.kind.as_str(),
                kind.as_str()
            )));
        }
        Ok(())
    }
}

/// `G(s) = (s^2 + 3s + 2) / (s^2 + s + 2)`.
pub fn ex1_tf() -> RationalTF {
    RationalTF::new(vec![1.0, 3.0, 2.0], vec![1.0, 1.0, 2.0]).expect("valid")
}

/// Lead compensator `1.37 (s + 0.91) / (s + 1.08)` used with the first two plants.
pub fn lead_controller() -> RationalTF {
    RationalTF::first_order(1.37, 0.91, 1.08)
}

/// Lag compensator `4.8 (s + 3.006) / (s + 2.485)` used with the spring.
pub fn lag_controller() -> RationalTF {
    RationalTF::first_order(4.8, 3.006, 2.485)
}

/// LTI plant with a ramped actuator delay.
pub fn plant_ex1(schedule: FaultSchedule) -> Result<LtiPlant> {
    schedule.expect(FaultKind::InputDelayRamp)?;
    let ss = tf_to_ss(&ex1_tf())?;
    Ok(LtiPlant::new(&ss)?.with_delay(move |t| schedule.level(t), schedule.magnitude))
}

/// The same plant in state form; at the fault time the second state equation
/// picks up a quadratic term `-0.5 x2^2`.
#[derive(Debug, Clone, Copy)]
pub struct SwapPlant {
    schedule: FaultSchedule,
}

pub fn plant_ex2(schedule: FaultSchedule) -> Result<SwapPlant> {
    schedule.expect(FaultKind::DynamicsSwap)?;
    Ok(SwapPlant { schedule })
}

impl Plant for SwapPlant {
    fn order(&self) -> usize {
        2
    }
    fn feedthrough(&self) -> f64 {
        1.0
    }
    fn output(&self, x: &[f64], _t: f64) -> f64 {
        x[0]
    }
    fn derivative(&self, x: &[f64], v: f64, t: f64, dx: &mut [f64]) {
        dx[0] = -x[0] - 2.0 * x[1] + 2.0 * v;
        dx[1] = if self.schedule.active(t) {
            x[0] - 0.5 * x[1] * x[1]
        } else {
            x[0]
        };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MassDamperSpring {
    pub m: f64,
    pub c: f64,
    pub k: f64,
}

impl Default for MassDamperSpring {
    fn default() -> Self {
        Self {
            m: 2.0,
            c: 3.0,
            k: 10.0,
        }
    }
}

impl MassDamperSpring {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0) {
            return Err(Error::config(format!("plant.m must be positive, got {}", self.m)));
        }
        if !(self.c >= 0.0) {
            return Err(Error::config(format!("plant.c must be >= 0, got {}", self.c)));
        }
        if !(self.k > 0.0) {
            return Err(Error::config(format!("plant.k must be positive, got {}", self.k)));
        }
        Ok(())
    }
}

/// Base-excited mass on a damper and a cubic spring:
/// `m (y'' - u'') + c (y' - u') + k z + alpha z^3 = 0` with `z = y - u`, where
/// the base displacement `u` is the plant input.
///
/// Integrated without differentiating the input. With `p = m y' - c u` the
/// equations become `y' = (p + c u) / m` and `p' = -c y' - k z - alpha z^3`,
/// so `y = x[0]` has no feedthrough.
#[derive(Debug, Clone, Copy)]
pub struct SpringPlant {
    params: MassDamperSpring,
    schedule: FaultSchedule,
}

pub fn plant_ex3(params: MassDamperSpring, schedule: FaultSchedule) -> Result<SpringPlant> {
    params.validate()?;
    schedule.expect(FaultKind::SpringSoftening)?;
    Ok(SpringPlant { params, schedule })
}

impl SpringPlant {
    pub fn alpha(&self, t: f64) -> f64 {
        self.schedule.level(t)
    }

    /// Relative acceleration `z''` for relative position `z1`, velocity `z2`
    /// and base acceleration `base_accel`.
    pub fn relative_accel(&self, z1: f64, z2: f64, base_accel: f64, t: f64) -> f64 {
        let MassDamperSpring { m, c, k } = self.params;
        -(c * z2 + k * z1 + self.alpha(t) * z1.powi(3)) / m - base_accel
    }
}

impl Plant for SpringPlant {
    fn order(&self) -> usize {
        2
    }
    fn feedthrough(&self) -> f64 {
        0.0
    }
    fn output(&self, x: &[f64], _t: f64) -> f64 {
        x[0]
    }
    fn derivative(&self, x: &[f64], v: f64, t: f64, dx: &mut [f64]) {
        let MassDamperSpring { m, c, k } = self.params;
        let velocity = (x[1] + c * v) / m;
        let z = x[0] - v;
        dx[0] = velocity;
        dx[1] = -c * velocity - k * z - self.alpha(t) * z * z * z;
    }
}

/// Fault-free LTI plant from a transfer function.
pub fn plant_tf(tf: &RationalTF) -> Result<LtiPlant> {
    let ss: StateSpaceModel = tf_to_ss(tf)?;
    LtiPlant::new(&ss)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delay() -> FaultSchedule {
        FaultSchedule {
            kind: FaultKind::InputDelayRamp,
            t_start: 35.0,
            t_full: 40.0,
            magnitude: 0.5,
        }
    }

    fn swap() -> FaultSchedule {
        FaultSchedule {
            kind: FaultKind::DynamicsSwap,
            t_start: 40.0,
            t_full: 40.0,
            magnitude: 1.0,
        }
    }

    fn softening() -> FaultSchedule {
        FaultSchedule {
            kind: FaultKind::SpringSoftening,
            t_start: 40.0,
            t_full: 50.0,
            magnitude: -1.0,
        }
    }

    #[test]
    fn delay_ramp() {
        let p = plant_ex1(delay()).unwrap();
        assert_eq!(p.input_delay(37.5), 0.25);
        assert_eq!(p.input_delay(10.0), 0.0);
        assert_eq!(p.input_delay(100.0), 0.5);
        assert_eq!(p.max_delay(), 0.5);
    }

    #[test]
    fn swap_dynamics() {
        let p = plant_ex2(swap()).unwrap();
        let mut dx = [0.0; 2];
        p.derivative(&[1.0, 1.0], 0.0, 39.9, &mut dx);
        assert_eq!(dx[1], 1.0);
        p.derivative(&[1.0, 1.0], 0.0, 40.1, &mut dx);
        assert_eq!(dx[1], 0.5);
        for t in [0.0, 45.0] {
            p.derivative(&[0.0, 0.0], 0.0, t, &mut dx);
            assert_eq!(dx, [0.0, 0.0]);
        }
    }

    #[test]
    fn spring_examples() {
        let p = plant_ex3(MassDamperSpring::default(), softening()).unwrap();
        assert_eq!(p.relative_accel(1.0, 0.0, 0.0, 0.0), -5.0);
        assert_eq!(p.alpha(45.0), -0.5);
        let mut dx = [1.0; 2];
        p.derivative(&[0.0, 0.0], 0.0, 47.0, &mut dx);
        assert_eq!(dx, [0.0, 0.0]);
    }

    #[test]
    fn spring_matches_relative_form() {
        // held base displacement: z'' from the momentum form equals relative_accel
        let p = plant_ex3(MassDamperSpring::default(), softening()).unwrap();
        let (y, yd, u, t) = (0.7, -0.3, 0.2, 46.0);
        let x = [y, 2.0 * yd - 3.0 * u];
        let mut dx = [0.0; 2];
        p.derivative(&x, u, t, &mut dx);
        assert!((dx[0] - yd).abs() < 1e-15);
        let ydd = (dx[1] + 3.0 * 0.0) / 2.0 + 0.0;
        // p' = m y'' - c u' with u' = 0
        assert!((ydd - p.relative_accel(y - u, yd, 0.0, t)).abs() < 1e-12);
    }

    #[test]
    fn schedule_validation() {
        let mut s = delay();
        s.magnitude = -0.1;
        assert!(s.validate().is_err());
        let mut s = softening();
        s.magnitude = 0.5;
        assert!(s.validate().is_err());
        let mut s = delay();
        s.t_full = 30.0;
        assert!(s.validate().is_err());
        assert!(plant_ex1(swap()).is_err());
        let bad = MassDamperSpring { m: 0.0, ..Default::default() };
        assert!(plant_ex3(bad, softening()).is_err());
    }
}
