//! Fixed-step closed-loop simulation.
//!
//! The loop is the classic negative-feedback interconnection: the plant is
//! driven by `e = r - u`, the controller sees the plant output `y`, and `u` is
//! the feedback signal. An optional reconfiguration wrapper `M` sits around the
//! controller and maps `(c_in, c_out)` to `(y, u)`:
//!
//! ```text
//! [ y ]   [ m11 m12 ] [ c_in  ]
//! [ u ] = [ m21 m22 ] [ c_out ]
//! ```
//!
//! so the wrapped controller seen from the plant is
//! `(m21 + m22 C) / (m11 + m12 C)`. With `M = I` this is exactly the nominal
//! loop. All algebraic loops through feedthrough terms are scalar and solved in
//! closed form at every step; the states are then advanced with inputs held
//! constant over the step.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linsys::StateSpaceModel;
use crate::mmatrix::MMatrix;

/// A run is stopped once any state or the output exceeds this magnitude.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Smallest admissible magnitude of an algebraic-loop denominator.
pub const WELL_POSEDNESS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub method: Method,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 120.0,
            method: Method::Rk4,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config(format!("solver.dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return Err(Error::config(format!(
                "solver.t_end must be at least dt, got {}",
                self.t_end
            )));
        }
        Ok(())
    }

    /// Whole steps that fit in `t_end`; a trailing partial step is dropped.
    pub fn steps(&self) -> usize {
        let n = self.t_end / self.dt;
        let rounded = n.round();
        if (n - rounded).abs() < 1e-9 * n.max(1.0) {
            rounded as usize
        } else {
            n.floor() as usize
        }
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

/// Non-finite or runaway state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergence {
    pub t: f64,
    pub state_norm: f64,
}

/// One explicit step of `x' = f(t, x, u)` with `u` held over the step.
pub fn step_ode<F>(f: F, t: f64, x: &[f64], u: f64, dt: f64, method: Method) -> std::result::Result<Vec<f64>, Divergence>
where
    F: Fn(f64, &[f64], f64, &mut [f64]),
{
    let n = x.len();
    let mut next = x.to_vec();
    match method {
        Method::Euler => {
            let mut k1 = vec![0.0; n];
            f(t, x, u, &mut k1);
            for i in 0..n {
                next[i] = x[i] + dt * k1[i];
            }
        }
        Method::Rk4 => {
            let mut k1 = vec![0.0; n];
            let mut k2 = vec![0.0; n];
            let mut k3 = vec![0.0; n];
            let mut k4 = vec![0.0; n];
            let mut tmp = vec![0.0; n];
            f(t, x, u, &mut k1);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * dt * k1[i];
            }
            f(t + 0.5 * dt, &tmp, u, &mut k2);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * dt * k2[i];
            }
            f(t + 0.5 * dt, &tmp, u, &mut k3);
            for i in 0..n {
                tmp[i] = x[i] + dt * k3[i];
            }
            f(t + dt, &tmp, u, &mut k4);
            for i in 0..n {
                next[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Divergence {
            t: t + dt,
            state_norm: inf_norm(&next),
        })
    }
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) })
}

/// Sampled history of a signal for time-varying delayed reads.
#[derive(Debug, Clone)]
pub struct DelayLine {
    samples: VecDeque<(f64, f64)>,
    capacity: f64,
}

impl DelayLine {
    /// `capacity` is the longest delay (seconds) that must stay readable.
    pub fn new(capacity: f64) -> Self {
        Self {
            samples: VecDeque::new(),
            capacity: capacity.max(0.0),
        }
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn push(&mut self, t: f64, value: f64) -> Result<()> {
        if let Some(&(previous, _)) = self.samples.back() {
            if !(t > previous) {
                return Err(Error::NonMonotonicTime { previous, next: t });
            }
        }
        self.samples.push_back((t, value));
        // keep one sample older than the horizon for interpolation
        while self.samples.len() > 2 && self.samples[1].0 < t - self.capacity {
            self.samples.pop_front();
        }
        Ok(())
    }

    /// Value at `t - tau`, linearly interpolated; zero before the first sample.
    pub fn read(&self, t: f64, tau: f64) -> Result<f64> {
        if tau > self.capacity {
            return Err(Error::DelayExceedsCapacity {
                tau,
                capacity: self.capacity,
            });
        }
        let q = t - tau;
        if q < 0.0 {
            return Ok(0.0);
        }
        let Some(&(first_t, first_v)) = self.samples.front() else {
            return Ok(0.0);
        };
        if q < first_t {
            if first_t <= 0.0 {
                return Ok(0.0);
            }
            return Err(Error::DelayExceedsCapacity {
                tau,
                capacity: self.capacity,
            });
        }
        let idx = self.samples.partition_point(|&(s, _)| s <= q);
        if idx >= self.samples.len() {
            return Ok(self.samples.back().map(|s| s.1).unwrap_or(first_v));
        }
        let (t0, v0) = self.samples[idx - 1];
        let (t1, v1) = self.samples[idx];
        let frac = (q - t0) / (t1 - t0);
        Ok(v0 + frac * (v1 - v0))
    }

    /// Decomposes the delayed read at the time `t` of a sample that is about
    /// to be pushed: `value = weight * current + known`.
    pub fn split(&self, t: f64, tau: f64) -> Result<(f64, f64)> {
        if tau > self.capacity {
            return Err(Error::DelayExceedsCapacity {
                tau,
                capacity: self.capacity,
            });
        }
        let q = t - tau;
        if q >= t {
            return Ok((1.0, 0.0));
        }
        match self.samples.back() {
            Some(&(t_prev, v_prev)) if q > t_prev => {
                let frac = (q - t_prev) / (t - t_prev);
                Ok((frac, (1.0 - frac) * v_prev))
            }
            Some(_) => Ok((0.0, self.read(t, tau)?)),
            None if q >= 0.0 => Ok((1.0, 0.0)),
            None => Ok((0.0, 0.0)),
        }
    }
}

/// A SISO plant `y = h(x, t) + D v`, `x' = f(x, v, t)` whose input `v` is the
/// loop error after an optional input delay.
pub trait Plant: Send {
    fn order(&self) -> usize;
    fn feedthrough(&self) -> f64;
    /// Output without the feedthrough term.
    fn output(&self, x: &[f64], t: f64) -> f64;
    fn derivative(&self, x: &[f64], v: f64, t: f64, dx: &mut [f64]);
    fn input_delay(&self, _t: f64) -> f64 {
        0.0
    }
    fn max_delay(&self) -> f64 {
        0.0
    }
}

/// Dense row-major SISO realization used inside the stepping loop.
#[derive(Debug, Clone)]
pub(crate) struct Siso {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: f64,
}

impl Siso {
    pub(crate) fn new(sys: &StateSpaceModel) -> Result<Self> {
        if !sys.is_siso() {
            return Err(Error::Unsupported("only SISO systems can be wired".into()));
        }
        let n = sys.order();
        Ok(Self {
            n,
            a: (0..n * n).map(|k| sys.a[(k / n, k % n)]).collect(),
            b: (0..n).map(|i| sys.b[(i, 0)]).collect(),
            c: (0..n).map(|j| sys.c[(0, j)]).collect(),
            d: sys.d[(0, 0)],
        })
    }

    pub(crate) fn order(&self) -> usize {
        self.n
    }

    pub(crate) fn d(&self) -> f64 {
        self.d
    }

    pub(crate) fn cx(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    pub(crate) fn deriv(&self, x: &[f64], u: f64, dx: &mut [f64]) {
        let n = self.n;
        if n == 0 {
            return;
        }
        for ((d, row), b) in dx.iter_mut().zip(self.a.chunks_exact(n)).zip(&self.b) {
            *d = row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() + b * u;
        }
    }
}

/// LTI plant with an optional delay schedule on its input.
pub struct LtiPlant {
    sys: Siso,
    delay: Option<Box<dyn Fn(f64) -> f64 + Send>>,
    max_delay: f64,
}

impl LtiPlant {
    pub fn new(sys: &StateSpaceModel) -> Result<Self> {
        Ok(Self {
            sys: Siso::new(sys)?,
            delay: None,
            max_delay: 0.0,
        })
    }

    pub fn with_delay(mut self, delay: impl Fn(f64) -> f64 + Send + 'static, max_delay: f64) -> Self {
        self.delay = Some(Box::new(delay));
        self.max_delay = max_delay;
        self
    }
}

impl Plant for LtiPlant {
    fn order(&self) -> usize {
        self.sys.order()
    }
    fn feedthrough(&self) -> f64 {
        self.sys.d()
    }
    fn output(&self, x: &[f64], _t: f64) -> f64 {
        self.sys.cx(x)
    }
    fn derivative(&self, x: &[f64], v: f64, _t: f64, dx: &mut [f64]) {
        self.sys.deriv(x, v, dx)
    }
    fn input_delay(&self, t: f64) -> f64 {
        self.delay.as_ref().map_or(0.0, |d| d(t))
    }
    fn max_delay(&self) -> f64 {
        self.max_delay
    }
}

/// Signals at one solver step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub r: f64,
    pub e: f64,
    pub y: f64,
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wiring {
    Nominal,
    Wrapped,
}

/// Stateful closed-loop stepper.
pub struct LoopStepper {
    plant: Box<dyn Plant>,
    controller: Siso,
    reference: Box<dyn Fn(f64) -> f64 + Send>,
    wiring: Wiring,
    m: [f64; 4],
    xp: Vec<f64>,
    xc: Vec<f64>,
    line: DelayLine,
    solver: SolverConfig,
    k: usize,
    diverged: Option<Divergence>,
}

/// Checks `|m11 + m12 D_c| >= tol` for a wrapper around a controller with
/// feedthrough `dc`.
pub fn check_well_posed(m: &MMatrix, dc: f64) -> Result<()> {
    let value = m.m11 + m.m12 * dc;
    if value.abs() < WELL_POSEDNESS_TOL || !value.is_finite() {
        Err(Error::WellPosedness { value })
    } else {
        Ok(())
    }
}

impl LoopStepper {
    /// Plain feedback loop without a wrapper.
    pub fn nominal(
        plant: Box<dyn Plant>,
        controller: &StateSpaceModel,
        reference: Box<dyn Fn(f64) -> f64 + Send>,
        solver: SolverConfig,
    ) -> Result<Self> {
        Self::build(plant, controller, reference, solver, Wiring::Nominal, &MMatrix::identity())
    }

    /// Loop with the controller wrapped by `m`.
    pub fn wrapped(
        plant: Box<dyn Plant>,
        controller: &StateSpaceModel,
        m: &MMatrix,
        reference: Box<dyn Fn(f64) -> f64 + Send>,
        solver: SolverConfig,
    ) -> Result<Self> {
        Self::build(plant, controller, reference, solver, Wiring::Wrapped, m)
    }

    fn build(
        plant: Box<dyn Plant>,
        controller: &StateSpaceModel,
        reference: Box<dyn Fn(f64) -> f64 + Send>,
        solver: SolverConfig,
        wiring: Wiring,
        m: &MMatrix,
    ) -> Result<Self> {
        solver.validate()?;
        let controller = Siso::new(controller)?;
        check_well_posed(m, controller.d())?;
        let direct = 1.0 + plant.feedthrough() * (m.m21 + m.m22 * controller.d()) / (m.m11 + m.m12 * controller.d());
        if direct.abs() < WELL_POSEDNESS_TOL {
            return Err(Error::IllPosedLoop { denominator: direct });
        }
        let capacity = plant.max_delay() + 2.0 * solver.dt;
        Ok(Self {
            xp: vec![0.0; plant.order()],
            xc: vec![0.0; controller.order()],
            line: DelayLine::new(capacity),
            plant,
            controller,
            reference,
            wiring,
            m: [m.m11, m.m12, m.m21, m.m22],
            solver,
            k: 0,
            diverged: None,
        })
    }

    /// Replaces the wrapper between steps; controller and plant states are kept.
    pub fn install(&mut self, m: &MMatrix) -> Result<()> {
        check_well_posed(m, self.controller.d())?;
        self.wiring = Wiring::Wrapped;
        self.m = [m.m11, m.m12, m.m21, m.m22];
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.solver.time(self.k)
    }

    pub fn steps_taken(&self) -> usize {
        self.k
    }

    pub fn solver(&self) -> &SolverConfig {
        &self.solver
    }

    pub fn plant_state(&self) -> &[f64] {
        &self.xp
    }

    pub fn controller_state(&self) -> &[f64] {
        &self.xc
    }

    pub fn divergence(&self) -> Option<Divergence> {
        self.diverged
    }

    pub fn controller_feedthrough(&self) -> f64 {
        self.controller.d()
    }

    /// Solves the loop at the current time, records it, and advances all
    /// states by one step. After a divergence the stepper refuses to move.
    pub fn step(&mut self) -> Result<std::result::Result<StepRecord, Divergence>> {
        if let Some(d) = self.diverged {
            return Ok(Err(d));
        }
        let t = self.time();
        let dt = self.solver.dt;
        let r = (self.reference)(t);
        let tau = self.plant.input_delay(t);
        let (w, known) = self.line.split(t, tau)?;
        let h = self.plant.output(&self.xp, t);
        let dp = self.plant.feedthrough();
        let ccx = self.controller.cx(&self.xc);
        let dc = self.controller.d();

        let (y, u, c_in) = match self.wiring {
            Wiring::Nominal => {
                let den = 1.0 + dp * w * dc;
                if den.abs() < WELL_POSEDNESS_TOL {
                    return Err(Error::IllPosedLoop { denominator: den });
                }
                let y = (h + dp * (w * (r - ccx) + known)) / den;
                let u = ccx + dc * y;
                (y, u, y)
            }
            Wiring::Wrapped => {
                let [m11, m12, m21, m22] = self.m;
                let mden = m11 + m12 * dc;
                let beta = (m21 + m22 * dc) / mden;
                let alpha = m22 * ccx - beta * (m12 * ccx);
                let den = 1.0 + dp * w * beta;
                if den.abs() < WELL_POSEDNESS_TOL {
                    return Err(Error::IllPosedLoop { denominator: den });
                }
                let y = (h + dp * (w * (r - alpha) + known)) / den;
                let u = alpha + beta * y;
                let c_in = (y - m12 * ccx) / mden;
                (y, u, c_in)
            }
        };
        let e = r - u;
        let v = w * e + known;
        self.line.push(t, e)?;
        let record = StepRecord { t, r, e, y, u };

        let plant = &self.plant;
        let method = self.solver.method;
        let next_p = step_ode(|t, x, v, dx| plant.derivative(x, v, t, dx), t, &self.xp, v, dt, method);
        let ctrl = &self.controller;
        let next_c = step_ode(|_, x, u, dx| ctrl.deriv(x, u, dx), t, &self.xc, c_in, dt, method);
        self.k += 1;
        match (next_p, next_c) {
            (Ok(p), Ok(c)) => {
                self.xp = p;
                self.xc = c;
                let norm = inf_norm(&self.xp).max(inf_norm(&self.xc)).max(y.abs());
                if !(norm <= DIVERGENCE_THRESHOLD) {
                    self.diverged = Some(Divergence {
                        t: self.time(),
                        state_norm: norm,
                    });
                }
            }
            (Err(d), _) | (_, Err(d)) => self.diverged = Some(d),
        }
        Ok(Ok(record))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::{tf_to_ss, RationalTF};

    fn decay(_: f64, x: &[f64], _: f64, dx: &mut [f64]) {
        dx[0] = -x[0];
    }

    #[test]
    fn rk4_exponential_step() {
        let x = step_ode(decay, 0.0, &[1.0], 0.0, 0.01, Method::Rk4).unwrap();
        assert!((x[0] - 0.990049834).abs() < 1e-9);
    }

    #[test]
    fn zero_field_keeps_state() {
        let x = step_ode(|_, _, _, dx: &mut [f64]| dx[0] = 0.0, 0.0, &[3.25], 0.0, 0.7, Method::Rk4).unwrap();
        assert_eq!(x[0], 3.25);
    }

    #[test]
    fn euler_integrates_input() {
        let x = step_ode(|_, _, u, dx: &mut [f64]| dx[0] = u, 0.0, &[0.0], 1.0, 0.01, Method::Euler).unwrap();
        assert_eq!(x[0], 0.01);
    }

    #[test]
    fn non_finite_state_is_divergence() {
        let r = step_ode(|_, _, _, dx: &mut [f64]| dx[0] = f64::INFINITY, 0.0, &[0.0], 0.0, 0.1, Method::Euler);
        assert!(r.is_err());
    }

    #[test]
    fn delay_line_reads() {
        let mut line = DelayLine::new(1.0);
        for k in 0..=100 {
            line.push(k as f64 * 0.01, 5.0).unwrap();
        }
        assert_eq!(line.read(1.0, 0.3).unwrap(), 5.0);

        let mut ramp = DelayLine::new(1.0);
        for k in 0..=100 {
            let t = k as f64 * 0.01;
            ramp.push(t, t).unwrap();
        }
        assert!((ramp.read(1.0, 0.25).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(ramp.read(0.1, 0.5).unwrap(), 0.0);
        assert!(matches!(ramp.read(1.0, 2.0), Err(Error::DelayExceedsCapacity { .. })));
        assert!(matches!(ramp.push(0.5, 0.0), Err(Error::NonMonotonicTime { .. })));
    }

    #[test]
    fn split_matches_read_after_push() {
        let mut line = DelayLine::new(1.0);
        for k in 0..50 {
            line.push(k as f64 * 0.01, (k as f64).sin()).unwrap();
        }
        let t = 0.5;
        let current = 0.5f64.sin() * 3.0;
        for tau in [0.0, 0.004, 0.01, 0.013, 0.3] {
            let (w, known) = line.split(t, tau).unwrap();
            let mut pushed = line.clone();
            pushed.push(t, current).unwrap();
            let direct = pushed.read(t, tau).unwrap();
            assert!((w * current + known - direct).abs() < 1e-12, "tau {tau}");
        }
    }

    fn unity() -> StateSpaceModel {
        StateSpaceModel::static_gain(1.0)
    }

    #[test]
    fn static_loop_halves_step() {
        let plant = LtiPlant::new(&unity()).unwrap();
        let mut lp = LoopStepper::nominal(Box::new(plant), &unity(), Box::new(|_| 1.0), SolverConfig::default()).unwrap();
        let rec = lp.step().unwrap().unwrap();
        assert_eq!(rec.y, 0.5);
    }

    #[test]
    fn wrapped_static_controller_gain() {
        let plant = LtiPlant::new(&unity()).unwrap();
        let m = MMatrix::raw(1.0, 0.0, 0.1, 1.0);
        let k = StateSpaceModel::static_gain(2.0);
        let mut lp = LoopStepper::wrapped(Box::new(plant), &k, &m, Box::new(|_| 1.0), SolverConfig::default()).unwrap();
        let rec = lp.step().unwrap().unwrap();
        assert!((rec.u - 2.1 * rec.y).abs() < 1e-15);
        // y = r - u, u = 2.1 y
        assert!((rec.y - 1.0 / 3.1).abs() < 1e-15);
    }

    #[test]
    fn singular_wrapper_is_rejected() {
        let plant = LtiPlant::new(&unity()).unwrap();
        let m = MMatrix::raw(0.0, 0.0, 1.0, 1.0);
        let k = StateSpaceModel::static_gain(2.0);
        let r = LoopStepper::wrapped(Box::new(plant), &k, &m, Box::new(|_| 1.0), SolverConfig::default());
        assert!(matches!(r, Err(Error::WellPosedness { .. })));
    }

    #[test]
    fn ill_posed_static_loop() {
        let plant = LtiPlant::new(&unity()).unwrap();
        let k = StateSpaceModel::static_gain(-1.0);
        let r = LoopStepper::nominal(Box::new(plant), &k, Box::new(|_| 1.0), SolverConfig::default());
        assert!(matches!(r, Err(Error::IllPosedLoop { .. })));
    }

    #[test]
    fn lead_loop_settles_to_dc_value() {
        let g = tf_to_ss(&RationalTF::new(vec![1.0, 3.0, 2.0], vec![1.0, 1.0, 2.0]).unwrap()).unwrap();
        let c = tf_to_ss(&RationalTF::first_order(1.37, 0.91, 1.08)).unwrap();
        let solver = SolverConfig { t_end: 40.0, ..Default::default() };
        let mut lp = LoopStepper::nominal(Box::new(LtiPlant::new(&g).unwrap()), &c, Box::new(|_| 1.0), solver).unwrap();
        let c0 = 1.37 * 0.91 / 1.08;
        let y_ss = 1.0 / (1.0 + c0);
        for _ in 0..solver.steps() {
            let rec = lp.step().unwrap().unwrap();
            if rec.t > 30.0 {
                assert!((rec.y - y_ss).abs() < 0.01);
            }
        }
    }

    #[test]
    fn zero_reference_stays_at_rest() {
        let g = tf_to_ss(&RationalTF::new(vec![1.0, 3.0, 2.0], vec![1.0, 1.0, 2.0]).unwrap()).unwrap();
        let c = tf_to_ss(&RationalTF::first_order(1.37, 0.91, 1.08)).unwrap();
        let solver = SolverConfig { t_end: 2.0, ..Default::default() };
        let mut lp = LoopStepper::nominal(Box::new(LtiPlant::new(&g).unwrap()), &c, Box::new(|_| 0.0), solver).unwrap();
        for _ in 0..solver.steps() {
            let rec = lp.step().unwrap().unwrap();
            assert_eq!((rec.e, rec.y, rec.u), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn steps_truncate_partial() {
        let s = SolverConfig { dt: 0.3, t_end: 1.0, method: Method::Rk4 };
        assert_eq!(s.steps(), 3);
        let s = SolverConfig { dt: 1e-3, t_end: 120.0, method: Method::Rk4 };
        assert_eq!(s.steps(), 120_000);
    }
}
