//! Linear time-invariant systems.
//!
//! SISO transfer functions, their state-space realization, frequency
//! response evaluation and the frequency-sweep oracles used throughout the
//! crate: a grid estimate of the L2 (H-infinity) gain and grid estimates of
//! the input feed-forward (IFP) and output feedback (OFP) passivity indices.
//!
//! The sweep oracles only ever see a finite grid. The gain they report is a
//! lower bound on the true H-infinity norm and the indices are upper bounds on
//! the true indices; [`gain_bound`] inflates the gain by a safety factor before
//! it is used as a constraint.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

/// Default inflation applied to a grid gain before it is used as `gamma`.
pub const DEFAULT_GAIN_SAFETY: f64 = 1.05;

/// SISO transfer function `num(s) / den(s)`, coefficients in descending powers.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTF {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl RationalTF {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if den.is_empty() {
            return Err(Error::InvalidModel("denominator is empty".into()));
        }
        if den[0] == 0.0 {
            return Err(Error::InvalidModel(
                "leading denominator coefficient is zero".into(),
            ));
        }
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) {
            return Err(Error::InvalidModel("non-finite coefficient".into()));
        }
        let first = num.iter().position(|&c| c != 0.0);
        let num = match first {
            Some(i) => num[i..].to_vec(),
            None => vec![0.0],
        };
        Ok(Self { num, den })
    }

    pub fn constant(gain: f64) -> Self {
        Self {
            num: vec![gain],
            den: vec![1.0],
        }
    }

    /// `gain * (s + zero) / (s + pole)`, the lead/lag compensator shape.
    pub fn first_order(gain: f64, zero: f64, pole: f64) -> Self {
        Self {
            num: vec![gain, gain * zero],
            den: vec![1.0, pole],
        }
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn num_degree(&self) -> usize {
        self.num.len() - 1
    }

    pub fn den_degree(&self) -> usize {
        self.den.len() - 1
    }

    pub fn is_proper(&self) -> bool {
        self.num_degree() <= self.den_degree()
    }

    pub fn eval(&self, s: Complex<f64>) -> Complex<f64> {
        horner(&self.num, s) / horner(&self.den, s)
    }
}

fn horner(coeffs: &[f64], s: Complex<f64>) -> Complex<f64> {
    coeffs
        .iter()
        .fold(Complex::new(0.0, 0.0), |acc, &c| acc * s + c)
}

/// Continuous-time realization `x' = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "A must be square, got {}x{}",
                n,
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(Error::InvalidModel(format!(
                "B must have {n} rows, got {}",
                b.nrows()
            )));
        }
        if c.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "C must have {n} columns, got {}",
                c.ncols()
            )));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::InvalidModel(format!(
                "D must be {}x{}, got {}x{}",
                c.nrows(),
                b.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    /// Memoryless gain `y = k u`.
    pub fn static_gain(k: f64) -> Self {
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, 1),
            c: DMatrix::zeros(1, 0),
            d: DMatrix::from_element(1, 1, k),
        }
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_siso(&self) -> bool {
        self.inputs() == 1 && self.outputs() == 1
    }

    /// Largest real part among the eigenvalues of `A` (`-inf` for a static map).
    pub fn spectral_abscissa(&self) -> f64 {
        if self.order() == 0 {
            return f64::NEG_INFINITY;
        }
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_abscissa() < 0.0
    }

    pub(crate) fn ensure_stable(&self) -> Result<()> {
        let max_real_part = self.spectral_abscissa();
        if max_real_part < 0.0 {
            Ok(())
        } else {
            Err(Error::Unstable { max_real_part })
        }
    }

    /// Scalar feedthrough of a SISO model.
    pub fn feedthrough(&self) -> f64 {
        self.d[(0, 0)]
    }
}

/// Series connection: the output of `first` drives `second`.
pub fn series(first: &StateSpaceModel, second: &StateSpaceModel) -> Result<StateSpaceModel> {
    if first.outputs() != second.inputs() {
        return Err(Error::InvalidModel(format!(
            "cannot cascade {} outputs into {} inputs",
            first.outputs(),
            second.inputs()
        )));
    }
    let (n1, n2) = (first.order(), second.order());
    let n = n1 + n2;
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (n1, n1)).copy_from(&first.a);
    a.view_mut((n1, n1), (n2, n2)).copy_from(&second.a);
    a.view_mut((n1, 0), (n2, n1))
        .copy_from(&(&second.b * &first.c));

    let mut b = DMatrix::zeros(n, first.inputs());
    b.view_mut((0, 0), (n1, first.inputs())).copy_from(&first.b);
    b.view_mut((n1, 0), (n2, first.inputs()))
        .copy_from(&(&second.b * &first.d));

    let mut c = DMatrix::zeros(second.outputs(), n);
    c.view_mut((0, 0), (second.outputs(), n1))
        .copy_from(&(&second.d * &first.c));
    c.view_mut((0, n1), (second.outputs(), n2)).copy_from(&second.c);

    let d = &second.d * &first.d;
    StateSpaceModel::new(a, b, c, d)
}

/// Log-spaced frequency grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencySweep {
    pub omega_min: f64,
    pub omega_max: f64,
    pub points_per_decade: usize,
}

impl Default for FrequencySweep {
    fn default() -> Self {
        Self {
            omega_min: 1e-3,
            omega_max: 1e4,
            points_per_decade: 200,
        }
    }
}

impl FrequencySweep {
    pub fn new(omega_min: f64, omega_max: f64, points_per_decade: usize) -> Result<Self> {
        let sweep = Self {
            omega_min,
            omega_max,
            points_per_decade,
        };
        sweep.validate()?;
        Ok(sweep)
    }

    fn validate(&self) -> Result<()> {
        if !(self.omega_min > 0.0) || !self.omega_min.is_finite() {
            return Err(Error::InvalidSweep("omega_min must be positive".into()));
        }
        if !(self.omega_min < self.omega_max) || !self.omega_max.is_finite() {
            return Err(Error::InvalidSweep(
                "omega_min must be below a finite omega_max".into(),
            ));
        }
        if self.points_per_decade == 0 {
            return Err(Error::InvalidSweep("points_per_decade must be >= 1".into()));
        }
        Ok(())
    }

    /// Grid points, both endpoints included.
    pub fn grid(&self) -> Vec<f64> {
        let lo = self.omega_min.log10();
        let hi = self.omega_max.log10();
        let steps = ((hi - lo) * self.points_per_decade as f64).ceil().max(1.0) as usize;
        (0..=steps)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / steps as f64))
            .collect()
    }
}

/// Controllable canonical realization of a proper SISO transfer function.
///
/// The state is scaled so that the leading nonzero entry of `C` is one; for
/// `(s^2+3s+2)/(s^2+s+2)` this yields `x1' = -x1 - 2 x2 + 2u`, `x2' = x1`,
/// `y = x1 + u`.
pub fn tf_to_ss(tf: &RationalTF) -> Result<StateSpaceModel> {
    if !tf.is_proper() {
        return Err(Error::Improper {
            num_degree: tf.num_degree(),
            den_degree: tf.den_degree(),
        });
    }
    let lead = tf.den[0];
    let den: Vec<f64> = tf.den.iter().map(|c| c / lead).collect();
    let n = den.len() - 1;
    let mut num = vec![0.0; n + 1 - tf.num.len()];
    num.extend(tf.num.iter().map(|c| c / lead));

    let d = num[0];
    let residual: Vec<f64> = (1..=n).map(|i| num[i] - d * den[i]).collect();

    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        a[(0, j)] = -den[j + 1];
    }
    for i in 1..n {
        a[(i, i - 1)] = 1.0;
    }
    let mut b = DMatrix::zeros(n, 1);
    let mut c = DMatrix::zeros(1, n);
    if n > 0 {
        let scale = residual.iter().copied().find(|v| *v != 0.0).unwrap_or(1.0);
        b[(0, 0)] = scale;
        for j in 0..n {
            c[(0, j)] = residual[j] / scale;
        }
    }
    StateSpaceModel::new(a, b, c, DMatrix::from_element(1, 1, d))
}

/// `C (j omega I - A)^-1 B + D`.
pub fn freq_response(sys: &StateSpaceModel, omega: f64) -> Result<DMatrix<Complex<f64>>> {
    let d = sys.d.map(|v| Complex::new(v, 0.0));
    let n = sys.order();
    if n == 0 {
        return Ok(d);
    }
    let jw = Complex::new(0.0, omega);
    let resolvent =
        DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { jw } else { Complex::new(0.0, 0.0) };
            diag - sys.a[(i, j)]
        });
    let scale = resolvent.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    let lu = resolvent.lu();
    let u = lu.u();
    let pivot_min = (0..n).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if pivot_min <= 1e-13 * scale {
        return Err(Error::SingularResolvent { omega });
    }
    let b = sys.b.map(|v| Complex::new(v, 0.0));
    let x = lu.solve(&b).ok_or(Error::SingularResolvent { omega })?;
    let c = sys.c.map(|v| Complex::new(v, 0.0));
    Ok(c * x + d)
}

fn max_singular_value(m: &DMatrix<Complex<f64>>) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].norm();
    }
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Largest singular value of the frequency response over the sweep grid.
///
/// A grid maximum can only under-estimate the H-infinity norm; use
/// [`gain_bound`] when the value feeds a constraint.
pub fn l2_gain(sys: &StateSpaceModel, sweep: &FrequencySweep) -> Result<f64> {
    sweep.validate()?;
    sys.ensure_stable()?;
    let mut gain = max_singular_value(&sys.d.map(|v| Complex::new(v, 0.0)));
    for omega in sweep.grid() {
        gain = gain.max(max_singular_value(&freq_response(sys, omega)?));
    }
    Ok(gain)
}

/// [`l2_gain`] inflated by `safety` (>= 1).
pub fn gain_bound(sys: &StateSpaceModel, sweep: &FrequencySweep, safety: f64) -> Result<f64> {
    if !(safety >= 1.0) {
        return Err(Error::InvalidModel(format!(
            "gain safety factor must be >= 1, got {safety}"
        )));
    }
    Ok(l2_gain(sys, sweep)? * safety)
}

/// Grid estimates of the IFP index `nu` and the OFP index `rho` of a stable
/// SISO LTI system.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexOracle {
    pub nu: f64,
    pub rho: f64,
    /// Grid frequencies where `|G(jw)| = 0` and `1/G` was skipped.
    pub skipped: Vec<f64>,
}

pub fn true_indices_lti(sys: &StateSpaceModel, sweep: &FrequencySweep) -> Result<IndexOracle> {
    if !sys.is_siso() {
        return Err(Error::Unsupported(
            "passivity index oracle is SISO only".into(),
        ));
    }
    sweep.validate()?;
    sys.ensure_stable()?;
    let mut nu = f64::INFINITY;
    let mut rho = f64::INFINITY;
    let mut skipped = Vec::new();
    for omega in sweep.grid() {
        let g = freq_response(sys, omega)?[(0, 0)];
        nu = nu.min(g.re);
        if g.norm() == 0.0 {
            skipped.push(omega);
        } else {
            rho = rho.min(g.inv().re);
        }
    }
    Ok(IndexOracle { nu, rho, skipped })
}
