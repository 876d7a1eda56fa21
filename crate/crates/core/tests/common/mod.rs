//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use passiguard::linsys::{tf_to_ss, RationalTF};
use passiguard::mmatrix::{simulate_wrapped, MMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FAMILIES: [&str; 10] = [
    "step", "square", "sine-slow", "sine-fast", "chirp", "multisine", "ramp-sat", "pulse", "noise", "decaying-sine",
];

/// Random stable proper SISO plant of order 1 to 3.
pub fn random_plant(rng: &mut ChaCha8Rng) -> RationalTF {
    let order = rng.random_range(1..=3usize);
    let mut den = vec![1.0];
    let mut remaining = order;
    while remaining > 0 {
        if remaining >= 2 && rng.random_bool(0.5) {
            let wn: f64 = rng.random_range(0.3..6.0);
            let zeta: f64 = rng.random_range(0.15..1.0);
            den = poly_mul(&den, &[1.0, 2.0 * zeta * wn, wn * wn]);
            remaining -= 2;
        } else {
            let p: f64 = rng.random_range(0.2..8.0);
            den = poly_mul(&den, &[1.0, p]);
            remaining -= 1;
        }
    }
    let nz = rng.random_range(0..=order);
    let mut num = vec![1.0];
    for _ in 0..nz {
        let z: f64 = rng.random_range(-3.0..8.0);
        num = poly_mul(&num, &[1.0, z]);
    }
    let k: f64 = rng.random_range(0.2..4.0);
    let num = num.into_iter().map(|c| c * k).collect();
    RationalTF::new(num, den).expect("valid plant")
}

pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Signal family `idx` as a function of continuous time. The noise family
/// interpolates seeded knots spaced 10 ms apart.
pub struct Signal {
    idx: usize,
    knots: Vec<f64>,
}

pub const NOISE_KNOT: f64 = 0.01;

impl Signal {
    pub fn new(idx: usize, horizon: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (horizon / NOISE_KNOT).ceil() as usize + 2;
        let mut lp = 0.0;
        let knots = (0..n)
            .map(|_| {
                let w: f64 = rng.random_range(-1.0..1.0);
                lp += NOISE_KNOT / 0.1 * (3.0 * w - lp);
                lp
            })
            .collect();
        Self { idx, knots }
    }

    pub fn at(&self, t: f64) -> f64 {
        match self.idx {
            0 => 1.0,
            1 => if (t % 4.0) < 2.0 { 1.0 } else { -1.0 },
            2 => (0.4 * t).sin(),
            3 => (7.0 * t).sin(),
            4 => (0.2 * t + 0.25 * t * t).sin(),
            5 => (0.3 * t).sin() + 0.5 * (2.1 * t).cos() + 0.25 * (9.0 * t).sin(),
            6 => (t / 3.0).min(1.0),
            7 => if (1.0..3.0).contains(&t) { 2.0 } else { 0.0 },
            8 => {
                let s = t / NOISE_KNOT;
                let i = s.floor() as usize;
                let f = s - i as f64;
                self.knots[i] * (1.0 - f) + self.knots[i + 1] * f
            }
            _ => (-0.2 * t).exp() * (1.5 * t).sin(),
        }
    }

    pub fn samples(&self, n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|k| self.at(k as f64 * dt)).collect()
    }
}

pub fn signal(idx: usize, n: usize, dt: f64, seed: u64) -> Vec<f64> {
    Signal::new(idx, n as f64 * dt, seed).samples(n, dt)
}

/// Sampled response of `tf` from rest to a zero-order-held input.
pub fn open_loop_zoh(tf: &RationalTF, input: &[f64], dt: f64) -> Vec<f64> {
    let ss = tf_to_ss(tf).expect("realizable");
    simulate_wrapped(&MMatrix::identity(), &ss, input, dt).expect("stable simulation")
}

/// Sampled response of `tf` from rest to the piecewise-linear interpolation
/// of `input`, which is the signal the trapezoid rule integrates exactly.
pub fn open_loop(tf: &RationalTF, input: &[f64], dt: f64) -> Vec<f64> {
    const N: usize = 3;
    let ss = tf_to_ss(tf).expect("realizable");
    let n = ss.order();
    assert!(n <= N);
    let (mut a, mut b, mut c) = ([[0.0; N]; N], [0.0; N], [0.0; N]);
    for (i, row) in a.iter_mut().enumerate().take(n) {
        for (j, v) in row.iter_mut().enumerate().take(n) {
            *v = ss.a[(i, j)];
        }
        b[i] = ss.b[(i, 0)];
        c[i] = ss.c[(0, i)];
    }
    let d = ss.d[(0, 0)];
    let f = |x: &[f64; N], u: f64| {
        let mut dx = [0.0; N];
        for i in 0..n {
            dx[i] = (0..n).map(|j| a[i][j] * x[j]).sum::<f64>() + b[i] * u;
        }
        dx
    };
    let axpy = |x: &[f64; N], k: &[f64; N], h: f64| {
        let mut out = *x;
        for i in 0..n {
            out[i] += h * k[i];
        }
        out
    };
    let mut x = [0.0; N];
    let mut out = Vec::with_capacity(input.len());
    for (k, &u0) in input.iter().enumerate() {
        out.push((0..n).map(|i| c[i] * x[i]).sum::<f64>() + d * u0);
        let u1 = input.get(k + 1).copied().unwrap_or(u0);
        let um = 0.5 * (u0 + u1);
        let k1 = f(&x, u0);
        let k2 = f(&axpy(&x, &k1, 0.5 * dt), um);
        let k3 = f(&axpy(&x, &k2, 0.5 * dt), um);
        let k4 = f(&axpy(&x, &k3, dt), u1);
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    out
}
