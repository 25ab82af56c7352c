//! Bessel and Hankel functions of integer order and real argument.
//!
//! `J_m` comes from Miller's backward recurrence normalised with
//! `J_0 + 2 sum J_2k = 1`. `Y_0` and `Y_1` come from the Neumann series over
//! the same `J` sequence for moderate arguments and from the Hankel asymptotic
//! expansion for large ones; higher `Y_m` use the (stable) upward recurrence.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;
use thiserror::Error;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Highest order supported by default (the truncation used for the disk series).
pub const DEFAULT_MAX_ORDER: u32 = 200;

/// Above this argument `Y_0`, `Y_1` switch to the Hankel asymptotic expansion.
const ASYMPTOTIC_SWITCH: f64 = 25.0;

/// Rescale threshold for the unnormalised backward recurrence.
const RESCALE: f64 = 1e250;

/// Ratios `|J_m / H_m|` below this are flushed to zero.
const RATIO_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SpecfunError {
    #[error("order {order} exceeds the supported maximum {max}")]
    UnsupportedOrder { order: i64, max: u32 },
    #[error("argument {0} is outside the domain of the function")]
    Domain(f64),
}

/// Order limit and accuracy target of the Bessel kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecfunConfig {
    pub max_order: u32,
    pub rel_tol: f64,
}

impl Default for SpecfunConfig {
    fn default() -> Self {
        Self {
            max_order: DEFAULT_MAX_ORDER,
            rel_tol: 1e-12,
        }
    }
}

impl SpecfunConfig {
    pub fn new(max_order: u32, rel_tol: f64) -> Result<Self, SpecfunError> {
        if max_order < 1 {
            return Err(SpecfunError::UnsupportedOrder {
                order: max_order as i64,
                max: 1,
            });
        }
        if !(rel_tol > 0.0) {
            return Err(SpecfunError::Domain(rel_tol));
        }
        Ok(Self { max_order, rel_tol })
    }

    fn check_order(&self, m: i64) -> Result<usize, SpecfunError> {
        let abs = m.unsigned_abs();
        if abs > self.max_order as u64 {
            return Err(SpecfunError::UnsupportedOrder {
                order: m,
                max: self.max_order,
            });
        }
        Ok(abs as usize)
    }

    /// `J_m(x)` for `x >= 0`.
    pub fn bessel_j(&self, m: i64, x: f64) -> Result<f64, SpecfunError> {
        let n = self.check_order(m)?;
        if !(x >= 0.0) || !x.is_finite() {
            return Err(SpecfunError::Domain(x));
        }
        let value = bessel_j_seq(n, x)[n];
        Ok(reflect(m, value))
    }

    /// `Y_m(x)` for `x > 0`.
    pub fn bessel_y(&self, m: i64, x: f64) -> Result<f64, SpecfunError> {
        let n = self.check_order(m)?;
        if !(x > 0.0) || !x.is_finite() {
            return Err(SpecfunError::Domain(x));
        }
        let value = bessel_y_seq(n, x)[n];
        Ok(reflect(m, value))
    }

    /// `H_m^{(1)}(x) = J_m(x) + i Y_m(x)` for `x > 0`.
    pub fn hankel1(&self, m: i64, x: f64) -> Result<Complex64, SpecfunError> {
        let n = self.check_order(m)?;
        if !(x > 0.0) || !x.is_finite() {
            return Err(SpecfunError::Domain(x));
        }
        let (j, y) = bessel_jy_seq(n, x);
        Ok(Complex64::new(reflect(m, j[n]), reflect(m, y[n])))
    }

    /// `J_m(x) / H_m^{(1)}(x)` for `m = 0..=n`, with underflowing ratios set to 0.
    pub fn j_over_h1_seq(&self, n: u32, x: f64) -> Result<Vec<Complex64>, SpecfunError> {
        self.check_order(n as i64)?;
        if !(x > 0.0) || !x.is_finite() {
            return Err(SpecfunError::Domain(x));
        }
        let (j, y) = bessel_jy_seq(n as usize, x);
        Ok(j.iter().zip(&y).map(|(&j, &y)| j_over_h1(j, y)).collect())
    }
}

/// `J_m(x)` with the default configuration.
pub fn bessel_j(m: i64, x: f64) -> Result<f64, SpecfunError> {
    SpecfunConfig::default().bessel_j(m, x)
}

/// `Y_m(x)` with the default configuration.
pub fn bessel_y(m: i64, x: f64) -> Result<f64, SpecfunError> {
    SpecfunConfig::default().bessel_y(m, x)
}

/// `H_m^{(1)}(x)` with the default configuration.
pub fn hankel1(m: i64, x: f64) -> Result<Complex64, SpecfunError> {
    SpecfunConfig::default().hankel1(m, x)
}

fn reflect(m: i64, value: f64) -> f64 {
    if m < 0 && m % 2 != 0 {
        -value
    } else {
        value
    }
}

fn j_over_h1(j: f64, y: f64) -> Complex64 {
    if j == 0.0 || !y.is_finite() {
        return Complex64::new(0.0, 0.0);
    }
    // J/(J+iY) = t(t-i)/(t^2+1) with t = J/Y; stays finite when |Y| >> |J|.
    let ratio = if y.abs() > j.abs() {
        let t = j / y;
        Complex64::new(t * t, -t) / (t * t + 1.0)
    } else {
        let s = y / j;
        Complex64::new(1.0, -s) / (1.0 + s * s)
    };
    if ratio.norm() < RATIO_FLOOR {
        Complex64::new(0.0, 0.0)
    } else {
        ratio
    }
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn miller_start(n: usize, x: f64) -> usize {
    let base = (n as f64).max(x) + 15.0 + 12.0 * x.cbrt();
    let start = base.ceil() as usize;
    start + (start % 2)
}

/// Unnormalised backward recurrence; returns the sequence for orders
/// `0..=start` and the normalisation sum `J_0 + 2 sum J_2k`.
fn miller_raw(n: usize, x: f64) -> (Vec<f64>, f64) {
    let start = miller_start(n, x);
    let mut f = vec![0.0; start + 2];
    f[start] = 1.0;
    let mut norm = 0.0;
    for m in (1..=start).rev() {
        let next = (2.0 * m as f64 / x) * f[m] - f[m + 1];
        f[m - 1] = next;
        if next.abs() > RESCALE {
            let scale = 1.0 / RESCALE;
            for v in f[m - 1..=start].iter_mut() {
                *v *= scale;
            }
            norm *= scale;
        }
        let order = m - 1;
        if order == 0 {
            norm += f[0];
        } else if order % 2 == 0 {
            norm += 2.0 * f[order];
        }
    }
    f.truncate(start + 1);
    (f, norm)
}

fn small_argument_j_seq(n: usize, x: f64) -> Vec<f64> {
    // Three terms of the power series: relative error below 1e-24 for x < 1e-6.
    let q = 0.25 * x * x;
    (0..=n)
        .map(|m| {
            if x == 0.0 {
                return if m == 0 { 1.0 } else { 0.0 };
            }
            let lead = (m as f64 * (0.5 * x).ln() - ln_factorial(m)).exp();
            let mf = m as f64;
            lead * (1.0 - q / (mf + 1.0) + q * q / (2.0 * (mf + 1.0) * (mf + 2.0)))
        })
        .collect()
}

/// `J_m(x)` for `m = 0..=n`, `x >= 0`.
pub fn bessel_j_seq(n: usize, x: f64) -> Vec<f64> {
    if x < 1e-6 {
        return small_argument_j_seq(n, x);
    }
    let (f, norm) = miller_raw(n, x);
    f[..=n].iter().map(|v| v / norm).collect()
}

/// `(J_m(x), Y_m(x))` for `m = 0..=n`, `x > 0`.
pub fn bessel_jy_seq(n: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let upto = n.max(1);
    let (j_full, y0, y1) = if x < 1e-6 {
        let j = small_argument_j_seq(upto, x);
        let l = (0.5 * x).ln() + EULER_GAMMA;
        let y0 = FRAC_2_PI * (l * j[0] + 0.25 * x * x);
        let y1 = -FRAC_2_PI / x + FRAC_2_PI * l * j[1] - x / (2.0 * PI);
        (j, y0, y1)
    } else {
        let (f, norm) = miller_raw(upto, x);
        let j: Vec<f64> = f.iter().map(|v| v / norm).collect();
        let (y0, y1) = if x >= ASYMPTOTIC_SWITCH {
            let (_, _, y0, y1) = hankel_asymptotic_01(x);
            (y0, y1)
        } else {
            neumann_y01(&j, x)
        };
        (j, y0, y1)
    };
    let mut y = Vec::with_capacity(upto + 1);
    y.push(y0);
    y.push(y1);
    for m in 1..upto {
        let prev = y[m];
        let next = if prev.is_finite() {
            let v = (2.0 * m as f64 / x) * prev - y[m - 1];
            if v.is_finite() {
                v
            } else {
                f64::NEG_INFINITY
            }
        } else {
            f64::NEG_INFINITY
        };
        y.push(next);
    }
    let mut j = j_full;
    j.truncate(n + 1);
    y.truncate(n + 1);
    (j, y)
}

/// `Y_m(x)` for `m = 0..=n`, `x > 0`.
pub fn bessel_y_seq(n: usize, x: f64) -> Vec<f64> {
    bessel_jy_seq(n, x).1
}

/// `H_m^{(1)}(x)` for `m = 0..=n`, `x > 0`.
pub fn hankel1_seq(n: usize, x: f64) -> Vec<Complex64> {
    let (j, y) = bessel_jy_seq(n, x);
    j.into_iter()
        .zip(y)
        .map(|(j, y)| Complex64::new(j, y))
        .collect()
}

/// Neumann series for `Y_0`, `Y_1` given the normalised `J` sequence.
fn neumann_y01(j: &[f64], x: f64) -> (f64, f64) {
    let l = (0.5 * x).ln() + EULER_GAMMA;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut k = 1;
    while 2 * k < j.len() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let kf = k as f64;
        s0 += sign * j[2 * k] / kf;
        let upper = j.get(2 * k + 1).copied().unwrap_or(0.0);
        s1 += sign * (j[2 * k - 1] - upper) / kf;
        k += 1;
    }
    let y0 = FRAC_2_PI * (l * j[0] - 2.0 * s0);
    let y1 = -FRAC_2_PI * (j[0] / x - l * j[1]) + FRAC_2_PI * s1;
    (y0, y1)
}

/// Hankel asymptotic expansion of `J_0, J_1, Y_0, Y_1` for large `x`.
fn hankel_asymptotic_01(x: f64) -> (f64, f64, f64, f64) {
    let (p0, q0) = hankel_pq(0.0, x);
    let (p1, q1) = hankel_pq(1.0, x);
    let amp = (FRAC_2_PI / x).sqrt();
    let w0 = x - FRAC_PI_4;
    let w1 = x - FRAC_PI_2 - FRAC_PI_4;
    let (s0, c0) = w0.sin_cos();
    let (s1, c1) = w1.sin_cos();
    (
        amp * (p0 * c0 - q0 * s0),
        amp * (p1 * c1 - q1 * s1),
        amp * (p0 * s0 + q0 * c0),
        amp * (p1 * s1 + q1 * c1),
    )
}

fn hankel_pq(nu: f64, x: f64) -> (f64, f64) {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= (mu - odd * odd) / (kf * 8.0 * x);
        if term.abs() >= last || term.abs() < 1e-18 {
            break;
        }
        last = term.abs();
        // a_k enters P (even k) or Q (odd k) with alternating signs.
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
    }
    (p, q)
}

/// `(J_0(x), Y_0(x))` for `x > 0`, without allocation; used by the boundary
/// integral assembly.
pub fn j0_y0(x: f64) -> (f64, f64) {
    if x >= ASYMPTOTIC_SWITCH {
        let (j0, _, y0, _) = hankel_asymptotic_01(x);
        return (j0, y0);
    }
    if x < 1e-6 {
        let q = 0.25 * x * x;
        let j0 = 1.0 - q + 0.25 * q * q;
        let y0 = FRAC_2_PI * ((0.5 * x).ln() + EULER_GAMMA) * j0 + FRAC_2_PI * q;
        return (j0, y0);
    }
    let start = miller_start(0, x);
    let two_over_x = 2.0 / x;
    let mut f_hi = 0.0;
    let mut f = 1.0;
    let mut norm = 0.0;
    let mut neumann = 0.0;
    for m in (1..=start).rev() {
        let next = (m as f64 * two_over_x) * f - f_hi;
        f_hi = f;
        f = next;
        let order = m - 1;
        if order > 0 && order % 2 == 0 {
            norm += 2.0 * f;
            let k = order / 2;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            neumann += sign * f / k as f64;
        }
        if f.abs() > RESCALE {
            let s = 1.0 / RESCALE;
            f *= s;
            f_hi *= s;
            norm *= s;
            neumann *= s;
        }
    }
    norm += f;
    let j0 = f / norm;
    let s0 = neumann / norm;
    let y0 = FRAC_2_PI * (((0.5 * x).ln() + EULER_GAMMA) * j0 - 2.0 * s0);
    (j0, y0)
}
