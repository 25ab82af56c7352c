//! Analytic scattering by a sound-soft disk and the radius estimate built on
//! the monostatic modulus `f_M(r) = |sum_m (-1)^m J_m(kr) / H_m(kr)|`.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
use thiserror::Error;

use crate::forward::{MonostaticData, WaveContext};
use crate::geometry::{InitialDisk, Point};
use crate::specfun::{SpecfunConfig, SpecfunError};

/// Truncation order used for radius estimation.
pub const DEFAULT_TRUNCATION: u32 = 200;
/// Default bisection bracket in metres.
pub const DEFAULT_BRACKET: (f64, f64) = (1e-4, 2.0);
/// Default bisection tolerance in metres.
pub const DEFAULT_RADIUS_TOL: f64 = 1e-5;
/// Grid size used to check monotonicity of `f_M` on the bracket.
pub const MONOTONICITY_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiskError {
    #[error(transparent)]
    Specfun(#[from] SpecfunError),
    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("truncation order must be at least 1")]
    InvalidTruncation,
    #[error("monostatic data set is empty")]
    EmptyData,
    #[error("invalid bracket [{lo}, {hi}]")]
    InvalidBracket { lo: f64, hi: f64 },
    #[error("target {gbar} is not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    NotBracketed {
        gbar: f64,
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    #[error("f is not monotone on the bracket near r = {at}")]
    NotMonotone { at: f64 },
}

/// How the data moduli are averaged into a single scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanMode {
    #[default]
    Arithmetic,
    Quadratic,
}

impl std::str::FromStr for MeanMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "arithmetic" | "mean" => Ok(MeanMode::Arithmetic),
            "quadratic" | "rms" => Ok(MeanMode::Quadratic),
            _ => Err(format!("unknown mean mode '{s}'")),
        }
    }
}

/// Scattered-field coefficients `c_m` for one incident direction:
/// `u^s = sum_m c_m H_m(k|x - x0|) e^{i m theta}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskSeries {
    pub disk: InitialDisk,
    pub wave: WaveContext,
    pub truncation: u32,
    /// Coefficients for `m = -M..=M`, stored at index `m + M`.
    pub coefficients: Vec<Complex64>,
}

impl DiskSeries {
    pub fn new(
        disk: InitialDisk,
        wave: &WaveContext,
        d: Point,
        truncation: u32,
    ) -> Result<Self, DiskError> {
        if truncation < 1 {
            return Err(DiskError::InvalidTruncation);
        }
        let k = wave.wavenumber;
        let ratios = ratio_sequence(k * disk.radius, truncation)?;
        let phase = Complex64::from_polar(1.0, k * d.dot(&disk.center));
        let arg_d = d.y.atan2(d.x);
        let m_max = truncation as i64;
        let coefficients = (-m_max..=m_max)
            .map(|m| {
                let ratio = signed_ratio(&ratios, m);
                -i_pow(m) * phase * Complex64::from_polar(1.0, -(m as f64) * arg_d) * ratio
            })
            .collect();
        Ok(Self {
            disk,
            wave: *wave,
            truncation,
            coefficients,
        })
    }

    pub fn coefficient(&self, m: i64) -> Complex64 {
        self.coefficients[(m + self.truncation as i64) as usize]
    }
}

fn ratio_sequence(x: f64, truncation: u32) -> Result<Vec<Complex64>, DiskError> {
    Ok(SpecfunConfig::new(truncation.max(1), 1e-12)?.j_over_h1_seq(truncation, x)?)
}

/// `J_m / H_m` for signed `m`; both pick up `(-1)^m` under `m -> -m`, so the
/// ratio is even in `m`.
fn signed_ratio(ratios: &[Complex64], m: i64) -> Complex64 {
    ratios[m.unsigned_abs() as usize]
}

fn i_pow(m: i64) -> Complex64 {
    match m.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// `u_inf(x_hat, d) = e^{3 i pi/4} sqrt(2/(pi k)) e^{i k (d - x_hat) . x0}
///   sum_{|m| <= M} e^{i m (arg x_hat - arg d)} J_m(k r0) / H_m(k r0)`.
pub fn far_field_series(
    disk: InitialDisk,
    wave: &WaveContext,
    x_hat: Point,
    d: Point,
    truncation: u32,
) -> Result<Complex64, DiskError> {
    if truncation < 1 {
        return Err(DiskError::InvalidTruncation);
    }
    let k = wave.wavenumber;
    let ratios = ratio_sequence(k * disk.radius, truncation)?;
    let delta = x_hat.y.atan2(x_hat.x) - d.y.atan2(d.x);
    let mut sum = ratios[0];
    for (m, r) in ratios.iter().enumerate().skip(1) {
        sum += r * (2.0 * (m as f64 * delta).cos());
    }
    let phase = Complex64::from_polar(1.0, k * (d - x_hat).dot(&disk.center));
    Ok(series_prefactor(k) * phase * sum)
}

/// `e^{3 i pi/4} sqrt(2/(pi k))`.
pub fn series_prefactor(k: f64) -> Complex64 {
    Complex64::from_polar((2.0 / (PI * k)).sqrt(), 3.0 * FRAC_PI_4)
}

/// `f_M(r) = |sum_{|m| <= M} (-1)^m J_m(kr) / H_m(kr)|`.
pub fn monostatic_modulus(r: f64, wave: &WaveContext, truncation: u32) -> Result<f64, DiskError> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(DiskError::InvalidRadius(r));
    }
    if truncation < 1 {
        return Err(DiskError::InvalidTruncation);
    }
    let ratios = ratio_sequence(wave.wavenumber * r, truncation)?;
    let mut sum = ratios[0];
    for (m, v) in ratios.iter().enumerate().skip(1) {
        let sign = if m % 2 == 0 { 2.0 } else { -2.0 };
        sum += v * sign;
    }
    Ok(sum.norm())
}

/// Mean of `g_j = sqrt(pi k / 2) |u_inf(x_j, -x_j)|` over the data.
pub fn data_modulus_mean(
    data: &MonostaticData,
    wave: &WaveContext,
    mode: MeanMode,
) -> Result<f64, DiskError> {
    if data.is_empty() {
        return Err(DiskError::EmptyData);
    }
    let scale = (PI * wave.wavenumber / 2.0).sqrt();
    let n = data.len() as f64;
    let mean = match mode {
        MeanMode::Arithmetic => data.values.iter().map(|v| v.norm()).sum::<f64>() / n,
        MeanMode::Quadratic => (data.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / n).sqrt(),
    };
    Ok(scale * mean)
}

/// Solves `f_M(r) = gbar` by bisection after checking `f_M` increases on the bracket.
pub fn estimate_radius(
    gbar: f64,
    wave: &WaveContext,
    bracket: (f64, f64),
    tol: f64,
) -> Result<f64, DiskError> {
    estimate_radius_with(gbar, wave, bracket, tol, DEFAULT_TRUNCATION)
}

pub fn estimate_radius_with(
    gbar: f64,
    wave: &WaveContext,
    bracket: (f64, f64),
    tol: f64,
    truncation: u32,
) -> Result<f64, DiskError> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi > lo && hi.is_finite() && tol > 0.0) {
        return Err(DiskError::InvalidBracket { lo, hi });
    }
    let f = |r: f64| monostatic_modulus(r, wave, truncation);
    let (f_lo, f_hi) = (f(lo)?, f(hi)?);
    if !(f_lo < gbar && gbar < f_hi) {
        return Err(DiskError::NotBracketed {
            gbar,
            lo,
            hi,
            f_lo,
            f_hi,
        });
    }
    let mut prev = f_lo;
    for i in 1..=MONOTONICITY_SAMPLES {
        let r = lo + (hi - lo) * i as f64 / MONOTONICITY_SAMPLES as f64;
        let v = f(r)?;
        if v <= prev {
            return Err(DiskError::NotMonotone { at: r });
        }
        prev = v;
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if f(mid)? < gbar {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}
