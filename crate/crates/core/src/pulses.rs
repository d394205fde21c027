//! Outgoing pulse families and their building blocks.
//!
//! Time is measured in units of the inverse bandwidth `1/F`, so every pulse
//! here is bandlimited to `|f| <= 1` (the Bessel pulse only up to its window
//! truncation tail).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::SampledSignal;

/// Highest spherical Bessel order used by the Bessel pulse.
pub const MAX_BESSEL_ORDER: usize = 12;

/// Odd polynomial multiplying the sinc envelope of the triangle pulse,
/// coefficients of t, t^3, t^5, t^7.
pub const TRIANGLE_POLY: [f64; 4] = [8.0, -14.3984, 4.77612, -0.82315];

/// Coefficients of j_0, j_2, ..., j_12 in the Bessel pulse.
pub const BESSEL_COEFFS: [f64; 7] = [
    0.259858, 0.0879936, 1.13614, -0.136663, 1.23652, -0.185957, 0.565418,
];

const SMALL_X: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseKind {
    Sinc,
    Triangle,
    Bessel,
}

impl PulseKind {
    pub const ALL: [PulseKind; 3] = [PulseKind::Sinc, PulseKind::Triangle, PulseKind::Bessel];

    pub fn name(self) -> &'static str {
        match self {
            PulseKind::Sinc => "sinc",
            PulseKind::Triangle => "triangle",
            PulseKind::Bessel => "bessel",
        }
    }
}

impl fmt::Display for PulseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PulseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sinc" => Ok(PulseKind::Sinc),
            "triangle" => Ok(PulseKind::Triangle),
            "bessel" => Ok(PulseKind::Bessel),
            other => Err(Error::InvalidArgument(format!(
                "unknown pulse '{other}' (expected sinc, triangle or bessel)"
            ))),
        }
    }
}

/// An outgoing pulse together with its constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub kind: PulseKind,
    /// Power of the sinc envelope.
    pub m: u32,
    /// Angular frequency in rad per unit time.
    pub omega: f64,
    pub poly_coeffs: [f64; 4],
    pub bessel_coeffs: [f64; 7],
}

impl PulseSpec {
    pub fn new(kind: PulseKind) -> Self {
        PulseSpec {
            kind,
            m: 10,
            omega: 2.0 * PI,
            poly_coeffs: TRIANGLE_POLY,
            bessel_coeffs: BESSEL_COEFFS,
        }
    }

    pub fn sinc() -> Self {
        Self::new(PulseKind::Sinc)
    }

    pub fn triangle() -> Self {
        Self::new(PulseKind::Triangle)
    }

    pub fn bessel() -> Self {
        Self::new(PulseKind::Bessel)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::InvalidArgument("pulse exponent m must be >= 1".into()));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "pulse omega must be positive, got {}",
                self.omega
            )));
        }
        Ok(())
    }

    /// f0(t) for whichever family this spec describes.
    pub fn eval(&self, t: f64) -> f64 {
        match self.kind {
            PulseKind::Sinc => sinc_envelope(t, self),
            PulseKind::Triangle => odd_poly(t, &self.poly_coeffs) * sinc_envelope(t, self),
            PulseKind::Bessel => bessel_series(t, self),
        }
    }
}

impl From<PulseKind> for PulseSpec {
    fn from(kind: PulseKind) -> Self {
        PulseSpec::new(kind)
    }
}

/// Normalized sinc, `sin(pi x) / (pi x)`.
pub fn sinc(x: f64) -> f64 {
    let y = PI * x;
    if y.abs() < 1e-4 {
        let y2 = y * y;
        1.0 - y2 / 6.0 + y2 * y2 / 120.0
    } else {
        y.sin() / y
    }
}

fn sinc_envelope(t: f64, spec: &PulseSpec) -> f64 {
    let m = spec.m as f64;
    sinc(spec.omega * t / (m * PI)).powi(spec.m as i32)
}

fn odd_poly(t: f64, c: &[f64; 4]) -> f64 {
    let t2 = t * t;
    t * (c[0] + t2 * (c[1] + t2 * (c[2] + t2 * c[3])))
}

fn bessel_series(t: f64, spec: &PulseSpec) -> f64 {
    let x = spec.omega * t;
    spec.bessel_coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c * spherical_bessel(2 * i, x))
        .sum()
}

/// Sinc pulse `sinc(omega t / (m pi))^m`. Panics if `spec` is not a sinc spec.
pub fn sinc_pulse(t: f64, spec: &PulseSpec) -> f64 {
    assert_eq!(spec.kind, PulseKind::Sinc, "sinc_pulse called with {}", spec.kind);
    spec.eval(t)
}

/// Triangle pulse `p(t) f_S(t)`. Panics if `spec` is not a triangle spec.
pub fn triangle_pulse(t: f64, spec: &PulseSpec) -> f64 {
    assert_eq!(spec.kind, PulseKind::Triangle, "triangle_pulse called with {}", spec.kind);
    spec.eval(t)
}

/// Even-order spherical Bessel expansion. Panics if `spec` is not a Bessel spec.
pub fn bessel_pulse(t: f64, spec: &PulseSpec) -> f64 {
    assert_eq!(spec.kind, PulseKind::Bessel, "bessel_pulse called with {}", spec.kind);
    spec.eval(t)
}

/// Spherical Bessel function of the first kind, `j_n(x)`, for `n <= 12`.
///
/// `j_0` is evaluated directly. Higher orders use upward recurrence from
/// `j_0, j_1` when `|x| > n` and a normalized downward (Miller) recurrence
/// otherwise, where the upward direction loses precision. For `|x| < 1e-6` the leading
/// series term `x^n / (2n+1)!!` is returned.
pub fn spherical_bessel(n: usize, x: f64) -> f64 {
    assert!(
        n <= MAX_BESSEL_ORDER,
        "spherical_bessel supports orders up to {MAX_BESSEL_ORDER}, got {n}"
    );
    // j_n(-x) = (-1)^n j_n(x)
    if x < 0.0 {
        let v = spherical_bessel(n, -x);
        return if n.is_multiple_of(2) { v } else { -v };
    }
    if x < SMALL_X {
        return x.powi(n as i32) / double_factorial(2 * n + 1);
    }
    let (s, c) = x.sin_cos();
    match n {
        0 => s / x,
        _ if x > n as f64 => upward(n, x, s, c),
        _ => miller(n, x, s, c),
    }
}

fn upward(n: usize, x: f64, s: f64, c: f64) -> f64 {
    let mut prev = s / x;
    let mut cur = s / (x * x) - c / x;
    for k in 1..n {
        let next = (2 * k + 1) as f64 / x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

fn miller(n: usize, x: f64, s: f64, c: f64) -> f64 {
    const RESCALE: f64 = 1e200;
    let start = n + 20 + x.ceil() as usize;
    let mut above = 0.0;
    let mut cur = 1e-30;
    let mut at_n = if start == n { cur } else { 0.0 };
    let mut at_one = if start == 1 { cur } else { 0.0 };
    for k in (1..=start).rev() {
        let below = (2 * k + 1) as f64 / x * cur - above;
        above = cur;
        cur = below;
        if k - 1 == n {
            at_n = cur;
        }
        if k - 1 == 1 {
            at_one = cur;
        }
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            above /= RESCALE;
            at_n /= RESCALE;
            at_one /= RESCALE;
        }
    }
    // `cur` now holds the unnormalized j_0. Normalize against whichever of
    // j_0, j_1 is larger, since j_0 vanishes at multiples of pi.
    let j0 = s / x;
    let j1 = s / (x * x) - c / x;
    if j0.abs() >= j1.abs() {
        at_n * j0 / cur
    } else {
        at_n * j1 / at_one
    }
}

fn double_factorial(k: usize) -> f64 {
    (1..=k).rev().step_by(2).map(|v| v as f64).product()
}

/// One bin of a power spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumBin {
    /// Frequency in units of F (signed, FFT ordering).
    pub frequency: f64,
    pub power: f64,
}

/// Squared magnitudes of the 1/N-normalized DFT of `signal`.
///
/// Bins are returned in FFT order with signed frequencies `k / T`, where `T`
/// is the window length. Total power equals `||x||^2 / N`.
pub fn power_spectrum(signal: &SampledSignal) -> Vec<SpectrumBin> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let window = signal.grid().span();
    let mut buf: Vec<Complex64> = signal
        .values()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter()
        .enumerate()
        .map(|(k, c)| {
            let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            SpectrumBin {
                frequency: signed / window,
                power: (c * scale).norm_sqr(),
            }
        })
        .collect()
}

/// Fraction of total power in bins with `|f| > cutoff` (plus a small slack
/// so the bin sitting exactly on the cutoff counts as inside).
pub fn power_fraction_above(spectrum: &[SpectrumBin], cutoff: f64) -> f64 {
    let total: f64 = spectrum.iter().map(|b| b.power).sum();
    if total == 0.0 {
        return 0.0;
    }
    let above: f64 = spectrum
        .iter()
        .filter(|b| b.frequency.abs() > cutoff + 1e-9)
        .map(|b| b.power)
        .sum();
    above / total
}
