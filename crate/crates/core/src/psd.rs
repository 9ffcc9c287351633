//! Roughness power spectral densities, Palasantzas model fits and noise-floor
//! unbiasing for LER/LWR.
//!
//! Normalization: for a mean-detrended trace `w` of `L` samples spaced `Δ`,
//! the one-sided density at bin `k = 1..=L/2` is
//!
//! ```text
//! S_k = 2Δ/L · |W_k|²        (k < L/2)
//! S_k =  Δ/L · |W_k|²        (k = L/2, Nyquist is counted once)
//! ```
//!
//! so that `Σ S_k · Δf == var(w)` with `Δf = 1/(LΔ)`. The DC bin is dropped.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::edges::EdgeSet;
use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, LeastSquaresProblem, LmOptions};

pub const MIN_TRACE_LENGTH: usize = 64;
pub const MIN_FIT_BINS: usize = 16;
const DEFAULT_HURST: f64 = 0.75;
/// Lower bound on fitted PSD(0), relative to the largest density in the fit band.
const PSD0_FLOOR_FRACTION: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum PsdModel {
    /// `psd0 / (1 + (2πfξ)²)^(H + 1/2)`
    Palasantzas1,
    /// `psd0 / (1 + (2πfξ)²)^(α/2)` with a free exponent `α > 1`
    Palasantzas2,
}

impl TryFrom<u8> for PsdModel {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(PsdModel::Palasantzas1),
            2 => Ok(PsdModel::Palasantzas2),
            other => Err(format!("unknown PSD model {other}, expected 1 or 2")),
        }
    }
}

impl From<PsdModel> for u8 {
    fn from(m: PsdModel) -> u8 {
        match m {
            PsdModel::Palasantzas1 => 1,
            PsdModel::Palasantzas2 => 2,
        }
    }
}

impl fmt::Display for PsdModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "palasantzas{}", u8::from(*self))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detrend {
    None,
    #[default]
    Mean,
    Linear,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    None,
    Hann,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdConfig {
    /// Lowest bins left out of the model fit (they still count towards σ).
    pub low_freq_exclusion: usize,
    /// Top fraction of the frequency axis used to seed the noise floor.
    pub noise_band_fraction: f64,
    pub window: Window,
    pub detrend: Detrend,
    pub model: PsdModel,
    /// Remove the mean-log offset of an averaged periodogram before the
    /// log-domain fit. Off for curves that are not periodogram estimates.
    #[serde(default = "yes")]
    pub log_bias_correction: bool,
}

fn yes() -> bool {
    true
}

impl Default for PsdConfig {
    fn default() -> Self {
        Self {
            low_freq_exclusion: 3,
            noise_band_fraction: 0.2,
            window: Window::None,
            detrend: Detrend::Mean,
            model: PsdModel::Palasantzas1,
            log_bias_correction: true,
        }
    }
}

impl PsdConfig {
    pub fn validate(&self, n_bins: Option<usize>) -> Result<()> {
        if !(self.noise_band_fraction > 0.0 && self.noise_band_fraction < 0.5) {
            return Err(Error::param(format!(
                "noise_band_fraction {} not in (0, 0.5)",
                self.noise_band_fraction
            )));
        }
        if let Some(n) = n_bins {
            if self.low_freq_exclusion >= n / 2 {
                return Err(Error::param(format!(
                    "low_freq_exclusion {} must be below half of {n} bins",
                    self.low_freq_exclusion
                )));
            }
        }
        Ok(())
    }
}

/// One-sided roughness spectrum. Frequencies in 1/nm, density in nm³.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdCurve {
    pub frequencies: Vec<f64>,
    pub density: Vec<f64>,
    pub n_traces_averaged: usize,
    pub trace_length: usize,
    pub pixel_size: f64,
    pub detrend: Detrend,
    pub window: Window,
}

impl PsdCurve {
    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    pub fn delta_f(&self) -> f64 {
        1.0 / (self.trace_length as f64 * self.pixel_size)
    }

    /// `Σ density · Δf`
    pub fn area(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.delta_f()
    }

    pub fn with_density(&self, density: Vec<f64>) -> Self {
        Self {
            density,
            ..self.clone()
        }
    }

    /// Element-wise mean of curves sharing one frequency axis.
    pub fn average(curves: &[PsdCurve]) -> Result<PsdCurve> {
        let first = curves
            .first()
            .ok_or_else(|| Error::param("cannot average zero curves"))?;
        let mut density = vec![0.0; first.len()];
        let mut n_traces = 0;
        for c in curves {
            if c.len() != first.len() || c.pixel_size != first.pixel_size {
                return Err(Error::LengthMismatch {
                    expected: first.len(),
                    got: c.len(),
                });
            }
            for (d, v) in density.iter_mut().zip(&c.density) {
                *d += v;
            }
            n_traces += c.n_traces_averaged;
        }
        let k = curves.len() as f64;
        density.iter_mut().for_each(|d| *d /= k);
        Ok(PsdCurve {
            density,
            n_traces_averaged: n_traces,
            ..first.clone()
        })
    }
}

/// `(1 + (2πfξ)²)^(-exponent/2)`
fn shape(f: f64, xi: f64, exponent: f64) -> f64 {
    let u = 2.0 * PI * f * xi;
    (1.0 + u * u).powf(-0.5 * exponent)
}

/// Total exponent of the Lorentzian-power denominator, `2H + 1` for model 1.
pub fn model_exponent(model: PsdModel, hurst: f64, exponent_free: Option<f64>) -> Result<f64> {
    match model {
        PsdModel::Palasantzas1 => Ok(2.0 * hurst + 1.0),
        PsdModel::Palasantzas2 => exponent_free
            .ok_or_else(|| Error::param("palasantzas2 requires exponent_free")),
    }
}

pub fn palasantzas_model(
    f: f64,
    psd0: f64,
    xi: f64,
    hurst: f64,
    model: PsdModel,
    exponent_free: Option<f64>,
) -> Result<f64> {
    Ok(psd0 * shape(f, xi, model_exponent(model, hurst, exponent_free)?))
}

/// Frequencies `k/(LΔ)` for `k = 1..=L/2`.
pub fn frequency_axis(trace_length: usize, pixel_size: f64) -> Vec<f64> {
    let df = 1.0 / (trace_length as f64 * pixel_size);
    (1..=trace_length / 2).map(|k| k as f64 * df).collect()
}

fn detrend_in_place(w: &mut [f64], mode: Detrend) {
    let n = w.len() as f64;
    match mode {
        Detrend::None => {}
        Detrend::Mean => {
            let mean = w.iter().sum::<f64>() / n;
            w.iter_mut().for_each(|v| *v -= mean);
        }
        Detrend::Linear => {
            let xm = (n - 1.0) / 2.0;
            let ym = w.iter().sum::<f64>() / n;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (i, v) in w.iter().enumerate() {
                let dx = i as f64 - xm;
                sxy += dx * (v - ym);
                sxx += dx * dx;
            }
            let slope = sxy / sxx;
            for (i, v) in w.iter_mut().enumerate() {
                *v -= ym + slope * (i as f64 - xm);
            }
        }
    }
}

struct Periodogram {
    fft: Arc<dyn Fft<f64>>,
    window: Option<Vec<f64>>,
    len: usize,
    pixel_size: f64,
    detrend: Detrend,
}

impl Periodogram {
    fn new(len: usize, pixel_size: f64, config: &PsdConfig) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(len);
        let window = match config.window {
            Window::None => None,
            Window::Hann => {
                let w: Vec<f64> = (0..len)
                    .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
                    .collect();
                // rescale to unit mean power so white-noise levels are preserved
                let power = w.iter().map(|v| v * v).sum::<f64>() / len as f64;
                Some(w.into_iter().map(|v| v / power.sqrt()).collect())
            }
        };
        Self {
            fft,
            window,
            len,
            pixel_size,
            detrend: config.detrend,
        }
    }

    fn accumulate(&self, trace: &[f64], acc: &mut [f64]) {
        let mut w = trace.to_vec();
        detrend_in_place(&mut w, self.detrend);
        let mut buf: Vec<Complex<f64>> = match &self.window {
            Some(win) => w
                .iter()
                .zip(win)
                .map(|(v, g)| Complex::new(v * g, 0.0))
                .collect(),
            None => w.iter().map(|&v| Complex::new(v, 0.0)).collect(),
        };
        self.fft.process(&mut buf);
        let half = self.len / 2;
        let scale = 2.0 * self.pixel_size / self.len as f64;
        for k in 1..=half {
            let p = buf[k].norm_sqr() * scale;
            acc[k - 1] += if k == half { 0.5 * p } else { p };
        }
    }
}

/// Averaged one-sided periodogram of equal-length traces in nm.
pub fn compute_psd<T: AsRef<[f64]>>(
    traces: &[T],
    pixel_size: f64,
    config: &PsdConfig,
) -> Result<PsdCurve> {
    let first = traces
        .first()
        .ok_or_else(|| Error::param("no traces"))?
        .as_ref();
    let len = first.len();
    if len < MIN_TRACE_LENGTH || len % 2 != 0 {
        return Err(Error::TraceTooShort(len));
    }
    if !(pixel_size > 0.0) {
        return Err(Error::param("pixel size must be positive"));
    }
    for t in traces {
        if t.as_ref().len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                got: t.as_ref().len(),
            });
        }
        if t.as_ref().iter().any(|v| !v.is_finite()) {
            return Err(Error::param("trace contains non-finite values"));
        }
    }
    let pg = Periodogram::new(len, pixel_size, config);
    let mut density = vec![0.0; len / 2];
    for t in traces {
        pg.accumulate(t.as_ref(), &mut density);
    }
    let n = traces.len() as f64;
    density.iter_mut().for_each(|d| *d /= n);
    Ok(PsdCurve {
        frequencies: frequency_axis(len, pixel_size),
        density,
        n_traces_averaged: traces.len(),
        trace_length: len,
        pixel_size,
        detrend: config.detrend,
        window: config.window,
    })
}

/// Density minus a white floor, clamped at zero, and the σ of both curves.
pub fn unbias(curve: &PsdCurve, noise_floor: f64) -> (PsdCurve, f64, f64) {
    let floor = noise_floor.max(0.0);
    let unbiased: Vec<f64> = curve.density.iter().map(|d| (d - floor).max(0.0)).collect();
    let out = curve.with_density(unbiased);
    let sigma_biased = curve.area().max(0.0).sqrt();
    let sigma_unbiased = out.area().max(0.0).sqrt();
    (out, sigma_biased, sigma_unbiased)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PalasantzasFit {
    pub psd0: f64,
    pub xi: f64,
    pub hurst: f64,
    pub exponent_free: Option<f64>,
    pub noise_floor: f64,
    pub sigma_biased: f64,
    pub sigma_unbiased: f64,
    pub model: PsdModel,
    pub fit_rms_log_residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl PalasantzasFit {
    /// Fit of an identically zero spectrum (perfectly straight edges).
    fn flat(config: &PsdConfig) -> Self {
        Self {
            psd0: 0.0,
            xi: 0.0,
            hurst: 0.0,
            exponent_free: None,
            noise_floor: 0.0,
            sigma_biased: 0.0,
            sigma_unbiased: 0.0,
            model: config.model,
            fit_rms_log_residual: 0.0,
            converged: true,
            iterations: 0,
        }
    }

    pub fn evaluate(&self, f: f64) -> f64 {
        let e = model_exponent(self.model, self.hurst, self.exponent_free)
            .expect("fit always carries the exponent its model needs");
        self.psd0 * shape(f, self.xi, e)
    }

    /// Fraction of the unbiased-plus-noise variance carried by the roughness
    /// signal, in `[0, 1]`.
    pub fn signal_fraction(&self) -> f64 {
        let total = self.sigma_biased * self.sigma_biased;
        if total > 0.0 {
            (self.sigma_unbiased * self.sigma_unbiased / total).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    pub fn sigma_noise(&self) -> f64 {
        (self.sigma_biased.powi(2) - self.sigma_unbiased.powi(2))
            .max(0.0)
            .sqrt()
    }
}

/// Optional starting point for [`fit_palasantzas`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PalasantzasInit {
    pub psd0: Option<f64>,
    pub xi: Option<f64>,
    pub hurst: Option<f64>,
    pub exponent_free: Option<f64>,
    pub noise_floor: Option<f64>,
}

/// Log-domain residuals `log10(S) - log10(model + floor)`.
///
/// Parameters are `[ln psd0, ln ξ, ln H | ln(α - 1), ln floor]`.
struct PsdProblem {
    f: Vec<f64>,
    log_density: Vec<f64>,
    model: PsdModel,
    ln_psd0_min: f64,
    /// ξ is capped at the trace extent; longer lengths are unresolvable.
    ln_xi_max: f64,
}

impl PsdProblem {
    fn unpack(&self, p: &[f64]) -> (f64, f64, f64, f64) {
        let psd0 = p[0].exp();
        let xi = p[1].exp();
        let exponent = match self.model {
            PsdModel::Palasantzas1 => 2.0 * p[2].exp() + 1.0,
            PsdModel::Palasantzas2 => 1.0 + p[2].exp(),
        };
        (psd0, xi, exponent, p[3].exp())
    }
}

impl LeastSquaresProblem for PsdProblem {
    fn n_params(&self) -> usize {
        4
    }

    fn n_residuals(&self) -> usize {
        self.f.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (psd0, xi, e, floor) = self.unpack(p);
        for ((o, &f), &ld) in out.iter_mut().zip(&self.f).zip(&self.log_density) {
            *o = ld - (psd0 * shape(f, xi, e) + floor).log10();
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let (psd0, xi, e, floor) = self.unpack(p);
        // d e / d p[2]
        let de = match self.model {
            PsdModel::Palasantzas1 => 2.0 * p[2].exp(),
            PsdModel::Palasantzas2 => p[2].exp(),
        };
        let ln10 = std::f64::consts::LN_10;
        for (i, &f) in self.f.iter().enumerate() {
            let u = 2.0 * PI * f * xi;
            let q = 1.0 + u * u;
            let signal = psd0 * q.powf(-0.5 * e);
            let total = signal + floor;
            let c = -1.0 / (ln10 * total);
            jac[(i, 0)] = c * signal;
            // d signal / d ln ξ = signal * (-e/2) * 2u² / q
            jac[(i, 1)] = c * signal * (-e * u * u / q);
            jac[(i, 2)] = c * signal * (-0.5 * q.ln()) * de;
            jac[(i, 3)] = c * floor;
        }
    }

    fn project(&self, p: &mut [f64]) {
        p[0] = p[0].max(self.ln_psd0_min);
        if self.model == PsdModel::Palasantzas1 {
            // 0 < H <= 1
            p[2] = p[2].min(0.0);
        }
        p[2] = p[2].max(-30.0);
        p[1] = p[1].clamp(-30.0, self.ln_xi_max);
        p[3] = p[3].max(-700.0);
    }
}

/// `E[log10 X] - log10 E[X]` for a bin averaged over `k` periodograms, each
/// bin exponentially distributed: `(ψ(k) - ln k) / ln 10`.
pub fn log10_periodogram_bias(k: usize) -> f64 {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    let k = k.max(1);
    let digamma = -EULER_GAMMA + (1..k).map(|j| 1.0 / j as f64).sum::<f64>();
    (digamma - (k as f64).ln()) / std::f64::consts::LN_10
}

/// Fit `model + white floor` to `curve` in the log domain.
pub fn fit_palasantzas(
    curve: &PsdCurve,
    config: &PsdConfig,
    init: Option<PalasantzasInit>,
) -> Result<PalasantzasFit> {
    config.validate(Some(curve.len()))?;
    let start = config.low_freq_exclusion;
    let (f, d): (Vec<f64>, Vec<f64>) = curve
        .frequencies
        .iter()
        .zip(&curve.density)
        .skip(start)
        .filter(|(_, &d)| d > 0.0 && d.is_finite())
        .map(|(&f, &d)| (f, d))
        .unzip();
    if curve.density.iter().all(|&d| d == 0.0) {
        return Ok(PalasantzasFit::flat(config));
    }
    if f.len() < MIN_FIT_BINS {
        return Err(Error::TooFewBins(f.len()));
    }
    let init = init.unwrap_or_default();
    let max_density = d.iter().cloned().fold(0.0, f64::max);
    let psd0_min = max_density * PSD0_FLOOR_FRACTION;

    // floor seed: mean of the top band of the frequency axis
    let n_band = ((curve.len() as f64 * config.noise_band_fraction).round() as usize).max(1);
    let band = &curve.density[curve.len() - n_band..];
    let band_mean = band.iter().sum::<f64>() / band.len() as f64;
    let floor0 = init
        .noise_floor
        .unwrap_or(band_mean)
        .max(max_density * 1e-15);

    let low = &d[..3.min(d.len())];
    let psd0_0 = init
        .psd0
        .unwrap_or(low.iter().sum::<f64>() / low.len() as f64 - floor0)
        .max(psd0_min);
    let hurst0 = init.hurst.unwrap_or(DEFAULT_HURST).clamp(1e-3, 1.0);
    let exponent0 = match config.model {
        PsdModel::Palasantzas1 => 2.0 * hurst0 + 1.0,
        PsdModel::Palasantzas2 => init.exponent_free.unwrap_or(2.0 * hurst0 + 1.0).max(1.0 + 1e-6),
    };
    let xi0 = init.xi.unwrap_or_else(|| {
        // -3 dB point of the floor-subtracted curve
        let half = 0.5 * psd0_0;
        let f_half = f
            .iter()
            .zip(&d)
            .find(|(_, &dv)| dv - floor0 < half)
            .map(|(&fv, _)| fv)
            .unwrap_or(f[f.len() / 2]);
        let u_half = (2f64.powf(2.0 / exponent0) - 1.0).sqrt();
        u_half / (2.0 * PI * f_half)
    });

    let offset = if config.log_bias_correction {
        log10_periodogram_bias(curve.n_traces_averaged)
    } else {
        0.0
    };
    let problem = PsdProblem {
        log_density: d.iter().map(|v| v.log10() - offset).collect(),
        f,
        model: config.model,
        ln_psd0_min: psd0_min.ln(),
        ln_xi_max: (curve.trace_length as f64 * curve.pixel_size).ln(),
    };
    let p0 = [
        psd0_0.ln(),
        xi0.ln().min(problem.ln_xi_max),
        match config.model {
            PsdModel::Palasantzas1 => hurst0.ln(),
            PsdModel::Palasantzas2 => (exponent0 - 1.0).ln(),
        },
        floor0.ln(),
    ];
    let options = LmOptions {
        max_iterations: 300,
        ..LmOptions::default()
    };
    let out = levenberg_marquardt(&problem, &p0, &options);
    let (psd0, xi, exponent, floor) = problem.unpack(&out.params);
    let (hurst, exponent_free) = match config.model {
        PsdModel::Palasantzas1 => ((exponent - 1.0) / 2.0, None),
        PsdModel::Palasantzas2 => (((exponent - 1.0) / 2.0).clamp(f64::MIN_POSITIVE, 1.0), Some(exponent)),
    };
    let (_, sigma_biased, sigma_unbiased) = unbias(curve, floor);
    Ok(PalasantzasFit {
        psd0,
        xi,
        hurst,
        exponent_free,
        noise_floor: floor,
        sigma_biased,
        sigma_unbiased,
        model: config.model,
        fit_rms_log_residual: out.rms,
        converged: out.converged,
        iterations: out.iterations,
    })
}

/// A fitted spectrum with its unbiased counterpart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoughnessResult {
    pub biased: PsdCurve,
    pub unbiased: PsdCurve,
    pub fit: PalasantzasFit,
    pub three_sigma_biased: f64,
    pub three_sigma_unbiased: f64,
}

impl RoughnessResult {
    /// Fit `biased` and subtract the fitted floor.
    pub fn from_curve(biased: PsdCurve, config: &PsdConfig) -> Result<Self> {
        let fit = fit_palasantzas(&biased, config, None)?;
        let (unbiased, sb, su) = unbias(&biased, fit.noise_floor);
        Ok(Self {
            biased,
            unbiased,
            three_sigma_biased: 3.0 * sb,
            three_sigma_unbiased: 3.0 * su,
            fit,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineRoughness {
    pub line: usize,
    pub ler: RoughnessResult,
    pub lwr: RoughnessResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoughnessReport {
    /// Average over every individual edge trace.
    pub ler: RoughnessResult,
    /// Average over every width trace.
    pub lwr: RoughnessResult,
    pub per_line: Vec<LineRoughness>,
}

/// Trim a trace to an even length, as the periodogram needs.
fn even_prefix(trace: &[f64]) -> &[f64] {
    &trace[..trace.len() & !1]
}

pub fn roughness_report(edge_set: &EdgeSet, config: &PsdConfig) -> Result<RoughnessReport> {
    let dx = edge_set.pixel_size;
    let mut edges: Vec<&[f64]> = Vec::new();
    let mut widths: Vec<Vec<f64>> = Vec::new();
    let mut per_line = Vec::with_capacity(edge_set.lines.len());
    for (i, line) in edge_set.lines.iter().enumerate() {
        let left = even_prefix(&line.left);
        let right = even_prefix(&line.right);
        let width = edge_set.width_trace(i)?;
        let width = even_prefix(&width).to_vec();
        per_line.push(LineRoughness {
            line: i,
            ler: RoughnessResult::from_curve(compute_psd(&[left, right], dx, config)?, config)?,
            lwr: RoughnessResult::from_curve(compute_psd(&[&width], dx, config)?, config)?,
        });
        edges.push(left);
        edges.push(right);
        widths.push(width);
    }
    Ok(RoughnessReport {
        ler: RoughnessResult::from_curve(compute_psd(&edges, dx, config)?, config)?,
        lwr: RoughnessResult::from_curve(compute_psd(&widths, dx, config)?, config)?,
        per_line,
    })
}

/// Variance carried by the bins with `lo <= f <= hi`.
pub fn band_area(curve: &PsdCurve, lo: f64, hi: f64) -> f64 {
    curve
        .frequencies
        .iter()
        .zip(&curve.density)
        .filter(|(f, _)| **f >= lo && **f <= hi)
        .map(|(_, d)| d)
        .sum::<f64>()
        * curve.delta_f()
}
