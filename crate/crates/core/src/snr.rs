//! Linescan SNR from a two-Gaussian fit of the grayscale histogram.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::edges::{clean_mask, plateau_levels, runs};
use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, LeastSquaresProblem, LmOptions};
use crate::image::GrayImage;

pub const DEFAULT_BINS: usize = 256;
/// Raster border ignored when estimating SNR from an image.
pub const HISTOGRAM_BORDER: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub centers: Vec<f64>,
    pub counts: Vec<f64>,
}

impl Histogram {
    /// Uniform bins over `[lo, hi]`; values outside land in the end bins.
    pub fn from_values<'a>(values: impl IntoIterator<Item = &'a f64>, bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins < 32 {
            return Err(Error::param(format!("need at least 32 bins, got {bins}")));
        }
        if !(hi > lo) {
            return Err(Error::param(format!("empty histogram range [{lo}, {hi}]")));
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0.0; bins];
        for &v in values {
            let b = ((v - lo) / width).floor().clamp(0.0, (bins - 1) as f64) as usize;
            counts[b] += 1.0;
        }
        let centers = (0..bins).map(|b| lo + (b as f64 + 0.5) * width).collect();
        Ok(Self { centers, counts })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn bin_width(&self) -> f64 {
        (self.centers[self.len() - 1] - self.centers[0]) / (self.len() - 1) as f64
    }
}

/// Histogram of every pixel over `[0, 1]`.
pub fn grayscale_histogram(image: &GrayImage, bins: usize) -> Result<Histogram> {
    Histogram::from_values(image.samples(), bins, 0.0, 1.0)
}

/// Histogram of the pixels at least `border` pixels away from the raster edge.
pub fn interior_histogram(image: &GrayImage, bins: usize, border: usize) -> Result<Histogram> {
    let (w, h) = (image.width(), image.height());
    if 2 * border >= w || 2 * border >= h {
        return Err(Error::InvalidImage(format!(
            "{w}x{h} raster has no interior with a {border}px border"
        )));
    }
    let values = (border..h - border).flat_map(|y| &image.row(y)[border..w - border]);
    Histogram::from_values(values, bins, 0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramFit {
    pub m1: f64,
    pub i1: f64,
    pub s1: f64,
    pub m2: f64,
    pub i2: f64,
    pub s2: f64,
    /// RMS count residual.
    pub residual: f64,
    pub converged: bool,
}

impl HistogramFit {
    pub fn evaluate(&self, x: f64) -> f64 {
        gauss(x, self.m1, self.i1, self.s1) + gauss(x, self.m2, self.i2, self.s2)
    }

    /// One component carries under 1% of the fitted area.
    pub fn is_degenerate(&self) -> bool {
        let (a1, a2) = (self.m1 * self.s1, self.m2 * self.s2);
        a1.min(a2) < 0.01 * a1.max(a2)
    }

    fn canonical(mut self) -> Self {
        if self.i1 > self.i2 {
            std::mem::swap(&mut self.m1, &mut self.m2);
            std::mem::swap(&mut self.i1, &mut self.i2);
            std::mem::swap(&mut self.s1, &mut self.s2);
        }
        self
    }
}

fn gauss(x: f64, m: f64, c: f64, s: f64) -> f64 {
    m * (-(x - c) * (x - c) / (2.0 * s * s)).exp()
}

/// Parameters `[ln m1, i1, ln s1, ln m2, i2, ln s2]`.
struct BimodalProblem<'a> {
    hist: &'a Histogram,
    lo: f64,
    hi: f64,
    ln_s_min: f64,
}

impl LeastSquaresProblem for BimodalProblem<'_> {
    fn n_params(&self) -> usize {
        6
    }

    fn n_residuals(&self) -> usize {
        self.hist.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (m1, s1, m2, s2) = (p[0].exp(), p[2].exp(), p[3].exp(), p[5].exp());
        for ((o, &x), &c) in out.iter_mut().zip(&self.hist.centers).zip(&self.hist.counts) {
            *o = gauss(x, m1, p[1], s1) + gauss(x, m2, p[4], s2) - c;
        }
    }

    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        for (row, &x) in self.hist.centers.iter().enumerate() {
            for k in 0..2 {
                let (m, c, s) = (p[3 * k].exp(), p[3 * k + 1], p[3 * k + 2].exp());
                let g = gauss(x, m, c, s);
                let u = (x - c) / s;
                out[(row, 3 * k)] = g;
                out[(row, 3 * k + 1)] = g * u / s;
                out[(row, 3 * k + 2)] = g * u * u;
            }
        }
    }

    fn project(&self, p: &mut [f64]) {
        for k in 0..2 {
            p[3 * k + 1] = p[3 * k + 1].clamp(self.lo, self.hi);
            p[3 * k + 2] = p[3 * k + 2].clamp(self.ln_s_min, (self.hi - self.lo).ln());
            p[3 * k] = p[3 * k].min(700.0);
        }
    }
}

fn smooth3(counts: &[f64]) -> Vec<f64> {
    let n = counts.len();
    (0..n)
        .map(|i| {
            let a = counts[i.saturating_sub(1)];
            let b = counts[(i + 1).min(n - 1)];
            (a + counts[i] + b) / 3.0
        })
        .collect()
}

/// Starting point from the two tallest separated maxima of the smoothed
/// histogram.
fn modes_init(hist: &Histogram) -> Result<HistogramFit> {
    let s = smooth3(&hist.counts);
    let n = s.len();
    let mut maxima: Vec<usize> = (1..n - 1)
        .filter(|&i| s[i] > s[i - 1] && s[i] >= s[i + 1])
        .collect();
    maxima.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let min_sep = (n / 32).max(2);
    let &first = maxima.first().ok_or(Error::NoTwoModes)?;
    let second = maxima.iter().copied().skip(1).find(|&j| {
        let (a, b) = (first.min(j), first.max(j));
        let valley = s[a..=b].iter().copied().fold(f64::INFINITY, f64::min);
        b - a >= min_sep && s[j] >= 0.05 * s[first] && valley < 0.9 * s[j]
    });
    let second = second.ok_or(Error::NoTwoModes)?;
    let width = hist.bin_width();
    let hwhm = |peak: usize, away: isize| -> f64 {
        let half = 0.5 * s[peak];
        let mut i = peak as isize;
        while i > 0 && i < n as isize - 1 && s[i as usize] > half {
            i += away;
        }
        ((i - peak as isize).abs() as f64 * width).max(0.5 * width)
    };
    let (p1, p2) = (first.min(second), first.max(second));
    let sigma = |peak: usize, away: isize| hwhm(peak, away) / (2.0 * 2f64.ln()).sqrt();
    Ok(HistogramFit {
        m1: s[p1].max(1.0),
        i1: hist.centers[p1],
        s1: sigma(p1, -1),
        m2: s[p2].max(1.0),
        i2: hist.centers[p2],
        s2: sigma(p2, 1),
        residual: f64::NAN,
        converged: false,
    })
}

pub fn fit_bimodal(hist: &Histogram, init: Option<&HistogramFit>) -> Result<HistogramFit> {
    if hist.len() < 32 {
        return Err(Error::param("histogram needs at least 32 bins"));
    }
    let start = match init {
        Some(f) => *f,
        None => modes_init(hist)?,
    };
    let width = hist.bin_width();
    let lo = hist.centers[0] - 0.5 * width;
    let hi = hist.centers[hist.len() - 1] + 0.5 * width;
    let problem = BimodalProblem {
        hist,
        lo,
        hi,
        ln_s_min: (1e-6 * (hi - lo)).ln(),
    };
    let p0 = [
        start.m1.max(1e-300).ln(),
        start.i1,
        start.s1.max(1e-300).ln(),
        start.m2.max(1e-300).ln(),
        start.i2,
        start.s2.max(1e-300).ln(),
    ];
    let options = LmOptions {
        max_iterations: 200,
        ..LmOptions::default()
    };
    let out = levenberg_marquardt(&problem, &p0, &options);
    let p = &out.params;
    Ok(HistogramFit {
        m1: p[0].exp(),
        i1: p[1],
        s1: p[2].exp(),
        m2: p[3].exp(),
        i2: p[4],
        s2: p[5].exp(),
        residual: out.rms,
        converged: out.converged,
    }
    .canonical())
}

pub fn linescan_snr(fit: &HistogramFit) -> f64 {
    2.0 * (fit.i2 - fit.i1).abs() / (fit.s1 + fit.s2)
}

pub fn snr_db(signal_variance: f64, noise_variance: f64) -> Result<f64> {
    if !(signal_variance > 0.0 && noise_variance > 0.0) {
        return Err(Error::param(format!(
            "variances must be positive, got {signal_variance} and {noise_variance}"
        )));
    }
    Ok(10.0 * (signal_variance / noise_variance).log10())
}

/// Relative SNR change in percent.
pub fn snr_delta(snr_noisy: f64, snr_denoised: f64) -> Result<f64> {
    if !(snr_noisy > 0.0) {
        return Err(Error::param(format!("noisy SNR must be positive, got {snr_noisy}")));
    }
    Ok((snr_denoised - snr_noisy).abs() / snr_noisy * 100.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrReport {
    pub linescan_snr: f64,
    pub snr_db: Option<f64>,
    pub fit: HistogramFit,
    pub bins: usize,
}

impl SnrReport {
    pub fn from_fit(fit: HistogramFit, bins: usize) -> Self {
        // mixture weights from the Gaussian areas
        let (a1, a2) = (fit.m1 * fit.s1, fit.m2 * fit.s2);
        let (w1, w2) = (a1 / (a1 + a2), a2 / (a1 + a2));
        let signal = w1 * w2 * (fit.i2 - fit.i1).powi(2);
        let noise = w1 * fit.s1 * fit.s1 + w2 * fit.s2 * fit.s2;
        Self {
            linescan_snr: linescan_snr(&fit),
            snr_db: snr_db(signal, noise).ok(),
            fit,
            bins,
        }
    }
}

/// Starting point from the raster structure: column classes from the
/// column-mean profile, pixel statistics per class.
fn structural_init(image: &GrayImage, bins: usize, border: usize) -> Result<HistogramFit> {
    let profile = image.column_means();
    let (low, high) = plateau_levels(&profile);
    if !(high - low > 1e-12) {
        return Err(Error::NoTwoModes);
    }
    let mid = 0.5 * (low + high);
    let mut mask: Vec<bool> = profile.iter().map(|&v| v > mid).collect();
    clean_mask(&mut mask, 4);
    let margin = 3;
    let (w, h) = (image.width(), image.height());
    let mut stats = [(0.0f64, 0.0f64, 0usize); 2];
    let mut columns = [0usize; 2];
    for (start, len, bright) in runs(&mask) {
        columns[bright as usize] += len;
        for x in start..start + len {
            if x < start + margin || x + margin >= start + len || x < border || x + border >= w {
                continue;
            }
            let st = &mut stats[bright as usize];
            for y in border..h - border {
                let v = image.get(x, y);
                st.0 += v;
                st.1 += v * v;
                st.2 += 1;
            }
        }
    }
    if stats.iter().any(|s| s.2 < 2) {
        return Err(Error::NoTwoModes);
    }
    let bin_width = 1.0 / bins as f64;
    let n_interior = ((w - 2 * border) * (h - 2 * border)) as f64;
    let part = |k: usize| {
        let (sum, sq, n) = stats[k];
        let mean = sum / n as f64;
        let sd = (sq / n as f64 - mean * mean).max(0.0).sqrt().max(0.5 * bin_width);
        let share = columns[k] as f64 / w as f64;
        let amp = share * n_interior * bin_width / (sd * (2.0 * std::f64::consts::PI).sqrt());
        (amp, mean, sd)
    };
    let (m1, i1, s1) = part(0);
    let (m2, i2, s2) = part(1);
    Ok(HistogramFit {
        m1,
        i1,
        s1,
        m2,
        i2,
        s2,
        residual: f64::NAN,
        converged: false,
    })
}

/// SNR of an image from its interior histogram. Falls back to a structural
/// starting point when the histogram shows a single mode.
pub fn estimate_snr(image: &GrayImage, bins: usize) -> Result<SnrReport> {
    let hist = interior_histogram(image, bins, HISTOGRAM_BORDER)?;
    let fit = match fit_bimodal(&hist, None) {
        Ok(f) if !f.is_degenerate() => f,
        Ok(_) | Err(Error::NoTwoModes) => {
            let init = structural_init(image, bins, HISTOGRAM_BORDER)?;
            fit_bimodal(&hist, Some(&init))?
        }
        Err(e) => return Err(e),
    };
    Ok(SnrReport::from_fit(fit, bins))
}
