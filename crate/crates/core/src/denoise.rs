//! Classical denoisers and externally denoised image ingestion.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze_image, AnalysisConfig, ImageAnalysis};
use crate::error::{Error, Result};
use crate::image::{load_image, GrayImage};
use crate::snr::snr_delta;
use crate::synthetic::GroundTruth;

pub const DEFAULT_EXTERNAL_PATTERN: &str = "{dir}/{stem}.denoised.pgm";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DenoiserSpec {
    /// Separable Gaussian, σ in pixels.
    Gaussian { sigma: f64 },
    Median { radius: usize },
    NlMeans {
        patch_radius: usize,
        search_radius: usize,
        /// Filtering strength in intensity units; defaults to
        /// `0.4 * noise_sigma`.
        h: Option<f64>,
        /// Estimated from vertical pixel differences when absent.
        noise_sigma: Option<f64>,
        /// Denoise `sqrt(I)` instead of `I`.
        #[serde(default)]
        stabilize: bool,
    },
    /// Path pattern with `{dir}` and `{stem}` placeholders.
    External { pattern: String },
}

impl DenoiserSpec {
    pub fn nlmeans_default() -> Self {
        DenoiserSpec::NlMeans {
            patch_radius: 2,
            search_radius: 5,
            h: None,
            noise_sigma: None,
            stabilize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            DenoiserSpec::Gaussian { sigma } => *sigma >= 0.0 && sigma.is_finite(),
            DenoiserSpec::Median { radius } => *radius >= 1,
            DenoiserSpec::NlMeans {
                patch_radius,
                search_radius,
                h,
                noise_sigma,
                ..
            } => {
                *patch_radius >= 1
                    && *search_radius >= 1
                    && h.is_none_or(|h| h > 0.0)
                    && noise_sigma.is_none_or(|s| s > 0.0)
            }
            DenoiserSpec::External { pattern } => pattern.contains("{stem}"),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("invalid denoiser {self}")))
        }
    }

    /// Paired path for an external denoiser.
    pub fn external_path(pattern: &str, source: &Path) -> PathBuf {
        let dir = source.parent().map(|p| p.to_string_lossy().into_owned()).unwrap_or_default();
        let dir = if dir.is_empty() { ".".to_string() } else { dir };
        let stem = source.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        PathBuf::from(pattern.replace("{dir}", &dir).replace("{stem}", &stem))
    }
}

impl fmt::Display for DenoiserSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DenoiserSpec::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            DenoiserSpec::Median { radius } => write!(f, "median:{radius}"),
            DenoiserSpec::NlMeans {
                patch_radius,
                search_radius,
                h,
                noise_sigma,
                stabilize,
            } => {
                write!(f, "nlmeans:patch={patch_radius},search={search_radius}")?;
                if let Some(h) = h {
                    write!(f, ",h={h}")?;
                }
                if let Some(s) = noise_sigma {
                    write!(f, ",sigma={s}")?;
                }
                if *stabilize {
                    write!(f, ",vst=1")?;
                }
                Ok(())
            }
            DenoiserSpec::External { pattern } => write!(f, "external:{pattern}"),
        }
    }
}

/// `gaussian:<sigma>`, `median:<radius>`, `nlmeans[:key=value,...]`
/// (keys patch, search, h, sigma, vst) or `external[:<pattern>]`.
impl FromStr for DenoiserSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let bad = |what: &str| Error::Config(format!("bad denoiser '{s}': {what}"));
        let spec = match kind {
            "gaussian" => DenoiserSpec::Gaussian {
                sigma: arg.unwrap_or("1").parse().map_err(|_| bad("sigma"))?,
            },
            "median" => DenoiserSpec::Median {
                radius: arg.unwrap_or("1").parse().map_err(|_| bad("radius"))?,
            },
            "nlmeans" => {
                let mut spec = DenoiserSpec::nlmeans_default();
                if let (
                    Some(arg),
                    DenoiserSpec::NlMeans {
                        patch_radius,
                        search_radius,
                        h,
                        noise_sigma,
                        stabilize,
                    },
                ) = (arg, &mut spec)
                {
                    for item in arg.split(',').filter(|i| !i.is_empty()) {
                        let (k, v) = item.split_once('=').ok_or_else(|| bad(item))?;
                        match k.trim() {
                            "patch" => *patch_radius = v.parse().map_err(|_| bad(k))?,
                            "search" => *search_radius = v.parse().map_err(|_| bad(k))?,
                            "h" => *h = Some(v.parse().map_err(|_| bad(k))?),
                            "sigma" => *noise_sigma = Some(v.parse().map_err(|_| bad(k))?),
                            "vst" => *stabilize = matches!(v.trim(), "1" | "true" | "yes"),
                            _ => return Err(bad(k)),
                        }
                    }
                }
                spec
            }
            "external" => DenoiserSpec::External {
                pattern: arg.unwrap_or(DEFAULT_EXTERNAL_PATTERN).to_string(),
            },
            _ => return Err(bad("unknown kind")),
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }
}

/// Half-sample symmetric index (`... b a | a b ...`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    i as usize
}

fn convolve_rows(src: &[f64], width: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    out.par_chunks_mut(width)
        .zip(src.par_chunks(width))
        .for_each(|(o, row)| {
            for (x, v) in o.iter_mut().enumerate() {
                *v = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * row[reflect(x as isize + k as isize - r, width)])
                    .sum();
            }
        });
    out
}

fn transpose(src: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            out[x * height + y] = src[y * width + x];
        }
    }
    out
}

/// Separable Gaussian blur with reflective borders; `sigma` in pixels.
pub fn gaussian_blur_samples(samples: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    if sigma < 1e-6 {
        return samples.to_vec();
    }
    let r = (4.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-r..=r)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let horizontal = convolve_rows(samples, width, &kernel);
    let t = transpose(&horizontal, width, height);
    let vertical = convolve_rows(&t, height, &kernel);
    transpose(&vertical, height, width)
}

fn median_filter(image: &GrayImage, radius: usize) -> Vec<f64> {
    let (w, h) = (image.width(), image.height());
    let r = radius as isize;
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, o)| {
        let mut window = Vec::with_capacity((2 * radius + 1).pow(2));
        for (x, v) in o.iter_mut().enumerate() {
            window.clear();
            for dy in -r..=r {
                let yy = reflect(y as isize + dy, h);
                for dx in -r..=r {
                    window.push(image.get(reflect(x as isize + dx, w), yy));
                }
            }
            let mid = window.len() / 2;
            let (_, m, _) = window.select_nth_unstable_by(mid, f64::total_cmp);
            *v = *m;
        }
    });
    out
}

/// Robust noise σ from vertically adjacent pixel differences.
pub fn estimate_noise_sigma(image: &GrayImage) -> f64 {
    let mut d: Vec<f64> = (1..image.height())
        .flat_map(|y| {
            image
                .row(y)
                .iter()
                .zip(image.row(y - 1))
                .map(|(a, b)| (a - b).abs())
                .collect::<Vec<_>>()
        })
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    1.4826 * *m / std::f64::consts::SQRT_2
}

/// Box sum over a `(2r+1)²` patch with reflective borders.
fn box_sum(src: &[f64], width: usize, height: usize, r: usize) -> Vec<f64> {
    let kernel = vec![1.0; 2 * r + 1];
    let horizontal = convolve_rows(src, width, &kernel);
    let t = transpose(&horizontal, width, height);
    let vertical = convolve_rows(&t, height, &kernel);
    transpose(&vertical, height, width)
}

fn nlmeans(samples: &[f64], width: usize, height: usize, patch: usize, search: usize, h: f64, sigma: f64) -> Vec<f64> {
    let n = samples.len();
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    let patch_area = ((2 * patch + 1) * (2 * patch + 1)) as f64;
    let offset2 = 2.0 * sigma * sigma;
    let h2 = h * h;
    let s = search as isize;
    let at = |x: isize, y: isize| samples[reflect(y, height) * width + reflect(x, width)];
    let mut diff = vec![0.0; n];
    for dy in -s..=s {
        for dx in -s..=s {
            for y in 0..height {
                for x in 0..width {
                    let d = samples[y * width + x] - at(x as isize + dx, y as isize + dy);
                    diff[y * width + x] = d * d;
                }
            }
            let dist = box_sum(&diff, width, height, patch);
            for y in 0..height {
                for x in 0..width {
                    let i = y * width + x;
                    let d2 = dist[i] / patch_area;
                    let w = (-(d2 - offset2).max(0.0) / h2).exp();
                    num[i] += w * at(x as isize + dx, y as isize + dy);
                    den[i] += w;
                }
            }
        }
    }
    num.iter().zip(&den).map(|(a, b)| a / b).collect()
}

/// Apply `spec`. `source` is the path of `image`, needed by the external kind.
pub fn denoise(image: &GrayImage, spec: &DenoiserSpec, source: Option<&Path>) -> Result<GrayImage> {
    spec.validate()?;
    let (w, h) = (image.width(), image.height());
    match spec {
        DenoiserSpec::Gaussian { sigma } => {
            if *sigma < 1e-6 {
                return Ok(image.clone());
            }
            GrayImage::from_clamped(w, h, image.pixel_size(), gaussian_blur_samples(image.samples(), w, h, *sigma))
        }
        DenoiserSpec::Median { radius } => image.with_samples(median_filter(image, *radius)),
        DenoiserSpec::NlMeans {
            patch_radius,
            search_radius,
            h: strength,
            noise_sigma,
            stabilize,
        } => {
            let work: Vec<f64> = if *stabilize {
                image.samples().iter().map(|v| v.sqrt()).collect()
            } else {
                image.samples().to_vec()
            };
            let sigma = match (noise_sigma, stabilize) {
                (Some(s), false) => *s,
                _ => estimate_noise_sigma(&image.with_samples(work.clone())?),
            };
            let strength = strength.unwrap_or(0.4 * sigma);
            if !(strength > 0.0) {
                // a noise-free input has nothing to remove
                return Ok(image.clone());
            }
            let mut out = nlmeans(&work, w, h, *patch_radius, *search_radius, strength, sigma);
            if *stabilize {
                out.iter_mut().for_each(|v| *v *= *v);
            }
            GrayImage::from_clamped(w, h, image.pixel_size(), out)
        }
        DenoiserSpec::External { pattern } => {
            let source = source.ok_or_else(|| Error::param("external denoiser needs the source path"))?;
            let path = DenoiserSpec::external_path(pattern, source);
            let other = match load_image(&path, None) {
                Err(Error::MissingPixelSize) => load_image(&path, Some(image.pixel_size()))?,
                other => other?,
            };
            if !image.same_geometry(&other) {
                return Err(Error::GeometryMismatch(format!(
                    "{} is {}x{} at {} nm, expected {w}x{h} at {} nm",
                    path.display(),
                    other.width(),
                    other.height(),
                    other.pixel_size(),
                    image.pixel_size()
                )));
            }
            Ok(other)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaPair {
    pub biased: f64,
    pub unbiased: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiserComparison {
    pub snr_noisy: f64,
    pub snr_denoised: f64,
    pub snr_delta_pct: f64,
    pub cd_noisy: f64,
    pub cd_denoised: f64,
    /// Signed.
    pub cd_delta_pct: f64,
    pub lwr_noisy: SigmaPair,
    pub lwr_denoised: SigmaPair,
    pub ler_noisy: SigmaPair,
    pub ler_denoised: SigmaPair,
    pub sigma_true: Option<f64>,
    pub error_noisy: Option<f64>,
    pub error_denoised: Option<f64>,
}

pub fn compare_analyses(noisy: &ImageAnalysis, denoised: &ImageAnalysis, truth: Option<&GroundTruth>) -> Result<DenoiserComparison> {
    let pair = |r: &crate::psd::RoughnessResult| SigmaPair {
        biased: r.three_sigma_biased / 3.0,
        unbiased: r.three_sigma_unbiased / 3.0,
    };
    let sigma_true = truth.map(|t| t.lwr_sigma(Some(&noisy.edges.row_indices)));
    Ok(DenoiserComparison {
        snr_noisy: noisy.snr.linescan_snr,
        snr_denoised: denoised.snr.linescan_snr,
        snr_delta_pct: snr_delta(noisy.snr.linescan_snr, denoised.snr.linescan_snr)?,
        cd_noisy: noisy.cd.mean_cd,
        cd_denoised: denoised.cd.mean_cd,
        cd_delta_pct: crate::edges::cd_delta(noisy.cd.mean_cd, denoised.cd.mean_cd)?,
        lwr_noisy: pair(&noisy.roughness.lwr),
        lwr_denoised: pair(&denoised.roughness.lwr),
        ler_noisy: pair(&noisy.roughness.ler),
        ler_denoised: pair(&denoised.roughness.ler),
        sigma_true,
        error_noisy: sigma_true.map(|s| noisy.roughness.lwr.three_sigma_unbiased / 3.0 - s),
        error_denoised: sigma_true.map(|s| denoised.roughness.lwr.three_sigma_unbiased / 3.0 - s),
    })
}

pub fn evaluate_denoiser(
    noisy: &GrayImage,
    denoised: &GrayImage,
    truth: Option<&GroundTruth>,
    config: &AnalysisConfig,
) -> Result<DenoiserComparison> {
    if !noisy.same_geometry(denoised) {
        return Err(Error::GeometryMismatch(format!(
            "noisy {}x{} vs denoised {}x{}",
            noisy.width(),
            noisy.height(),
            denoised.width(),
            denoised.height()
        )));
    }
    let a = analyze_image(noisy, config)?;
    let b = analyze_image(denoised, config)?;
    compare_analyses(&a, &b, truth)
}
