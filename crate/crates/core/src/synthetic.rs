//! Ground-truth line/space images: Palasantzas-rough edges, blur, SEM edge
//! brightening and Poisson frame noise.
//!
//! Edge traces are synthesized in the Fourier domain with independent complex
//! Gaussian coefficients, so the expected periodogram of a trace equals the
//! model PSD bin for bin. PSD(0) is fixed so that the model summed over the
//! sampled band `k = 1..=N/2` times `Δf` equals `σ²`.
//!
//! Frame noise uses one ChaCha stream per `(seed, frame, row)`; frame counts
//! are therefore nested and results do not depend on the worker count.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::denoise::gaussian_blur_samples;
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::psd::{frequency_axis, model_exponent, palasantzas_model, PsdModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PalasantzasParams {
    /// Unbiased roughness σ of one edge, nm.
    pub sigma: f64,
    /// Correlation length, nm.
    pub xi: f64,
    pub hurst: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent_free: Option<f64>,
}

impl PalasantzasParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.xi > 0.0 && self.hurst > 0.0 && self.hurst <= 1.0) {
            return Err(Error::param(format!(
                "need sigma > 0, xi > 0, 0 < hurst <= 1; got {self:?}"
            )));
        }
        if let Some(e) = self.exponent_free {
            if !(e > 1.0) {
                return Err(Error::param(format!("exponent_free {e} must exceed 1")));
            }
        }
        Ok(())
    }

    /// PSD(0) that makes the band-limited model integrate to `σ²` on the
    /// frequency grid of an `n_points` trace.
    pub fn psd0_for_band(&self, model: PsdModel, n_points: usize, pixel_size: f64) -> Result<f64> {
        self.validate()?;
        model_exponent(model, self.hurst, self.exponent_free)?;
        let df = 1.0 / (n_points as f64 * pixel_size);
        let unit: f64 = frequency_axis(n_points, pixel_size)
            .iter()
            .map(|&f| palasantzas_model(f, 1.0, self.xi, self.hurst, model, self.exponent_free))
            .sum::<Result<f64>>()?;
        Ok(self.sigma * self.sigma / (unit * df))
    }

    /// The model PSD evaluated on the `n_points` frequency grid.
    pub fn model_curve(&self, model: PsdModel, n_points: usize, pixel_size: f64) -> Result<Vec<f64>> {
        let psd0 = self.psd0_for_band(model, n_points, pixel_size)?;
        frequency_axis(n_points, pixel_size)
            .iter()
            .map(|&f| palasantzas_model(f, psd0, self.xi, self.hurst, model, self.exponent_free))
            .collect()
    }
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sample_edge_trace(
    params: &PalasantzasParams,
    model: PsdModel,
    n_points: usize,
    pixel_size: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_points < 64 || !n_points.is_power_of_two() {
        return Err(Error::param(format!(
            "n_points {n_points} must be a power of two >= 64"
        )));
    }
    if !(pixel_size > 0.0) {
        return Err(Error::param("pixel size must be positive"));
    }
    let psd = params.model_curve(model, n_points, pixel_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    let n = n_points;
    let half = n / 2;
    let nf = n as f64;
    let mut spec = vec![Complex::new(0.0, 0.0); n];
    for k in 1..half {
        // E|X_k|² = N S_k / (2Δ), split evenly over real and imaginary parts
        let sd = (nf * psd[k - 1] / (4.0 * pixel_size)).sqrt();
        let c = Complex::new(sd * normal(), sd * normal());
        spec[k] = c;
        spec[n - k] = c.conj();
    }
    // Nyquist is real; E X² = N S / Δ keeps its periodogram bin unbiased
    spec[half] = Complex::new((nf * psd[half - 1] / pixel_size).sqrt() * normal(), 0.0);

    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    Ok(spec.iter().map(|c| c.re / nf).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    /// Target line width, nm.
    pub cd: f64,
    pub pitch: f64,
    pub n_lines: usize,
    /// Gaussian blur σ, nm.
    pub edge_blur_sigma: f64,
    pub edge_effect_amplitude: f64,
    /// Gaussian σ of the edge brightening, nm.
    pub edge_effect_width: f64,
    pub line_level: f64,
    pub space_level: f64,
}

impl PatternSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.cd > 0.0
            && self.cd < self.pitch
            && self.n_lines >= 1
            && self.line_level != self.space_level
            && (0.0..=1.0).contains(&self.line_level)
            && (0.0..=1.0).contains(&self.space_level)
            && self.edge_blur_sigma >= 0.0
            && self.edge_effect_amplitude >= 0.0
            && (self.edge_effect_amplitude == 0.0 || self.edge_effect_width > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("invalid pattern {self:?}")))
        }
    }

    /// Nominal `(left, right)` edges in nm, lines centred in a raster of
    /// `width` pixels.
    pub fn nominal_edges(&self, width: usize, pixel_size: f64) -> Vec<(f64, f64)> {
        let center = 0.5 * width as f64 * pixel_size;
        let mid = 0.5 * (self.n_lines as f64 - 1.0);
        (0..self.n_lines)
            .map(|k| {
                let c = center + (k as f64 - mid) * self.pitch;
                (c - 0.5 * self.cd, c + 0.5 * self.cd)
            })
            .collect()
    }

    /// Smallest raster width holding every line plus half a pitch of space
    /// on both sides.
    pub fn min_width(&self, pixel_size: f64) -> usize {
        ((self.n_lines as f64 * self.pitch + self.pitch) / pixel_size).ceil() as usize
    }
}

/// Render the noise-free raster. `edge_traces` holds `2 * n_lines` nm
/// deviations (left, right, left, right, ...), each `height` long.
pub fn render_pattern(
    spec: &PatternSpec,
    edge_traces: &[Vec<f64>],
    width: usize,
    height: usize,
    pixel_size: f64,
) -> Result<GrayImage> {
    spec.validate()?;
    let positions = absolute_edges(spec, edge_traces, width, height, pixel_size)?;
    render_absolute(spec, &positions, width, height, pixel_size)
}

/// Nominal edges plus deviations, validated per row. Returns `[edge][row]`.
fn absolute_edges(
    spec: &PatternSpec,
    edge_traces: &[Vec<f64>],
    width: usize,
    height: usize,
    pixel_size: f64,
) -> Result<Vec<Vec<f64>>> {
    if edge_traces.len() != 2 * spec.n_lines {
        return Err(Error::param(format!(
            "expected {} edge traces, got {}",
            2 * spec.n_lines,
            edge_traces.len()
        )));
    }
    if let Some(t) = edge_traces.iter().find(|t| t.len() != height) {
        return Err(Error::LengthMismatch {
            expected: height,
            got: t.len(),
        });
    }
    let nominal = spec.nominal_edges(width, pixel_size);
    let extent = width as f64 * pixel_size;
    let positions: Vec<Vec<f64>> = edge_traces
        .iter()
        .enumerate()
        .map(|(e, t)| {
            let base = if e % 2 == 0 { nominal[e / 2].0 } else { nominal[e / 2].1 };
            t.iter().map(|d| base + d).collect()
        })
        .collect();
    for row in 0..height {
        let mut prev = 0.0;
        for (e, p) in positions.iter().enumerate() {
            let x = p[row];
            if !x.is_finite() || x <= 0.0 || x >= extent {
                return Err(Error::Render {
                    row,
                    reason: format!("edge {e} at {x} nm leaves the raster"),
                });
            }
            if e > 0 && x <= prev {
                return Err(Error::Render {
                    row,
                    reason: format!("edge {e} crosses edge {}", e - 1),
                });
            }
            prev = x;
        }
    }
    Ok(positions)
}

fn render_absolute(
    spec: &PatternSpec,
    positions: &[Vec<f64>],
    width: usize,
    height: usize,
    pixel_size: f64,
) -> Result<GrayImage> {
    let contrast = spec.line_level - spec.space_level;
    let mut samples = vec![0.0; width * height];
    samples
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(row, out)| {
            for (j, v) in out.iter_mut().enumerate() {
                let (a, b) = (j as f64 * pixel_size, (j + 1) as f64 * pixel_size);
                let mut covered = 0.0;
                for pair in positions.chunks_exact(2) {
                    let (l, r) = (pair[0][row], pair[1][row]);
                    covered += (r.min(b) - l.max(a)).max(0.0);
                }
                *v = spec.space_level + contrast * covered / pixel_size;
            }
        });

    let sigma_px = spec.edge_blur_sigma / pixel_size;
    if sigma_px > 1e-6 {
        samples = gaussian_blur_samples(&samples, width, height, sigma_px);
    }

    if spec.edge_effect_amplitude > 0.0 {
        let w2 = 2.0 * spec.edge_effect_width * spec.edge_effect_width;
        samples
            .par_chunks_mut(width)
            .enumerate()
            .for_each(|(row, out)| {
                for (j, v) in out.iter_mut().enumerate() {
                    let x = (j as f64 + 0.5) * pixel_size;
                    let bump: f64 = positions
                        .iter()
                        .map(|p| (-(x - p[row]).powi(2) / w2).exp())
                        .sum();
                    *v += spec.edge_effect_amplitude * bump;
                }
            });
    }
    GrayImage::from_clamped(width, height, pixel_size, samples)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Expected electrons per pixel and frame at intensity 1.
    pub electrons_per_pixel_per_frame: f64,
    pub n_frames: usize,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.electrons_per_pixel_per_frame > 0.0 && self.electrons_per_pixel_per_frame.is_finite())
            || self.n_frames < 1
        {
            return Err(Error::param(format!("invalid noise spec {self:?}")));
        }
        Ok(())
    }
}

fn frame_stream(seed: u64, frame: usize, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((frame as u64) << 32) | row as u64);
    rng
}

pub fn simulate_frames(ideal: &GrayImage, noise: &NoiseSpec) -> Result<GrayImage> {
    noise.validate()?;
    let mut out = simulate_frame_ladder(
        ideal,
        noise.electrons_per_pixel_per_frame,
        noise.seed,
        &[noise.n_frames],
    )?;
    Ok(out.remove(0))
}

/// Frame-averaged images for several frame counts from one pass; the image
/// for `n` frames uses exactly the first `n` frames of the same stream.
pub fn simulate_frame_ladder(
    ideal: &GrayImage,
    electrons_per_pixel_per_frame: f64,
    seed: u64,
    frames: &[usize],
) -> Result<Vec<GrayImage>> {
    for &n in frames {
        NoiseSpec {
            electrons_per_pixel_per_frame,
            n_frames: n,
            seed,
        }
        .validate()?;
    }
    let max_frames = frames.iter().copied().max().unwrap_or(0);
    let width = ideal.width();
    let height = ideal.height();
    let e = electrons_per_pixel_per_frame;

    // per row: one accumulated snapshot per requested frame count
    let rows: Vec<Vec<Vec<f64>>> = (0..height)
        .into_par_iter()
        .map(|y| {
            let dists: Vec<Option<Poisson<f64>>> = ideal
                .row(y)
                .iter()
                .map(|&v| {
                    let lambda = e * v;
                    (lambda > 0.0).then(|| Poisson::new(lambda).expect("finite positive rate"))
                })
                .collect();
            let mut sums = vec![0.0f64; width];
            let mut snaps = vec![Vec::new(); frames.len()];
            for f in 0..max_frames {
                let mut rng = frame_stream(seed, f, y);
                for (s, d) in sums.iter_mut().zip(&dists) {
                    if let Some(d) = d {
                        *s += d.sample(&mut rng);
                    }
                }
                for (slot, &n) in snaps.iter_mut().zip(frames) {
                    if n == f + 1 {
                        let scale = 1.0 / (e * n as f64);
                        *slot = sums.iter().map(|s| (s * scale).min(1.0)).collect();
                    }
                }
            }
            snaps
        })
        .collect();

    (0..frames.len())
        .map(|i| {
            let mut samples = Vec::with_capacity(width * height);
            for r in &rows {
                samples.extend_from_slice(&r[i]);
            }
            ideal.with_samples(samples)
        })
        .collect()
}

/// True edge positions of one line, nm, one entry per image row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueLine {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

/// Contents of the `<image>.truth.json` sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub roughness: PalasantzasParams,
    pub model: PsdModel,
    pub pattern: PatternSpec,
    pub noise: Option<NoiseSpec>,
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
    pub scene_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub lines: Vec<TrueLine>,
}

fn detrended_variance(w: &[f64]) -> f64 {
    let n = w.len() as f64;
    let m = w.iter().sum::<f64>() / n;
    w.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
}

impl GroundTruth {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })
    }

    fn pick(trace: &[f64], rows: Option<&[usize]>) -> Vec<f64> {
        let v: Vec<f64> = match rows {
            Some(r) => r.iter().map(|&i| trace[i]).collect(),
            None => trace.to_vec(),
        };
        let even = v.len() & !1;
        v[..even].to_vec()
    }

    /// Realized LWR σ: root of the mean detrended width variance over lines,
    /// optionally restricted to `rows` (and trimmed to even length, as the
    /// PSD estimator does).
    pub fn lwr_sigma(&self, rows: Option<&[usize]>) -> f64 {
        let vars: Vec<f64> = self
            .lines
            .iter()
            .map(|l| {
                let w: Vec<f64> = l.right.iter().zip(&l.left).map(|(r, a)| r - a).collect();
                detrended_variance(&Self::pick(&w, rows))
            })
            .collect();
        (vars.iter().sum::<f64>() / vars.len() as f64).sqrt()
    }

    /// Realized LER σ over every edge.
    pub fn ler_sigma(&self, rows: Option<&[usize]>) -> f64 {
        let vars: Vec<f64> = self
            .lines
            .iter()
            .flat_map(|l| [&l.left, &l.right])
            .map(|t| detrended_variance(&Self::pick(t, rows)))
            .collect();
        (vars.iter().sum::<f64>() / vars.len() as f64).sqrt()
    }

    pub fn mean_cd(&self) -> f64 {
        let mut total = 0.0;
        let mut n = 0usize;
        for l in &self.lines {
            for (r, a) in l.right.iter().zip(&l.left) {
                total += r - a;
                n += 1;
            }
        }
        total / n as f64
    }
}

/// Everything needed to draw one noise-free scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub roughness: PalasantzasParams,
    pub model: PsdModel,
    pub pattern: PatternSpec,
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
}

/// Independent rough edges for every line, rendered noise-free.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<(GrayImage, GroundTruth)> {
    spec.pattern.validate()?;
    let n_synth = spec.height.next_power_of_two().max(64);
    let traces: Vec<Vec<f64>> = (0..2 * spec.pattern.n_lines)
        .map(|e| {
            let mut t = sample_edge_trace(
                &spec.roughness,
                spec.model,
                n_synth,
                spec.pixel_size,
                mix_seed(seed, e as u64),
            )?;
            t.truncate(spec.height);
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let positions = absolute_edges(&spec.pattern, &traces, spec.width, spec.height, spec.pixel_size)?;
    let image = render_absolute(&spec.pattern, &positions, spec.width, spec.height, spec.pixel_size)?;
    let lines = positions
        .chunks_exact(2)
        .map(|p| TrueLine {
            left: p[0].clone(),
            right: p[1].clone(),
        })
        .collect();
    Ok((
        image,
        GroundTruth {
            roughness: spec.roughness,
            model: spec.model,
            pattern: spec.pattern,
            noise: None,
            width: spec.width,
            height: spec.height,
            pixel_size: spec.pixel_size,
            scene_seed: seed,
            label: None,
            lines,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern() -> PatternSpec {
        PatternSpec {
            cd: 16.0,
            pitch: 32.0,
            n_lines: 3,
            edge_blur_sigma: 0.0,
            edge_effect_amplitude: 0.0,
            edge_effect_width: 1.0,
            line_level: 0.8,
            space_level: 0.2,
        }
    }

    fn zero_traces(p: &PatternSpec, h: usize) -> Vec<Vec<f64>> {
        vec![vec![0.0; h]; 2 * p.n_lines]
    }

    #[test]
    fn vanishing_roughness() {
        let p = PalasantzasParams {
            sigma: 1e-12,
            xi: 20.0,
            hurst: 0.75,
            exponent_free: None,
        };
        let t = sample_edge_trace(&p, PsdModel::Palasantzas1, 256, 0.8, 1).unwrap();
        assert!(t.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn deterministic_per_seed() {
        let p = PalasantzasParams {
            sigma: 1.0,
            xi: 20.0,
            hurst: 0.75,
            exponent_free: None,
        };
        let a = sample_edge_trace(&p, PsdModel::Palasantzas1, 512, 0.8, 42).unwrap();
        let b = sample_edge_trace(&p, PsdModel::Palasantzas1, 512, 0.8, 42).unwrap();
        let c = sample_edge_trace(&p, PsdModel::Palasantzas1, 512, 0.8, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_lengths_and_params() {
        let p = PalasantzasParams {
            sigma: 1.0,
            xi: 20.0,
            hurst: 0.75,
            exponent_free: None,
        };
        assert!(sample_edge_trace(&p, PsdModel::Palasantzas1, 100, 0.8, 0).is_err());
        assert!(sample_edge_trace(&p, PsdModel::Palasantzas1, 32, 0.8, 0).is_err());
        let bad = PalasantzasParams { hurst: 1.5, ..p };
        assert!(sample_edge_trace(&bad, PsdModel::Palasantzas1, 64, 0.8, 0).is_err());
        let bad = PalasantzasParams {
            exponent_free: Some(0.9),
            ..p
        };
        assert!(bad.validate().is_err());
        // model 2 without a free exponent
        assert!(sample_edge_trace(&p, PsdModel::Palasantzas2, 64, 0.8, 0).is_err());
    }

    #[test]
    fn ideal_raster_is_binary_with_20px_lines() {
        let p = pattern();
        let img = render_pattern(&p, &zero_traces(&p, 16), 160, 16, 0.8).unwrap();
        let row = img.row(5);
        assert!(row.iter().all(|&v| (v - 0.2).abs() < 1e-12 || (v - 0.8).abs() < 1e-12));
        let bright = row.iter().filter(|&&v| v > 0.5).count();
        assert_eq!(bright, 3 * 20);
        // first line: nominal edges 24 nm and 40 nm -> columns 30..50
        assert!((0..30).all(|j| row[j] < 0.5));
        assert!((30..50).all(|j| row[j] > 0.5));
        assert!(row[50] < 0.5);
    }

    #[test]
    fn antialiased_width_matches_cd() {
        let p = pattern();
        let shift = vec![vec![0.3; 8]; 6];
        let img = render_pattern(&p, &shift, 160, 8, 0.8).unwrap();
        // integrated line coverage equals CD in pixels
        let row = img.row(0);
        let coverage: f64 = row.iter().map(|v| (v - 0.2) / 0.6).sum::<f64>() * 0.8 / 3.0;
        assert!((coverage - 16.0).abs() < 1e-9);
    }

    #[test]
    fn edge_effect_peaks_at_edges() {
        let p = PatternSpec {
            edge_effect_amplitude: 0.3,
            edge_effect_width: 0.8,
            edge_blur_sigma: 0.8,
            line_level: 0.6,
            space_level: 0.3,
            ..pattern()
        };
        let img = render_pattern(&p, &zero_traces(&p, 16), 160, 16, 0.8).unwrap();
        let prof = img.column_means();
        // oracle: the brightest column inside each line neighbourhood sits at an edge
        for (l, r) in p.nominal_edges(160, 0.8) {
            for edge in [l, r] {
                let c = (edge / 0.8).round() as usize;
                let local = (c - 3..=c + 3).max_by(|&a, &b| prof[a].total_cmp(&prof[b])).unwrap();
                assert!((local as isize - c as isize).abs() <= 1, "edge {edge}: max at {local}");
                assert!(prof[local] > prof[local - 2] && prof[local] > prof[local + 2]);
            }
        }
    }

    #[test]
    fn zero_traces_are_flip_symmetric() {
        let p = PatternSpec {
            edge_blur_sigma: 1.1,
            edge_effect_amplitude: 0.1,
            ..pattern()
        };
        let img = render_pattern(&p, &zero_traces(&p, 24), 160, 24, 0.8).unwrap();
        assert_eq!(img.flip_vertical(), img);
    }

    #[test]
    fn collapse_and_escape_name_the_row() {
        let p = pattern();
        let mut t = zero_traces(&p, 10);
        t[1][7] = -20.0;
        match render_pattern(&p, &t, 160, 10, 0.8) {
            Err(Error::Render { row, .. }) => assert_eq!(row, 7),
            other => panic!("{other:?}"),
        }
        let mut t = zero_traces(&p, 10);
        t[0][3] = -100.0;
        match render_pattern(&p, &t, 160, 10, 0.8) {
            Err(Error::Render { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dark_field_stays_dark() {
        let img = GrayImage::constant(16, 16, 1.0, 0.0).unwrap();
        let out = simulate_frames(
            &img,
            &NoiseSpec {
                electrons_per_pixel_per_frame: 50.0,
                n_frames: 8,
                seed: 3,
            },
        )
        .unwrap();
        assert!(out.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ladder_matches_single_runs_and_nests() {
        let img = GrayImage::constant(16, 16, 1.0, 0.4).unwrap();
        let ladder = simulate_frame_ladder(&img, 20.0, 9, &[4, 64]).unwrap();
        for (i, n) in [4, 64].into_iter().enumerate() {
            let single = simulate_frames(
                &img,
                &NoiseSpec {
                    electrons_per_pixel_per_frame: 20.0,
                    n_frames: n,
                    seed: 9,
                },
            )
            .unwrap();
            assert_eq!(single, ladder[i]);
        }
    }

    #[test]
    fn truth_sidecar_roundtrip() {
        let spec = SceneSpec {
            roughness: PalasantzasParams {
                sigma: 0.7,
                xi: 20.0,
                hurst: 0.75,
                exponent_free: None,
            },
            model: PsdModel::Palasantzas1,
            pattern: pattern(),
            width: 160,
            height: 64,
            pixel_size: 0.8,
        };
        let (_, truth) = generate_scene(&spec, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.truth.json");
        truth.save(&path).unwrap();
        assert_eq!(GroundTruth::load(&path).unwrap(), truth);
        assert!(truth.lwr_sigma(None) > 0.0);
    }
}
