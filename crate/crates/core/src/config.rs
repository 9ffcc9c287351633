//! Run configuration: a flat `key = value` file plus overrides.
//!
//! Every command-line flag maps to one key, so a flag is applied as a later
//! `set` call and always wins over the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisConfig;
use crate::denoise::DenoiserSpec;
use crate::error::{Error, Result};
use crate::image::BitDepth;
use crate::psd::{Detrend, PsdModel, Window};
use crate::synthetic::{PalasantzasParams, PatternSpec, SceneSpec};

pub const FRAME_LADDER: [usize; 5] = [4, 8, 16, 32, 64];

/// Parameters of generated image grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub scene: SceneSpec,
    pub electrons_per_pixel_per_frame: f64,
    /// Number of scenes, each drawn from its own derived seed.
    pub seeds: usize,
    /// Line-minus-space contrast levels; a stand-in for film thickness.
    pub contrasts: Vec<f64>,
    pub bit_depth: u32,
}

/// Acceptance scene: 16 nm lines at 32 nm pitch, 0.8 nm pixels, 512 rows.
pub fn default_scene() -> SceneSpec {
    let pattern = PatternSpec {
        cd: 16.0,
        pitch: 32.0,
        n_lines: 4,
        edge_blur_sigma: 0.8,
        edge_effect_amplitude: 0.0,
        edge_effect_width: 1.0,
        line_level: 0.565,
        space_level: 0.47,
    };
    SceneSpec {
        roughness: PalasantzasParams {
            // per edge; two independent edges give a 1 nm width σ
            sigma: std::f64::consts::FRAC_1_SQRT_2,
            xi: 20.0,
            hurst: 0.75,
            exponent_free: None,
        },
        model: PsdModel::Palasantzas1,
        pattern,
        width: pattern.min_width(0.8),
        height: 512,
        pixel_size: 0.8,
    }
}

impl Default for GenerateConfig {
    fn default() -> Self {
        let scene = default_scene();
        Self {
            contrasts: vec![scene.pattern.line_level - scene.pattern.space_level],
            scene,
            electrons_per_pixel_per_frame: 64.0,
            seeds: 1,
            bit_depth: 16,
        }
    }
}

impl GenerateConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.pattern.validate()?;
        self.scene.roughness.validate()?;
        BitDepth::from_bits(self.bit_depth)?;
        if self.seeds == 0 || self.contrasts.is_empty() {
            return Err(Error::Config("need at least one seed and one contrast".into()));
        }
        for &c in &self.contrasts {
            let line = self.scene.pattern.space_level + c;
            if !(c > 0.0 && line <= 1.0) {
                return Err(Error::Config(format!("contrast {c} out of range")));
            }
        }
        if !(self.electrons_per_pixel_per_frame > 0.0) {
            return Err(Error::Config("electrons must be positive".into()));
        }
        if self.scene.width < self.scene.pattern.min_width(self.scene.pixel_size) || self.scene.height < 64 {
            return Err(Error::Config(format!(
                "raster {}x{} too small for the pattern",
                self.scene.width, self.scene.height
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 picks the machine default.
    pub jobs: usize,
    pub out: PathBuf,
    /// Files or directories (every `.pgm` inside, non-recursive).
    pub inputs: Vec<PathBuf>,
    pub pixel_size_override: Option<f64>,
    pub frames: Vec<usize>,
    pub analysis: AnalysisConfig,
    pub denoiser: DenoiserSpec,
    pub generate: GenerateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 0,
            out: PathBuf::from("out"),
            inputs: Vec::new(),
            pixel_size_override: None,
            frames: FRAME_LADDER.to_vec(),
            analysis: AnalysisConfig::default(),
            denoiser: DenoiserSpec::External {
                pattern: crate::denoise::DEFAULT_EXTERNAL_PATTERN.into(),
            },
            generate: GenerateConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        let g = &mut self.generate;
        let p = &mut g.scene.pattern;
        let r = &mut g.scene.roughness;
        let a = &mut self.analysis;
        match k {
            "seed" => self.seed = parse(k, value)?,
            "jobs" => self.jobs = parse(k, value)?,
            "out" => self.out = PathBuf::from(value.trim()),
            "inputs" | "input" => {
                self.inputs = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(PathBuf::from).collect()
            }
            "pixel_size_nm" => {
                let v: f64 = parse(k, value)?;
                if !(v > 0.0) {
                    return Err(Error::Config(format!("pixel_size_nm {v} must be positive")));
                }
                self.pixel_size_override = Some(v);
                g.scene.pixel_size = v;
            }
            "frames" => {
                let v: Vec<usize> = parse_list(k, value)?;
                if v.is_empty() || v.contains(&0) {
                    return Err(Error::Config("frames must be positive".into()));
                }
                self.frames = v;
            }
            "model" => {
                let m: u8 = parse(k, value)?;
                let model = PsdModel::try_from(m).map_err(|e| Error::Config(e.to_string()))?;
                a.psd.model = model;
                g.scene.model = model;
            }
            "low_freq_exclusion" => a.psd.low_freq_exclusion = parse(k, value)?,
            "noise_band_fraction" => a.psd.noise_band_fraction = parse(k, value)?,
            "window" => {
                a.psd.window = match value.trim() {
                    "none" => Window::None,
                    "hann" => Window::Hann,
                    _ => return Err(Error::Config(format!("unknown window '{value}'"))),
                }
            }
            "detrend" => {
                a.psd.detrend = match value.trim() {
                    "none" => Detrend::None,
                    "mean" => Detrend::Mean,
                    "linear" => Detrend::Linear,
                    _ => return Err(Error::Config(format!("unknown detrend '{value}'"))),
                }
            }
            "bins" => a.bins = parse(k, value)?,
            "threshold_fraction" => a.edges.threshold_fraction = parse(k, value)?,
            "poly_order" => a.edges.poly_order = parse(k, value)?,
            "fit_halfwidth" => a.edges.fit_halfwidth = parse(k, value)?,
            "smoothing_halfwidth" => a.edges.smoothing_halfwidth = parse(k, value)?,
            "min_run" => a.edges.min_run = parse(k, value)?,
            "guide_halfwidth" => a.edges.guide_halfwidth = parse(k, value)?,
            "denoiser" => self.denoiser = value.parse()?,
            "sigma_nm" => r.sigma = parse(k, value)?,
            "xi_nm" => r.xi = parse(k, value)?,
            "hurst" => r.hurst = parse(k, value)?,
            "alpha" => r.exponent_free = Some(parse(k, value)?),
            "cd_nm" => p.cd = parse(k, value)?,
            "pitch_nm" => p.pitch = parse(k, value)?,
            "lines" => p.n_lines = parse(k, value)?,
            "blur_nm" => p.edge_blur_sigma = parse(k, value)?,
            "edge_effect" => p.edge_effect_amplitude = parse(k, value)?,
            "edge_effect_width_nm" => p.edge_effect_width = parse(k, value)?,
            "space_level" => p.space_level = parse(k, value)?,
            "contrasts" => g.contrasts = parse_list(k, value)?,
            "electrons" => g.electrons_per_pixel_per_frame = parse(k, value)?,
            "seeds" => g.seeds = parse(k, value)?,
            "width" => g.scene.width = parse(k, value)?,
            "height" => g.scene.height = parse(k, value)?,
            "bit_depth" => g.bit_depth = parse(k, value)?,
            _ => return Err(Error::Config(format!("unknown key '{k}'"))),
        }
        Ok(())
    }

    /// Apply a `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    /// Keep the generated raster wide enough after pattern overrides.
    pub fn fit_width(&mut self) {
        let s = &mut self.generate.scene;
        s.width = s.width.max(s.pattern.min_width(s.pixel_size));
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        self.analysis.validate().map_err(wrap)?;
        self.denoiser.validate().map_err(wrap)?;
        self.generate.validate().map_err(wrap)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let mut c = RunConfig::default();
        c.apply_text("# grid\nseed = 7\nframes = 4, 64\nmodel=2\nalpha = 1.5 # free exponent\n")
            .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.frames, vec![4, 64]);
        assert_eq!(c.analysis.psd.model, PsdModel::Palasantzas2);
        c.set("seed", "9").unwrap();
        assert_eq!(c.seed, 9);
        c.validate().unwrap();
    }

    #[test]
    fn errors_are_config_errors() {
        let mut c = RunConfig::default();
        assert!(matches!(c.apply_text("nonsense = 1"), Err(Error::Config(_))));
        assert!(matches!(c.apply_text("seed"), Err(Error::Config(_))));
        assert!(matches!(c.set("frames", "4,0"), Err(Error::Config(_))));
        assert!(matches!(c.set("model", "3"), Err(Error::Config(_))));
        let mut c = RunConfig::default();
        c.set("noise_band_fraction", "0.7").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn default_scene_fits() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.frames, FRAME_LADDER.to_vec());
        assert_eq!(c.analysis.psd.low_freq_exclusion, 3);
    }
}
