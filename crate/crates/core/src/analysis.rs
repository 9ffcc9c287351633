//! One-image pipeline: SNR, edges, mean CD and LER/LWR spectra.

use serde::{Deserialize, Serialize};

use crate::edges::{detect_edges, mean_cd, CdReport, EdgeDetectParams, EdgeSet};
use crate::error::Result;
use crate::image::GrayImage;
use crate::psd::{roughness_report, PsdConfig, RoughnessReport};
use crate::snr::{estimate_snr, SnrReport, DEFAULT_BINS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub bins: usize,
    pub edges: EdgeDetectParams,
    pub psd: PsdConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            edges: EdgeDetectParams::default(),
            psd: PsdConfig::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 32 {
            return Err(crate::error::Error::param("bins must be at least 32"));
        }
        self.edges.validate()?;
        self.psd.validate(None)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageAnalysis {
    pub snr: SnrReport,
    pub cd: CdReport,
    pub roughness: RoughnessReport,
    pub edges: EdgeSet,
}

pub fn analyze_image(image: &GrayImage, config: &AnalysisConfig) -> Result<ImageAnalysis> {
    config.validate()?;
    let snr = estimate_snr(image, config.bins)?;
    let edges = detect_edges(image, &config.edges)?;
    let cd = mean_cd(&edges)?;
    let roughness = roughness_report(&edges, &config.psd)?;
    Ok(ImageAnalysis {
        snr,
        cd,
        roughness,
        edges,
    })
}
