//! End-to-end acceptance suite on synthetic scenes with known truth.
//!
//! The multi-seed criteria share two studies. [`LadderStudy`] renders 512 row
//! scenes, draws the nested frame ladder and analyzes every rung.
//! [`TripleStudy`] renders full 2048 row fields and keeps the 4 and 64 frame
//! analyses together with a denoised 4 frame analysis.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze_image, AnalysisConfig, ImageAnalysis};
use crate::batch::{cmd_analyze, cmd_generate, noise_seed, scene_seed};
use crate::config::{default_scene, RunConfig, FRAME_LADDER};
use crate::denoise::{denoise, DenoiserSpec};
use crate::edges::{cd_delta, EdgeSet};
use crate::image::GrayImage;
use crate::error::{Error, Result};
use crate::psd::{
    compute_psd, fit_palasantzas, frequency_axis, palasantzas_model, PsdConfig, PsdCurve, PsdModel,
    RoughnessResult,
};
use crate::snr::{fit_bimodal, snr_delta, Histogram, HistogramFit};
use crate::synthetic::{
    generate_scene, mix_seed, sample_edge_trace, simulate_frame_ladder, GroundTruth, PalasantzasParams, SceneSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Comparator {
    fn holds(self, measured: f64, bound: f64) -> bool {
        match self {
            Comparator::Lt => measured < bound,
            Comparator::Le => measured <= bound,
            Comparator::Gt => measured > bound,
            Comparator::Ge => measured >= bound,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub what: String,
    pub measured: f64,
    pub comparator: Comparator,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(what: impl Into<String>, measured: f64, comparator: Comparator, bound: f64) -> Self {
        Self {
            what: what.into(),
            pass: comparator.holds(measured, bound),
            measured,
            comparator,
            bound,
        }
    }
}

/// One line of the verdict report. `measured` and `bound` repeat the first
/// failing check, or the first check when all pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionVerdict {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl CriterionVerdict {
    pub fn from_checks(name: &str, checks: Vec<Check>, seconds: f64) -> Self {
        let lead = checks
            .iter()
            .find(|c| !c.pass)
            .or(checks.first())
            .cloned();
        let (measured, bound) = lead.map_or((f64::NAN, f64::NAN), |c| (c.measured, c.bound));
        Self {
            name: name.into(),
            measured,
            bound,
            pass: !checks.is_empty() && checks.iter().all(|c| c.pass),
            checks,
            seconds,
        }
    }

    fn failed(name: &str, err: &Error, seconds: f64) -> Self {
        Self::from_checks(
            name,
            vec![Check::new(format!("error: {err}"), f64::NAN, Comparator::Le, 0.0)],
            seconds,
        )
    }

    pub fn line(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        let detail: Vec<String> = self
            .checks
            .iter()
            .map(|c| {
                let op = serde_json::to_value(c.comparator)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default();
                format!("{} = {} {op} {}", c.what, short(c.measured), c.bound)
            })
            .collect();
        format!("[{status}] {} ({:.1} s): {}", self.name, self.seconds, detail.join("; "))
    }
}

fn short(x: f64) -> String {
    if x != 0.0 && x.is_finite() && x.abs() < 1e-3 {
        format!("{x:.3e}")
    } else {
        format!("{}", (x * 1e4).round() / 1e4)
    }
}

pub const NAMES: [&str; 10] = [
    "1 psd normalization",
    "2 spectral synthesis fidelity",
    "3 unbiasing accuracy",
    "4 low snr degradation",
    "5 frame scaling law",
    "6 mean cd invariance under denoising",
    "7 denoising improves snr",
    "8 psd structure",
    "9 estimator self-consistency",
    "10 determinism",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceOptions {
    pub seed: u64,
    /// Seeds of the frame ladder study.
    pub seeds: usize,
    /// Leading ladder seeds used for the frame-scaling ratio.
    pub scaling_seeds: usize,
    pub scene: SceneSpec,
    /// Seeds and scene of the noisy/clean/denoised study.
    pub triple_seeds: usize,
    pub triple_scene: SceneSpec,
    pub electrons_per_pixel_per_frame: f64,
    pub analysis: AnalysisConfig,
    pub denoiser: DenoiserSpec,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds: 50,
            scaling_seeds: 20,
            scene: default_scene(),
            triple_seeds: 20,
            triple_scene: SceneSpec {
                height: 2048,
                ..default_scene()
            },
            electrons_per_pixel_per_frame: 64.0,
            analysis: AnalysisConfig::default(),
            denoiser: DenoiserSpec::nlmeans_default(),
        }
    }
}

// ------------------------------------------------------------ ladder study

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungResult {
    pub frames: usize,
    pub snr: f64,
    pub cd: f64,
    pub sigma_unbiased: f64,
    pub sigma_true: f64,
}

impl RungResult {
    pub fn relative_error(&self) -> f64 {
        (self.sigma_unbiased - self.sigma_true) / self.sigma_true
    }
}

/// Analyses kept for the denoising criteria.
#[derive(Clone, Debug, PartialEq)]
pub struct Triple {
    pub noisy4: ImageAnalysis,
    pub clean64: ImageAnalysis,
    pub denoised4: ImageAnalysis,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LadderStudy {
    pub options: AcceptanceOptions,
    /// Per seed, one entry per rung in [`FRAME_LADDER`] order; `Err` keeps
    /// the text of an analysis that did not complete.
    pub runs: Vec<Vec<std::result::Result<RungResult, String>>>,
    pub seconds: f64,
}

fn rung(image: &GrayImage, frames: usize, truth: &GroundTruth, cfg: &AnalysisConfig) -> Result<RungResult> {
    let a = analyze_image(image, cfg)?;
    Ok(RungResult {
        frames,
        snr: a.snr.linescan_snr,
        cd: a.cd.mean_cd,
        sigma_unbiased: a.roughness.lwr.three_sigma_unbiased / 3.0,
        sigma_true: truth.lwr_sigma(Some(&a.edges.row_indices)),
    })
}

fn ladder_run(opts: &AcceptanceOptions, s: usize) -> Result<Vec<std::result::Result<RungResult, String>>> {
    let (ideal, truth) = generate_scene(&opts.scene, scene_seed(opts.seed, s))?;
    let ladder = simulate_frame_ladder(
        &ideal,
        opts.electrons_per_pixel_per_frame,
        noise_seed(opts.seed, s, 0),
        &FRAME_LADDER,
    )?;
    Ok(ladder
        .iter()
        .zip(FRAME_LADDER)
        .map(|(img, n)| rung(img, n, &truth, &opts.analysis).map_err(|e| e.to_string()))
        .collect())
}

impl LadderStudy {
    pub fn run(options: &AcceptanceOptions) -> Result<Self> {
        let t0 = Instant::now();
        let runs = (0..options.seeds)
            .into_par_iter()
            .map(|s| ladder_run(options, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            options: options.clone(),
            runs,
            seconds: t0.elapsed().as_secs_f64(),
        })
    }

    /// Results at one frame count across seeds.
    fn at(&self, frames: usize) -> Vec<&std::result::Result<RungResult, String>> {
        let i = FRAME_LADDER
            .iter()
            .position(|&n| n == frames)
            .expect("frame count on the ladder");
        self.runs.iter().map(|r| &r[i]).collect()
    }
}

/// Seed stream of the triple study, apart from the ladder's.
const TRIPLE_STREAM: u64 = 0x7472_6970;

#[derive(Clone, Debug, PartialEq)]
pub struct TripleStudy {
    pub options: AcceptanceOptions,
    pub triples: Vec<std::result::Result<Triple, String>>,
    pub seconds: f64,
}

fn triple_run(opts: &AcceptanceOptions, s: usize) -> Result<std::result::Result<Triple, String>> {
    let seed = mix_seed(opts.seed, TRIPLE_STREAM);
    let (ideal, _) = generate_scene(&opts.triple_scene, scene_seed(seed, s))?;
    let pair = simulate_frame_ladder(&ideal, opts.electrons_per_pixel_per_frame, noise_seed(seed, s, 0), &[4, 64])?;
    let cfg = &opts.analysis;
    let run = || -> Result<Triple> {
        let denoised = denoise(&pair[0], &opts.denoiser, None)?;
        Ok(Triple {
            noisy4: analyze_image(&pair[0], cfg)?,
            clean64: analyze_image(&pair[1], cfg)?,
            denoised4: analyze_image(&denoised, cfg)?,
        })
    };
    Ok(run().map_err(|e| e.to_string()))
}

impl TripleStudy {
    pub fn run(options: &AcceptanceOptions) -> Result<Self> {
        let t0 = Instant::now();
        let triples = (0..options.triple_seeds)
            .into_par_iter()
            .map(|s| triple_run(options, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            options: options.clone(),
            triples,
            seconds: t0.elapsed().as_secs_f64(),
        })
    }

    fn complete(&self) -> std::result::Result<Vec<&Triple>, Vec<Check>> {
        let mut out = Vec::with_capacity(self.triples.len());
        for t in &self.triples {
            match t {
                Ok(t) => out.push(t),
                Err(e) => return Err(vec![Check::new(format!("error: {e}"), f64::NAN, Comparator::Le, 0.0)]),
            }
        }
        if out.is_empty() {
            return Err(vec![Check::new("triples", 0.0, Comparator::Ge, 1.0)]);
        }
        Ok(out)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// --------------------------------------------------------------- criteria

/// Parseval on 100 random traces of mixed length and colour.
pub fn parseval(seed: u64) -> Vec<Check> {
    let cfg = PsdConfig::default();
    let params = PalasantzasParams {
        sigma: 1.3,
        xi: 15.0,
        hurst: 0.6,
        exponent_free: None,
    };
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    for t in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, t));
        let n = 64 + 2 * (rand::RngExt::random_range(&mut rng, 0..500usize));
        let trace: Vec<f64> = if t % 2 == 0 {
            (0..n)
                .map(|_| 2.0 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng) + 5.0)
                .collect()
        } else {
            let mut v = sample_edge_trace(&params, PsdModel::Palasantzas1, n.next_power_of_two(), 0.8, t)
                .expect("valid synthesis");
            v.truncate(n);
            v
        };
        let m = mean(&trace);
        let var = trace.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
        match compute_psd(&[&trace], 0.8, &cfg) {
            Ok(c) => worst = worst.max((c.area() - var).abs() / var),
            Err(_) => failures += 1,
        }
    }
    vec![
        Check::new("max |area - variance| / variance", worst, Comparator::Lt, 1e-9),
        Check::new("failed traces", failures as f64, Comparator::Le, 0.0),
    ]
}

/// Averaged periodogram of 200 synthetic traces against the model, every
/// bin of `[2/(NΔ), 1/(4Δ)]`.
pub fn synthesis_fidelity(seed: u64) -> Result<Vec<Check>> {
    let (n, dx) = (2048usize, 0.8);
    let params = PalasantzasParams {
        sigma: 1.0,
        xi: 20.0,
        hurst: 0.75,
        exponent_free: None,
    };
    let traces = (0..200u64)
        .into_par_iter()
        .map(|t| sample_edge_trace(&params, PsdModel::Palasantzas1, n, dx, mix_seed(seed, t)))
        .collect::<Result<Vec<_>>>()?;
    let curve = compute_psd(&traces, dx, &PsdConfig::default())?;
    let model = params.model_curve(PsdModel::Palasantzas1, n, dx)?;
    let (lo, hi) = (2.0 / (n as f64 * dx), 1.0 / (4.0 * dx));
    let mut worst = 0.0f64;
    let mut inside = 0usize;
    let mut total = 0usize;
    for ((f, d), m) in curve.frequencies.iter().zip(&curve.density).zip(&model) {
        if *f < lo - 1e-12 || *f > hi + 1e-12 {
            continue;
        }
        let dev = (d / m - 1.0).abs();
        worst = worst.max(dev);
        total += 1;
        inside += usize::from(dev <= 0.10);
    }
    Ok(vec![
        Check::new("max bin |ratio - 1|", worst, Comparator::Le, 0.10),
        Check::new("fraction of bins within 10%", inside as f64 / total as f64, Comparator::Ge, 1.0),
    ])
}

/// σ_unbiased bias at every frame count whose images all measure SNR > 2.
pub fn unbiasing_accuracy(study: &LadderStudy) -> Vec<Check> {
    let mut checks = Vec::new();
    for &n in &FRAME_LADDER {
        let rs = study.at(n);
        let ok: Vec<&RungResult> = rs.iter().filter_map(|r| r.as_ref().ok()).collect();
        if ok.len() != rs.len() || ok.iter().any(|r| !(r.snr > 2.0)) {
            continue;
        }
        let ratio = mean(&ok.iter().map(|r| r.sigma_unbiased / r.sigma_true).collect::<Vec<_>>());
        checks.push(Check::new(
            format!("{n} Fr |mean(su/st) - 1|"),
            (ratio - 1.0).abs(),
            Comparator::Le,
            0.10,
        ));
    }
    if checks.is_empty() {
        checks.push(Check::new("frame counts with SNR > 2", 0.0, Comparator::Ge, 1.0));
    }
    checks
}

fn median_abs_error(study: &LadderStudy, n: usize) -> f64 {
    // a failed analysis is an unbounded error
    median(
        study
            .at(n)
            .iter()
            .map(|r| r.as_ref().map_or(f64::INFINITY, |r| r.relative_error().abs()))
            .collect(),
    )
}

fn median_snr(study: &LadderStudy, n: usize) -> f64 {
    median(
        study
            .at(n)
            .iter()
            .map(|r| r.as_ref().map_or(0.0, |r| r.snr))
            .collect(),
    )
}

pub fn degradation(study: &LadderStudy) -> Vec<Check> {
    let mut frames = FRAME_LADDER.to_vec();
    frames.sort_unstable();
    let med: Vec<f64> = frames.iter().map(|&n| median_abs_error(study, n)).collect();
    // largest rise of the median error when going to more frames
    let rise = med
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut checks = vec![Check::new(
        "max rise of median |error| with frames",
        rise,
        Comparator::Le,
        0.0,
    )];
    for (&n, &m) in frames.iter().zip(&med) {
        checks.push(Check::new(format!("{n} Fr median |error|"), m, Comparator::Ge, 0.0));
    }
    checks.push(Check::new("4 Fr median SNR", median_snr(study, 4), Comparator::Lt, 2.0));
    checks.push(Check::new("4 Fr median |error|", med[0], Comparator::Gt, 0.10));
    checks
}

pub fn frame_scaling(study: &LadderStudy, seeds: usize) -> Vec<Check> {
    let snr = |n: usize| -> Vec<f64> {
        study
            .at(n)
            .into_iter()
            .take(seeds)
            .map(|r| r.as_ref().map_or(f64::NAN, |r| r.snr))
            .collect()
    };
    let ratio = mean(&snr(64)) / mean(&snr(4));
    vec![
        Check::new("|SNR64/SNR4 / 4 - 1|", (ratio / 4.0 - 1.0).abs(), Comparator::Le, 0.15),
        Check::new("SNR64/SNR4", ratio, Comparator::Gt, 0.0),
    ]
}

pub fn cd_invariance(study: &TripleStudy) -> Vec<Check> {
    let triples = match study.complete() {
        Ok(t) => t,
        Err(c) => return c,
    };
    let worst = triples
        .iter()
        .map(|t| cd_delta(t.noisy4.cd.mean_cd, t.denoised4.cd.mean_cd).map_or(f64::INFINITY, f64::abs))
        .fold(0.0, f64::max);
    vec![
        Check::new("max |dCD| %", worst, Comparator::Lt, 5.0),
        Check::new("images", triples.len() as f64, Comparator::Ge, study.options.triple_seeds as f64),
    ]
}

pub fn snr_improvement(study: &TripleStudy) -> Vec<Check> {
    let triples = match study.complete() {
        Ok(t) => t,
        Err(c) => return c,
    };
    let mut min_delta = f64::INFINITY;
    let mut min_gain = f64::INFINITY;
    for t in &triples {
        let (a, b) = (t.noisy4.snr.linescan_snr, t.denoised4.snr.linescan_snr);
        min_delta = min_delta.min(snr_delta(a, b).unwrap_or(f64::NAN));
        min_gain = min_gain.min(b - a);
    }
    vec![
        Check::new("min dSNR %", min_delta, Comparator::Gt, 0.0),
        Check::new("min SNR_denoised - SNR_noisy", min_gain, Comparator::Gt, 0.0),
    ]
}

/// LWR fit on the given rows of `edges`, cut to `len` entries.
fn lwr_on_rows(edges: &EdgeSet, rows: &[usize], len: usize, cfg: &PsdConfig) -> Result<RoughnessResult> {
    let pos: Vec<usize> = rows
        .iter()
        .map(|r| edges.row_indices.binary_search(r).expect("row kept by every image"))
        .take(len)
        .collect();
    let widths: Vec<Vec<f64>> = (0..edges.n_lines())
        .map(|i| {
            let w = edges.width_trace(i)?;
            Ok(pos.iter().map(|&k| w[k]).collect())
        })
        .collect::<Result<_>>()?;
    RoughnessResult::from_curve(compute_psd(&widths, edges.pixel_size, cfg)?, cfg)
}

pub fn psd_structure(study: &TripleStudy) -> Result<Vec<Check>> {
    let triples = match study.complete() {
        Ok(t) => t,
        Err(c) => return Ok(c),
    };
    let cfg = &study.options.analysis.psd;
    // every image of every triple is cut to the rows all three kept, and to
    // one common length so that curves share a frequency axis
    let common: Vec<Vec<usize>> = triples
        .iter()
        .map(|t| {
            t.noisy4
                .edges
                .row_indices
                .iter()
                .copied()
                .filter(|r| {
                    t.clean64.edges.row_indices.binary_search(r).is_ok()
                        && t.denoised4.edges.row_indices.binary_search(r).is_ok()
                })
                .collect()
        })
        .collect();
    let len = common.iter().map(Vec::len).min().unwrap_or(0) & !1;
    let mut noisy = Vec::new();
    let mut clean = Vec::new();
    let mut den = Vec::new();
    for (t, rows) in triples.iter().zip(&common) {
        noisy.push(lwr_on_rows(&t.noisy4.edges, rows, len, cfg)?);
        clean.push(lwr_on_rows(&t.clean64.edges, rows, len, cfg)?);
        den.push(lwr_on_rows(&t.denoised4.edges, rows, len, cfg)?);
    }
    let avg = |v: &[RoughnessResult], unbiased: bool| -> Result<PsdCurve> {
        let curves: Vec<PsdCurve> = v
            .iter()
            .map(|r| if unbiased { r.unbiased.clone() } else { r.biased.clone() })
            .collect();
        PsdCurve::average(&curves)
    };
    let (nb, db) = (avg(&noisy, false)?, avg(&den, false)?);
    let fmax = *nb.frequencies.last().expect("non-empty curve");
    let top: Vec<usize> = (0..nb.len()).filter(|&i| nb.frequencies[i] >= fmax / 2.0).collect();
    let below = top.iter().filter(|&&i| db.density[i] < nb.density[i]).count();

    let (nu, cu, du) = (avg(&noisy, true)?, avg(&clean, true)?, avg(&den, true)?);
    let lfe = cfg.low_freq_exclusion;
    let mut worst = 0.0f64;
    for i in lfe..(lfe + 10).min(cu.len()) {
        let vals = [nu.density[i], cu.density[i], du.density[i]];
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        worst = worst.max((hi - lo) / cu.density[i]);
    }
    Ok(vec![
        Check::new(
            "top-half bins with denoised biased < noisy biased",
            below as f64 / top.len() as f64,
            Comparator::Ge,
            0.95,
        ),
        Check::new("low band max spread / 64 Fr unbiased", worst, Comparator::Le, 0.15),
    ])
}

fn gaussian_counts(fit: &HistogramFit, bins: usize) -> Histogram {
    let centers: Vec<f64> = (0..bins).map(|i| (i as f64 + 0.5) / bins as f64).collect();
    let counts = centers.iter().map(|&x| fit.evaluate(x)).collect();
    Histogram { centers, counts }
}

fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

/// Bimodal and Palasantzas fits on analytic data, exact and with sampling
/// noise. Each check is `error / tolerance`, so every bound is 1.
pub fn estimator_consistency(seed: u64) -> Result<Vec<Check>> {
    let truth = HistogramFit {
        m1: 5000.0,
        i1: 0.25,
        s1: 0.05,
        m2: 7000.0,
        i2: 0.75,
        s2: 0.07,
        residual: 0.0,
        converged: true,
    };
    let errs = |f: &HistogramFit| {
        [
            rel(f.m1, truth.m1),
            rel(f.i1, truth.i1),
            rel(f.s1, truth.s1),
            rel(f.m2, truth.m2),
            rel(f.i2, truth.i2),
            rel(f.s2, truth.s2),
        ]
    };
    let exact = fit_bimodal(&gaussian_counts(&truth, 256), None)?;
    let exact_err = errs(&exact).into_iter().fold(0.0, f64::max);

    let clean = gaussian_counts(&truth, 256);
    let mut worst_i = 0.0f64;
    let mut worst_s = 0.0f64;
    for s in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1000 + s));
        let counts = clean
            .counts
            .iter()
            .map(|&c| if c > 0.0 { Poisson::new(c).expect("positive rate").sample(&mut rng) } else { 0.0 })
            .collect();
        let h = Histogram {
            centers: clean.centers.clone(),
            counts,
        };
        let e = errs(&fit_bimodal(&h, None)?);
        worst_i = worst_i.max(e[1]).max(e[4]);
        worst_s = worst_s.max(e[2]).max(e[5]);
    }

    // Palasantzas: analytic curve, then averaged synthetic periodograms
    let (n, dx) = (1024usize, 0.8);
    let f = frequency_axis(n, dx);
    let density = f
        .iter()
        .map(|&f| palasantzas_model(f, 10.0, 20.0, 0.75, PsdModel::Palasantzas1, None).map(|v| v + 0.5))
        .collect::<Result<Vec<_>>>()?;
    let curve = PsdCurve {
        frequencies: f,
        density,
        n_traces_averaged: 1,
        trace_length: n,
        pixel_size: dx,
        detrend: Default::default(),
        window: Default::default(),
    };
    let exact_cfg = PsdConfig {
        log_bias_correction: false,
        ..PsdConfig::default()
    };
    let pf = fit_palasantzas(&curve, &exact_cfg, None)?;
    let psd_exact_err = [rel(pf.psd0, 10.0), rel(pf.xi, 20.0), rel(pf.hurst, 0.75), rel(pf.noise_floor, 0.5)]
        .into_iter()
        .fold(0.0, f64::max);

    let params = PalasantzasParams {
        sigma: 1.0,
        xi: 20.0,
        hurst: 0.75,
        exponent_free: None,
    };
    let n = 2048;
    let psd0 = params.psd0_for_band(PsdModel::Palasantzas1, n, dx)?;
    let noise_sd = 0.5;
    let floor = 2.0 * noise_sd * noise_sd * dx;
    let mut worst_p0 = 0.0f64;
    let mut worst_floor = 0.0f64;
    for s in 0..20u64 {
        let traces = (0..50u64)
            .map(|t| {
                let k = mix_seed(mix_seed(seed, 2000 + s), t);
                let mut v = sample_edge_trace(&params, PsdModel::Palasantzas1, n, dx, k)?;
                let mut rng = ChaCha8Rng::seed_from_u64(!k);
                for x in &mut v {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *x += noise_sd * z;
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        let fit = fit_palasantzas(&compute_psd(&traces, dx, &PsdConfig::default())?, &PsdConfig::default(), None)?;
        worst_p0 = worst_p0.max(rel(fit.psd0, psd0));
        worst_floor = worst_floor.max(rel(fit.noise_floor, floor));
    }

    Ok(vec![
        Check::new("bimodal exact: max rel error / 1%", exact_err / 0.01, Comparator::Le, 1.0),
        Check::new("bimodal noisy: max peak error / 2%", worst_i / 0.02, Comparator::Le, 1.0),
        Check::new("bimodal noisy: max width error / 5%", worst_s / 0.05, Comparator::Le, 1.0),
        Check::new("psd exact: max rel error / 1%", psd_exact_err / 0.01, Comparator::Le, 1.0),
        Check::new("psd noisy: max psd0 error / 15%", worst_p0 / 0.15, Comparator::Le, 1.0),
        Check::new("psd noisy: max floor error / 10%", worst_floor / 0.10, Comparator::Le, 1.0),
    ])
}

fn numbers_match(a: &serde_json::Value, b: &serde_json::Value, tol: f64) -> bool {
    use serde_json::Value;
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => match (x.as_f64(), y.as_f64()) {
            (Some(x), Some(y)) => x == y || (x - y).abs() <= tol * x.abs().max(y.abs()),
            _ => x == y,
        },
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| numbers_match(p, q, tol)),
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| numbers_match(v, w, tol)))
        }
        _ => a == b,
    }
}

/// File name to contents, for every file directly inside `dir`.
pub fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() {
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            out.insert(p.file_name().expect("file has a name").to_string_lossy().into_owned(), bytes);
        }
    }
    Ok(out)
}

/// Number of files of `a` without an equal counterpart in `b`. JSON files
/// compare numerically to `tol` relative, everything else byte for byte.
pub fn differing_files(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>, tol: f64) -> usize {
    let extra = b.keys().filter(|k| !a.contains_key(*k)).count();
    extra
        + a.iter()
            .filter(|(name, x)| {
                let Some(y) = b.get(*name) else { return true };
                let equal = if name.ends_with(".json") {
                    match (serde_json::from_slice(x), serde_json::from_slice(y)) {
                        (Ok(u), Ok(v)) => numbers_match(&u, &v, tol),
                        _ => *x == y,
                    }
                } else {
                    *x == y
                };
                !equal
            })
            .count()
}

/// Generate and analyze a small grid twice, in the same place and with
/// different worker counts.
pub fn determinism(seed: u64, work_dir: &Path) -> Result<Vec<Check>> {
    let root = work_dir.join("determinism");
    let images = root.join("images");
    let reports = root.join("reports");
    let mut snaps = Vec::new();
    let mut failures = 0;
    for jobs in [1usize, 0] {
        let mut cfg = RunConfig {
            seed,
            jobs,
            out: images.clone(),
            frames: vec![4, 64],
            ..RunConfig::default()
        };
        cfg.generate.seeds = 2;
        cmd_generate(&cfg)?;
        cfg.out = reports.clone();
        cfg.inputs = vec![images.clone()];
        failures += cmd_analyze(&cfg)?.failures;
        snaps.push((snapshot(&images)?, snapshot(&reports)?));
        std::fs::remove_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    }
    let (a, b) = (&snaps[0], &snaps[1]);
    Ok(vec![
        Check::new("differing image files", differing_files(&a.0, &b.0, 0.0) as f64, Comparator::Le, 0.0),
        Check::new("differing report files", differing_files(&a.1, &b.1, 1e-12) as f64, Comparator::Le, 0.0),
        Check::new("analysis failures", failures as f64, Comparator::Le, 0.0),
        Check::new("files per run", (a.0.len() + a.1.len()) as f64, Comparator::Ge, 8.0 + 4.0 * 4.0 + 1.0),
    ])
}

// ------------------------------------------------------------------ driver

fn timed(name: &str, f: impl FnOnce() -> Result<Vec<Check>>) -> CriterionVerdict {
    let t0 = Instant::now();
    match f() {
        Ok(c) => CriterionVerdict::from_checks(name, c, t0.elapsed().as_secs_f64()),
        Err(e) => CriterionVerdict::failed(name, &e, t0.elapsed().as_secs_f64()),
    }
}

/// Shared studies; either may be absent when no selected criterion needs it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Studies {
    pub ladder: Option<LadderStudy>,
    pub triple: Option<TripleStudy>,
}

pub fn needs_ladder(index: usize) -> bool {
    (3..=5).contains(&index)
}

pub fn needs_triple(index: usize) -> bool {
    (6..=8).contains(&index)
}

impl Studies {
    /// Run the studies the given criteria need.
    pub fn for_criteria(options: &AcceptanceOptions, criteria: &[usize]) -> Result<Self> {
        Ok(Self {
            ladder: criteria
                .iter()
                .any(|&i| needs_ladder(i))
                .then(|| LadderStudy::run(options))
                .transpose()?,
            triple: criteria
                .iter()
                .any(|&i| needs_triple(i))
                .then(|| TripleStudy::run(options))
                .transpose()?,
        })
    }
}

/// Run a single criterion, 1-based.
pub fn run_criterion(index: usize, options: &AcceptanceOptions, studies: &Studies, work_dir: &Path) -> CriterionVerdict {
    let name = NAMES[index - 1];
    let ladder = || {
        studies
            .ladder
            .as_ref()
            .ok_or_else(|| Error::Config("criterion needs the ladder study".into()))
    };
    let triple = || {
        studies
            .triple
            .as_ref()
            .ok_or_else(|| Error::Config("criterion needs the triple study".into()))
    };
    let seed = options.seed;
    match index {
        1 => timed(name, || Ok(parseval(seed))),
        2 => timed(name, || synthesis_fidelity(seed)),
        3 => timed(name, || Ok(unbiasing_accuracy(ladder()?))),
        4 => timed(name, || Ok(degradation(ladder()?))),
        5 => timed(name, || Ok(frame_scaling(ladder()?, options.scaling_seeds))),
        6 => timed(name, || Ok(cd_invariance(triple()?))),
        7 => timed(name, || Ok(snr_improvement(triple()?))),
        8 => timed(name, || psd_structure(triple()?)),
        9 => timed(name, || estimator_consistency(seed)),
        10 => timed(name, || determinism(seed, work_dir)),
        _ => panic!("criteria are numbered 1 to 10"),
    }
}

pub fn run_all(options: &AcceptanceOptions, work_dir: &Path) -> Result<(Vec<CriterionVerdict>, Studies)> {
    let all: Vec<usize> = (1..=NAMES.len()).collect();
    let studies = Studies::for_criteria(options, &all)?;
    let verdicts = all
        .iter()
        .map(|&i| run_criterion(i, options, &studies, work_dir))
        .collect();
    Ok((verdicts, studies))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_leads_with_the_failing_check() {
        let v = CriterionVerdict::from_checks(
            "x",
            vec![
                Check::new("a", 1.0, Comparator::Lt, 2.0),
                Check::new("b", 3.0, Comparator::Le, 2.0),
            ],
            0.0,
        );
        assert!(!v.pass);
        assert_eq!((v.measured, v.bound), (3.0, 2.0));
        let json = serde_json::to_value(&v).unwrap();
        for k in ["name", "measured", "bound", "pass"] {
            assert!(json.get(k).is_some(), "{k}");
        }
        assert!(!CriterionVerdict::from_checks("y", vec![], 0.0).pass);
    }

    #[test]
    fn nan_never_passes() {
        for c in [Comparator::Lt, Comparator::Le, Comparator::Gt, Comparator::Ge] {
            assert!(!Check::new("n", f64::NAN, c, 0.0).pass);
        }
    }

    #[test]
    fn medians() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(vec![1.0, f64::INFINITY, 2.0]), 2.0);
    }

    #[test]
    fn json_tolerance() {
        let a = serde_json::json!({"x": [1.0, 2.0], "s": "k"});
        let b = serde_json::json!({"x": [1.0, 2.0 + 1e-14], "s": "k"});
        let c = serde_json::json!({"x": [1.0, 2.1], "s": "k"});
        assert!(numbers_match(&a, &b, 1e-12));
        assert!(!numbers_match(&a, &c, 1e-12));
        assert!(!numbers_match(&a, &b, 0.0));
    }

    #[test]
    fn parseval_passes_quickly() {
        assert!(parseval(1).iter().all(|c| c.pass));
    }
}
