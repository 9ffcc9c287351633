//! Batch front ends: image grids, per-image analysis, noisy/denoised pairs.
//!
//! Work items are processed on a dedicated thread pool and collected in
//! input order, so outputs never depend on the worker count.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze_image, ImageAnalysis};
use crate::config::RunConfig;
use crate::denoise::{compare_analyses, denoise, DenoiserComparison, DenoiserSpec};
use crate::error::{Error, Result};
use crate::image::{load_image, save_image, BitDepth, GrayImage};
use crate::psd::RoughnessResult;
use crate::synthetic::{generate_scene, mix_seed, simulate_frame_ladder, GroundTruth, NoiseSpec};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const SCATTER_FILE: &str = "snr_vs_ulwr.csv";
pub const DENOISED_SUFFIX: &str = ".denoised";

pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Header-only CSV for empty result sets, so the schema is always present.
fn write_csv_or_header<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    if rows.is_empty() {
        let text = format!("{}\n", header.join(","));
        return fs::write(path, text).map_err(|e| Error::io(path, e));
    }
    write_csv(path, rows)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn image_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn is_denoised(path: &Path) -> bool {
    image_id(path).ends_with(DENOISED_SUFFIX)
}

/// `<dir>/<stem>.truth.json`, with any `.denoised` suffix dropped.
pub fn truth_path(image: &Path) -> PathBuf {
    let id = image_id(image);
    let stem = id.strip_suffix(DENOISED_SUFFIX).unwrap_or(&id);
    image.with_file_name(format!("{stem}.truth.json"))
}

fn load_truth(image: &Path) -> Option<GroundTruth> {
    let p = truth_path(image);
    if !p.exists() {
        return None;
    }
    match GroundTruth::load(&p) {
        Ok(t) => Some(t),
        Err(e) => {
            warn!("ignoring sidecar {}: {e}", p.display());
            None
        }
    }
}

/// Frame count from a `_fNN` token in the id, e.g. `ls_s000_c0_f04`.
pub fn frames_from_id(id: &str) -> Option<usize> {
    id.split(['_', '.'])
        .rev()
        .find_map(|t| t.strip_prefix('f').and_then(|n| n.parse().ok()))
}

fn frames_of(id: &str, truth: Option<&GroundTruth>) -> Option<usize> {
    truth
        .and_then(|t| t.noise.map(|n| n.n_frames))
        .or_else(|| frames_from_id(id))
}

/// Files are taken as given; directories contribute their `.pgm` files
/// (non-recursive). The result is sorted and free of duplicates.
pub fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = BTreeSet::new();
    for p in inputs {
        if p.is_dir() {
            for entry in fs::read_dir(p).map_err(|e| Error::io(p, e))? {
                let path = entry.map_err(|e| Error::io(p, e))?.path();
                if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
                    out.insert(path);
                }
            }
        } else {
            out.insert(p.clone());
        }
    }
    Ok(out.into_iter().collect())
}

// ---------------------------------------------------------------- generate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedImage {
    pub id: String,
    pub image: PathBuf,
    pub truth: PathBuf,
    pub seed_index: usize,
    pub contrast_index: usize,
    pub frames: usize,
}

pub fn generated_id(seed_index: usize, contrast_index: usize, frames: usize) -> String {
    format!("ls_s{seed_index:03}_c{contrast_index}_f{frames:02}")
}

/// Seed of the roughness scene for grid seed `index`; shared by every
/// contrast level so that contrast is the only thing that changes.
pub fn scene_seed(run_seed: u64, index: usize) -> u64 {
    mix_seed(run_seed, index as u64)
}

pub fn noise_seed(run_seed: u64, index: usize, contrast_index: usize) -> u64 {
    mix_seed(scene_seed(run_seed, index), (1 << 32) | contrast_index as u64)
}

/// Write one image and sidecar per (seed, contrast, frame count).
pub fn cmd_generate(config: &RunConfig) -> Result<Vec<GeneratedImage>> {
    config.validate()?;
    let g = &config.generate;
    let depth = BitDepth::from_bits(g.bit_depth)?;
    ensure_dir(&config.out)?;
    let pool = thread_pool(config.jobs)?;
    let cells: Vec<(usize, usize)> = (0..g.seeds)
        .flat_map(|s| (0..g.contrasts.len()).map(move |c| (s, c)))
        .collect();
    let per_cell = pool.install(|| {
        cells
            .par_iter()
            .map(|&(s, ci)| -> Result<Vec<GeneratedImage>> {
                let mut scene = g.scene;
                scene.pattern.line_level = scene.pattern.space_level + g.contrasts[ci];
                let seed = scene_seed(config.seed, s);
                let (ideal, mut truth) = generate_scene(&scene, seed)?;
                let nseed = noise_seed(config.seed, s, ci);
                let ladder = simulate_frame_ladder(&ideal, g.electrons_per_pixel_per_frame, nseed, &config.frames)?;
                truth.label = Some(format!("contrast={}", g.contrasts[ci]));
                let mut made = Vec::with_capacity(ladder.len());
                for (img, &n) in ladder.iter().zip(&config.frames) {
                    let id = generated_id(s, ci, n);
                    let image = config.out.join(format!("{id}.pgm"));
                    let truth_file = config.out.join(format!("{id}.truth.json"));
                    save_image(img, &image, depth)?;
                    truth.noise = Some(NoiseSpec {
                        electrons_per_pixel_per_frame: g.electrons_per_pixel_per_frame,
                        n_frames: n,
                        seed: nseed,
                    });
                    truth.save(&truth_file)?;
                    made.push(GeneratedImage {
                        id,
                        image,
                        truth: truth_file,
                        seed_index: s,
                        contrast_index: ci,
                        frames: n,
                    });
                }
                Ok(made)
            })
            .collect::<Vec<_>>()
    });
    let mut all = Vec::new();
    for cell in per_cell {
        all.extend(cell?);
    }
    Ok(all)
}

// ----------------------------------------------------------------- analyze

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdRow {
    pub frequency_per_nm: f64,
    pub density_nm3: f64,
    pub unbiased_density_nm3: f64,
}

pub const PSD_COLUMNS: [&str; 3] = ["frequency_per_nm", "density_nm3", "unbiased_density_nm3"];

pub fn psd_rows(r: &RoughnessResult) -> Vec<PsdRow> {
    r.biased
        .frequencies
        .iter()
        .zip(&r.biased.density)
        .zip(&r.unbiased.density)
        .map(|((&f, &b), &u)| PsdRow {
            frequency_per_nm: f,
            density_nm3: b,
            unbiased_density_nm3: u,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub row: usize,
    pub line: usize,
    pub left_nm: f64,
    pub right_nm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub id: String,
    pub frames: Option<usize>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub pixel_size_nm: Option<f64>,
    pub snr: Option<f64>,
    pub snr_db: Option<f64>,
    pub i1: Option<f64>,
    pub i2: Option<f64>,
    pub s1: Option<f64>,
    pub s2: Option<f64>,
    pub cd_nm: Option<f64>,
    pub cd_std_nm: Option<f64>,
    pub rows_used: Option<usize>,
    pub blwr3s_nm: Option<f64>,
    pub ulwr3s_nm: Option<f64>,
    pub bler3s_nm: Option<f64>,
    pub uler3s_nm: Option<f64>,
    pub lwr_noise_floor_nm3: Option<f64>,
    pub lwr_xi_nm: Option<f64>,
    pub lwr_hurst: Option<f64>,
    pub sigma_true_nm: Option<f64>,
    pub error: String,
}

pub const SUMMARY_COLUMNS: [&str; 23] = [
    "id",
    "frames",
    "width",
    "height",
    "pixel_size_nm",
    "snr",
    "snr_db",
    "i1",
    "i2",
    "s1",
    "s2",
    "cd_nm",
    "cd_std_nm",
    "rows_used",
    "blwr3s_nm",
    "ulwr3s_nm",
    "bler3s_nm",
    "uler3s_nm",
    "lwr_noise_floor_nm3",
    "lwr_xi_nm",
    "lwr_hurst",
    "sigma_true_nm",
    "error",
];

/// Contents of `<id>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub id: String,
    pub source: PathBuf,
    pub frames: Option<usize>,
    /// Realized LWR σ of the sidecar over the rows that were kept.
    pub sigma_true_nm: Option<f64>,
    pub analysis: ImageAnalysis,
}

impl SummaryRow {
    fn from_report(r: &ImageReport, image: &GrayImage) -> Self {
        let a = &r.analysis;
        let fit = &a.snr.fit;
        Self {
            id: r.id.clone(),
            frames: r.frames,
            width: Some(image.width()),
            height: Some(image.height()),
            pixel_size_nm: Some(image.pixel_size()),
            snr: Some(a.snr.linescan_snr),
            snr_db: a.snr.snr_db,
            i1: Some(fit.i1),
            i2: Some(fit.i2),
            s1: Some(fit.s1),
            s2: Some(fit.s2),
            cd_nm: Some(a.cd.mean_cd),
            cd_std_nm: Some(a.cd.cd_std),
            rows_used: Some(a.edges.rows),
            blwr3s_nm: Some(a.roughness.lwr.three_sigma_biased),
            ulwr3s_nm: Some(a.roughness.lwr.three_sigma_unbiased),
            bler3s_nm: Some(a.roughness.ler.three_sigma_biased),
            uler3s_nm: Some(a.roughness.ler.three_sigma_unbiased),
            lwr_noise_floor_nm3: Some(a.roughness.lwr.fit.noise_floor),
            lwr_xi_nm: Some(a.roughness.lwr.fit.xi),
            lwr_hurst: Some(a.roughness.lwr.fit.hurst),
            sigma_true_nm: r.sigma_true_nm,
            error: String::new(),
        }
    }

    fn failed(id: String, error: &Error) -> Self {
        Self {
            frames: frames_from_id(&id),
            id,
            error: error.to_string(),
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyzeOutcome {
    pub rows: Vec<SummaryRow>,
    pub failures: usize,
}

fn analyze_one(path: &Path, config: &RunConfig) -> Result<(ImageReport, GrayImage)> {
    let image = load_image(path, config.pixel_size_override)?;
    let analysis = analyze_image(&image, &config.analysis)?;
    let id = image_id(path);
    let truth = load_truth(path);
    let sigma_true_nm = truth
        .as_ref()
        .filter(|t| t.height == image.height() && t.lines.len() == analysis.edges.n_lines())
        .map(|t| t.lwr_sigma(Some(&analysis.edges.row_indices)));
    let report = ImageReport {
        frames: frames_of(&id, truth.as_ref()),
        id,
        source: path.to_path_buf(),
        sigma_true_nm,
        analysis,
    };
    Ok((report, image))
}

fn write_image_outputs(report: &ImageReport, out: &Path) -> Result<()> {
    let id = &report.id;
    let a = &report.analysis;
    write_json(&out.join(format!("{id}.json")), report)?;
    write_csv(&out.join(format!("{id}.lwr_psd.csv")), &psd_rows(&a.roughness.lwr))?;
    write_csv(&out.join(format!("{id}.ler_psd.csv")), &psd_rows(&a.roughness.ler))?;
    let mut edges = Vec::with_capacity(a.edges.rows * a.edges.n_lines());
    for (k, &row) in a.edges.row_indices.iter().enumerate() {
        for (line, l) in a.edges.lines.iter().enumerate() {
            edges.push(EdgeRow {
                row,
                line,
                left_nm: l.left[k],
                right_nm: l.right[k],
            });
        }
    }
    write_csv(&out.join(format!("{id}.edges.csv")), &edges)
}

/// Analyze every input. A failing image becomes a summary row with the
/// error text and never stops the batch.
pub fn cmd_analyze(config: &RunConfig) -> Result<AnalyzeOutcome> {
    config.validate()?;
    let inputs = expand_inputs(&config.inputs)?;
    if inputs.is_empty() {
        return Err(Error::Config("no input images".into()));
    }
    ensure_dir(&config.out)?;
    let pool = thread_pool(config.jobs)?;
    let mut rows: Vec<SummaryRow> = pool.install(|| {
        inputs
            .par_iter()
            .map(|path| {
                let done = analyze_one(path, config)
                    .and_then(|(report, image)| write_image_outputs(&report, &config.out).map(|_| (report, image)));
                match done {
                    Ok((report, image)) => SummaryRow::from_report(&report, &image),
                    Err(e) => {
                        warn!("{}: {e}", path.display());
                        SummaryRow::failed(image_id(path), &e)
                    }
                }
            })
            .collect()
    });
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    write_csv_or_header(&config.out.join(SUMMARY_FILE), &rows, &SUMMARY_COLUMNS)?;
    let failures = rows.iter().filter(|r| !r.error.is_empty()).count();
    Ok(AnalyzeOutcome { rows, failures })
}

// ----------------------------------------------------------------- compare

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub id: String,
    pub frames: Option<usize>,
    pub snr_noisy: f64,
    pub snr_denoised: f64,
    pub dsnr_pct: f64,
    pub cd_noisy_nm: f64,
    pub cd_denoised_nm: f64,
    pub dcd_pct: f64,
    pub ulwr3s_noisy_nm: f64,
    pub ulwr3s_denoised_nm: f64,
    pub sigma_true_nm: Option<f64>,
}

pub const COMPARISON_COLUMNS: [&str; 11] = [
    "id",
    "frames",
    "snr_noisy",
    "snr_denoised",
    "dsnr_pct",
    "cd_noisy_nm",
    "cd_denoised_nm",
    "dcd_pct",
    "ulwr3s_noisy_nm",
    "ulwr3s_denoised_nm",
    "sigma_true_nm",
];

impl ComparisonRow {
    pub fn new(id: String, frames: Option<usize>, c: &DenoiserComparison) -> Self {
        Self {
            id,
            frames,
            snr_noisy: c.snr_noisy,
            snr_denoised: c.snr_denoised,
            dsnr_pct: c.snr_delta_pct,
            cd_noisy_nm: c.cd_noisy,
            cd_denoised_nm: c.cd_denoised,
            dcd_pct: c.cd_delta_pct,
            ulwr3s_noisy_nm: 3.0 * c.lwr_noisy.unbiased,
            ulwr3s_denoised_nm: 3.0 * c.lwr_denoised.unbiased,
            sigma_true_nm: c.sigma_true,
        }
    }
}

/// One point of the SNR versus unbiased LWR scatter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub id: String,
    pub kind: String,
    pub frames: Option<usize>,
    pub snr: f64,
    pub ulwr3s_nm: f64,
    pub blwr3s_nm: f64,
}

pub const SCATTER_COLUMNS: [&str; 6] = ["id", "kind", "frames", "snr", "ulwr3s_nm", "blwr3s_nm"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub noisy: PathBuf,
    pub denoised: PathBuf,
    pub frames: Option<usize>,
    pub comparison: DenoiserComparison,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareOutcome {
    pub rows: Vec<ComparisonRow>,
    pub unpaired: Vec<PathBuf>,
    /// `(id, error)` for pairs that were found but could not be analyzed.
    pub failures: Vec<(String, String)>,
}

enum PairResult {
    Done(PairRecord),
    Unpaired(PathBuf),
    Failed(String, String),
}

fn compare_one(noisy_path: &Path, config: &RunConfig) -> PairResult {
    let id = image_id(noisy_path);
    let fail = |e: Error| PairResult::Failed(id.clone(), e.to_string());
    let noisy = match load_image(noisy_path, config.pixel_size_override) {
        Ok(i) => i,
        Err(e) => return fail(e),
    };
    let (denoised, denoised_path) = match &config.denoiser {
        DenoiserSpec::External { pattern } => {
            let p = DenoiserSpec::external_path(pattern, noisy_path);
            if !p.is_file() {
                return PairResult::Unpaired(noisy_path.to_path_buf());
            }
            match denoise(&noisy, &config.denoiser, Some(noisy_path)) {
                Ok(d) => (d, p),
                Err(e) => return fail(e),
            }
        }
        spec => {
            let p = config.out.join(format!("{id}{DENOISED_SUFFIX}.pgm"));
            let d = match denoise(&noisy, spec, None) {
                Ok(d) => d,
                Err(e) => return fail(e),
            };
            let depth = noisy.bit_depth_source().unwrap_or(BitDepth::Sixteen);
            if let Err(e) = save_image(&d, &p, depth) {
                return fail(e);
            }
            (d, p)
        }
    };
    let truth = load_truth(noisy_path).filter(|t| t.height == noisy.height());
    let run = || -> Result<DenoiserComparison> {
        let a = analyze_image(&noisy, &config.analysis)?;
        let b = analyze_image(&denoised, &config.analysis)?;
        let truth = truth.as_ref().filter(|t| t.lines.len() == a.edges.n_lines());
        compare_analyses(&a, &b, truth)
    };
    match run() {
        Ok(comparison) => PairResult::Done(PairRecord {
            frames: frames_of(&id, truth.as_ref()),
            id,
            noisy: noisy_path.to_path_buf(),
            denoised: denoised_path,
            comparison,
        }),
        Err(e) => fail(e),
    }
}

/// Pair each noisy input with its denoised counterpart and tabulate the
/// changes. Files named `*.denoised.pgm` are never treated as noisy inputs.
pub fn cmd_compare(config: &RunConfig) -> Result<CompareOutcome> {
    config.validate()?;
    let inputs: Vec<PathBuf> = expand_inputs(&config.inputs)?
        .into_iter()
        .filter(|p| !is_denoised(p))
        .collect();
    if inputs.is_empty() {
        return Err(Error::Config("no noisy input images".into()));
    }
    ensure_dir(&config.out)?;
    let pool = thread_pool(config.jobs)?;
    let results: Vec<PairResult> = pool.install(|| inputs.par_iter().map(|p| compare_one(p, config)).collect());

    let mut records = Vec::new();
    let mut unpaired = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            PairResult::Done(rec) => records.push(rec),
            PairResult::Unpaired(p) => {
                warn!("no denoised counterpart for {}", p.display());
                unpaired.push(p)
            }
            PairResult::Failed(id, e) => {
                warn!("{id}: {e}");
                failures.push((id, e))
            }
        }
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));

    let rows: Vec<ComparisonRow> = records
        .iter()
        .map(|r| ComparisonRow::new(r.id.clone(), r.frames, &r.comparison))
        .collect();
    let scatter: Vec<ScatterRow> = records
        .iter()
        .flat_map(|r| {
            let c = &r.comparison;
            [
                ("noisy", c.snr_noisy, c.lwr_noisy),
                ("denoised", c.snr_denoised, c.lwr_denoised),
            ]
            .map(|(kind, snr, s)| ScatterRow {
                id: r.id.clone(),
                kind: kind.into(),
                frames: r.frames,
                snr,
                ulwr3s_nm: 3.0 * s.unbiased,
                blwr3s_nm: 3.0 * s.biased,
            })
        })
        .collect();
    write_csv_or_header(&config.out.join(COMPARISON_FILE), &rows, &COMPARISON_COLUMNS)?;
    write_csv_or_header(&config.out.join(SCATTER_FILE), &scatter, &SCATTER_COLUMNS)?;
    write_json(&config.out.join("comparison.json"), &records)?;
    if !unpaired.is_empty() {
        let text: String = unpaired.iter().map(|p| format!("{}\n", p.display())).collect();
        let p = config.out.join("unpaired.txt");
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    if !failures.is_empty() {
        #[derive(Serialize)]
        struct Failure<'a> {
            id: &'a str,
            error: &'a str,
        }
        let f: Vec<Failure> = failures.iter().map(|(id, error)| Failure { id, error }).collect();
        write_csv(&config.out.join("compare_failures.csv"), &f)?;
    }
    Ok(CompareOutcome {
        rows,
        unpaired,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_and_frames() {
        assert_eq!(generated_id(3, 1, 4), "ls_s003_c1_f04");
        assert_eq!(frames_from_id("ls_s003_c1_f04"), Some(4));
        assert_eq!(frames_from_id("ls_s003_c1_f64.denoised"), Some(64));
        assert_eq!(frames_from_id("wafer_a"), None);
    }

    #[test]
    fn sidecar_paths() {
        assert_eq!(truth_path(Path::new("/d/x_f04.pgm")), Path::new("/d/x_f04.truth.json"));
        assert_eq!(
            truth_path(Path::new("/d/x_f04.denoised.pgm")),
            Path::new("/d/x_f04.truth.json")
        );
        assert!(is_denoised(Path::new("a.denoised.pgm")));
        assert!(!is_denoised(Path::new("a.pgm")));
    }

    #[test]
    fn seeds_differ_per_cell() {
        assert_ne!(scene_seed(1, 0), scene_seed(1, 1));
        assert_ne!(noise_seed(1, 0, 0), noise_seed(1, 0, 1));
        assert_ne!(noise_seed(1, 0, 0), scene_seed(1, 0));
    }

    #[test]
    fn expands_directories_sorted() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["b.pgm", "a.pgm", "c.txt"] {
            fs::write(dir.path().join(n), b"").unwrap();
        }
        let got = expand_inputs(&[dir.path().to_path_buf(), dir.path().join("a.pgm")]).unwrap();
        let names: Vec<String> = got.iter().map(|p| image_id(p)).collect();
        assert_eq!(names, ["a", "b"]);
    }

    #[test]
    fn empty_csv_keeps_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_csv_or_header::<ComparisonRow>(&p, &[], &COMPARISON_COLUMNS).unwrap();
        assert_eq!(fs::read_to_string(p).unwrap().trim(), COMPARISON_COLUMNS.join(","));
    }
}
