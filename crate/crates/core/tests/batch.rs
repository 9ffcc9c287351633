use std::fs;
use std::path::{Path, PathBuf};

use lsmetro::batch::*;
use lsmetro::config::{default_scene, RunConfig, FRAME_LADDER};
use lsmetro::denoise::DenoiserSpec;
use lsmetro::image::{save_image, BitDepth};
use lsmetro::synthetic::render_pattern;
use tempfile::TempDir;

fn small(out: &Path) -> RunConfig {
    let mut c = RunConfig {
        out: out.to_path_buf(),
        ..Default::default()
    };
    c.generate.scene.height = 128;
    c
}

fn generate(dir: &Path, seeds: usize, frames: &[usize]) -> Vec<GeneratedImage> {
    let mut c = small(dir);
    c.generate.seeds = seeds;
    c.frames = frames.to_vec();
    cmd_generate(&c).unwrap()
}

fn files_with(dir: &Path, suffix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(suffix))
        .collect();
    v.sort();
    v
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

#[test]
fn generate_writes_one_image_and_sidecar_per_cell() {
    let dir = TempDir::new().unwrap();
    let made = generate(dir.path(), 3, &[4, 64]);
    assert_eq!(made.len(), 6);
    assert_eq!(files_with(dir.path(), ".pgm").len(), 6);
    assert_eq!(files_with(dir.path(), ".truth.json").len(), 6);
}

#[test]
fn regeneration_is_bit_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    generate(a.path(), 2, &[4, 16]);
    let mut c = small(b.path());
    c.generate.seeds = 2;
    c.frames = vec![4, 16];
    c.jobs = 1;
    cmd_generate(&c).unwrap();
    let fa = files_with(a.path(), "");
    let fb = files_with(b.path(), "");
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn default_ladder_is_4_to_64() {
    let dir = TempDir::new().unwrap();
    let c = small(dir.path());
    assert_eq!(c.frames, FRAME_LADDER.to_vec());
    let made = cmd_generate(&c).unwrap();
    let frames: Vec<usize> = made.iter().map(|m| m.frames).collect();
    assert_eq!(frames, vec![4, 8, 16, 32, 64]);
}

#[test]
fn analysis_snr_grows_with_frames_and_headers_are_fixed() {
    let dir = TempDir::new().unwrap();
    generate(dir.path(), 1, &FRAME_LADDER);
    let out = dir.path().join("out");
    let mut c = small(&out);
    c.inputs = vec![dir.path().to_path_buf()];
    let res = cmd_analyze(&c).unwrap();
    assert_eq!(res.failures, 0);
    assert_eq!(res.rows.len(), 5);
    let snr: Vec<f64> = res.rows.iter().map(|r| r.snr.unwrap()).collect();
    assert!(snr.windows(2).all(|w| w[1] > w[0]), "{snr:?}");
    assert!(res.rows.iter().all(|r| r.sigma_true_nm.is_some()));
    assert_eq!(header(&out.join(SUMMARY_FILE)), SUMMARY_COLUMNS);
    let id = &res.rows[0].id;
    assert_eq!(header(&out.join(format!("{id}.lwr_psd.csv"))), PSD_COLUMNS);
    assert_eq!(header(&out.join(format!("{id}.ler_psd.csv"))), PSD_COLUMNS);
    assert_eq!(header(&out.join(format!("{id}.edges.csv"))), ["row", "line", "left_nm", "right_nm"]);
    assert!(out.join(format!("{id}.json")).exists());
}

#[test]
fn a_corrupt_file_becomes_an_error_row() {
    let dir = TempDir::new().unwrap();
    generate(dir.path(), 3, &[4, 8, 64]);
    fs::write(dir.path().join("broken.pgm"), b"P5\n12 garbage").unwrap();
    let out = dir.path().join("out");
    let mut c = small(&out);
    c.inputs = vec![dir.path().to_path_buf()];
    let res = cmd_analyze(&c).unwrap();
    assert_eq!(res.rows.len(), 10);
    assert_eq!(res.failures, 1);
    let bad: Vec<_> = res.rows.iter().filter(|r| !r.error.is_empty()).collect();
    assert_eq!(bad.len(), 1);
    assert_eq!(bad[0].id, "broken");
    assert!(bad[0].snr.is_none());
    assert_eq!(files_with(&out, ".json").len(), 9);
    let mut r = csv::Reader::from_path(out.join(SUMMARY_FILE)).unwrap();
    assert_eq!(r.records().count(), 10);
}

#[test]
fn ideal_raster_gives_large_snr_and_exact_cd() {
    let dir = TempDir::new().unwrap();
    let s = default_scene();
    let zero = vec![vec![0.0; 128]; 2 * s.pattern.n_lines];
    let img = render_pattern(&s.pattern, &zero, s.width, 128, s.pixel_size).unwrap();
    save_image(&img, &dir.path().join("ideal.pgm"), BitDepth::Sixteen).unwrap();
    let mut c = small(&dir.path().join("out"));
    c.inputs = vec![dir.path().join("ideal.pgm")];
    let res = cmd_analyze(&c).unwrap();
    let row = &res.rows[0];
    assert!(row.error.is_empty(), "{}", row.error);
    let snr = row.snr.unwrap();
    assert!(snr.is_finite() && snr > 50.0, "{snr}");
    assert!((row.cd_nm.unwrap() - 16.0).abs() <= 0.1);
}

#[test]
fn results_do_not_depend_on_workers_or_input_order() {
    let dir = TempDir::new().unwrap();
    let made = generate(dir.path(), 2, &[4, 64]);
    let run = |jobs: usize, inputs: Vec<PathBuf>, out: &str| {
        let mut c = small(&dir.path().join(out));
        c.jobs = jobs;
        c.inputs = inputs;
        cmd_analyze(&c).unwrap();
        fs::read(dir.path().join(out).join(SUMMARY_FILE)).unwrap()
    };
    let forward: Vec<PathBuf> = made.iter().map(|m| m.image.clone()).collect();
    let reverse: Vec<PathBuf> = forward.iter().rev().cloned().collect();
    let a = run(1, forward, "a");
    let b = run(0, reverse, "b");
    assert_eq!(a, b);
}

#[test]
fn identical_pair_compares_to_zero() {
    let dir = TempDir::new().unwrap();
    let made = generate(dir.path(), 1, &[8]);
    let src = &made[0].image;
    fs::copy(src, dir.path().join(format!("{}.denoised.pgm", made[0].id))).unwrap();
    let mut c = small(&dir.path().join("out"));
    c.inputs = vec![dir.path().to_path_buf()];
    let res = cmd_compare(&c).unwrap();
    assert_eq!(res.rows.len(), 1);
    assert!(res.unpaired.is_empty());
    assert_eq!(res.rows[0].dsnr_pct, 0.0);
    assert_eq!(res.rows[0].dcd_pct, 0.0);
    assert_eq!(header(&dir.path().join("out").join(COMPARISON_FILE)), COMPARISON_COLUMNS);
}

#[test]
fn nlmeans_pairs_raise_snr() {
    let dir = TempDir::new().unwrap();
    generate(dir.path(), 1, &[4]);
    let out = dir.path().join("out");
    let mut c = small(&out);
    c.inputs = vec![dir.path().to_path_buf()];
    c.denoiser = DenoiserSpec::nlmeans_default();
    let res = cmd_compare(&c).unwrap();
    assert_eq!(res.rows.len(), 1);
    assert!(res.rows[0].dsnr_pct > 0.0);
    assert!(res.rows[0].snr_denoised > res.rows[0].snr_noisy);
    assert!(res.rows[0].sigma_true_nm.is_some());
    assert_eq!(files_with(&out, ".denoised.pgm").len(), 1);
    assert_eq!(header(&out.join(SCATTER_FILE)), ["id", "kind", "frames", "snr", "ulwr3s_nm", "blwr3s_nm"]);
}

#[test]
fn unpaired_inputs_are_listed_and_skipped() {
    let dir = TempDir::new().unwrap();
    let made = generate(dir.path(), 2, &[4]);
    fs::copy(&made[0].image, dir.path().join(format!("{}.denoised.pgm", made[0].id))).unwrap();
    let mut c = small(&dir.path().join("out"));
    c.inputs = vec![dir.path().to_path_buf()];
    let res = cmd_compare(&c).unwrap();
    assert_eq!(res.rows.len(), 1);
    assert_eq!(res.unpaired, vec![made[1].image.clone()]);
}
