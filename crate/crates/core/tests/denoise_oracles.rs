use lsmetro::analysis::AnalysisConfig;
use lsmetro::config::default_scene;
use lsmetro::denoise::*;
use lsmetro::image::GrayImage;
use lsmetro::snr::estimate_snr;
use lsmetro::synthetic::*;
use rayon::prelude::*;

fn noisy(seed: u64, frames: usize) -> (GrayImage, GroundTruth) {
    let (ideal, truth) = generate_scene(&default_scene(), seed).unwrap();
    let img = simulate_frames(
        &ideal,
        &NoiseSpec {
            electrons_per_pixel_per_frame: 64.0,
            n_frames: frames,
            seed: 7000 + seed,
        },
    )
    .unwrap();
    (img, truth)
}

fn classical() -> Vec<DenoiserSpec> {
    vec![
        DenoiserSpec::Gaussian { sigma: 1.0 },
        DenoiserSpec::Median { radius: 1 },
        DenoiserSpec::nlmeans_default(),
    ]
}

fn snr(img: &GrayImage) -> f64 {
    estimate_snr(img, 256).unwrap().linescan_snr
}

#[test]
fn geometry_range_and_mean_are_preserved() {
    let (img, _) = noisy(1, 4);
    for spec in classical() {
        let out = denoise(&img, &spec, None).unwrap();
        assert!(out.same_geometry(&img));
        assert!(out.samples().iter().all(|v| (0.0..=1.0).contains(v)));
        let shift = (out.mean() - img.mean()).abs() / img.mean();
        assert!(shift <= 0.02, "{spec:?}: {shift}");
    }
}

#[test]
fn denoising_is_deterministic() {
    let (img, _) = noisy(2, 4);
    for spec in classical() {
        assert_eq!(denoise(&img, &spec, None).unwrap(), denoise(&img, &spec, None).unwrap());
    }
}

#[test]
fn nlmeans_raises_snr_on_20_seeds() {
    let spec = DenoiserSpec::nlmeans_default();
    (0..20u64).into_par_iter().for_each(|s| {
        let (img, _) = noisy(100 + s, 4);
        let before = snr(&img);
        let after = snr(&denoise(&img, &spec, None).unwrap());
        assert!(after > before, "seed {s}: {before} -> {after}");
    });
}

#[test]
fn second_pass_gains_no_more_than_the_first() {
    for spec in [DenoiserSpec::Gaussian { sigma: 1.0 }, DenoiserSpec::Median { radius: 1 }] {
        for s in 0..20u64 {
            let (img, _) = noisy(200 + s, 4);
            let once = denoise(&img, &spec, None).unwrap();
            let twice = denoise(&once, &spec, None).unwrap();
            let (s0, s1, s2) = (snr(&img), snr(&once), snr(&twice));
            assert!(s2 - s1 <= s1 - s0, "{spec:?} seed {s}: {s0} {s1} {s2}");
        }
    }
}

#[test]
fn identical_pair_has_zero_deltas() {
    let (img, truth) = noisy(3, 8);
    let c = evaluate_denoiser(&img, &img, Some(&truth), &AnalysisConfig::default()).unwrap();
    assert_eq!(c.snr_delta_pct, 0.0);
    assert_eq!(c.cd_delta_pct, 0.0);
    assert_eq!(c.error_noisy, c.error_denoised);
}

#[test]
fn geometry_mismatch_is_rejected() {
    let (img, _) = noisy(4, 4);
    let other = GrayImage::constant(img.width() + 1, img.height(), img.pixel_size(), 0.5).unwrap();
    assert!(evaluate_denoiser(&img, &other, None, &AnalysisConfig::default()).is_err());
}

#[test]
fn resimulation_at_64_frames_keeps_the_cd() {
    for s in 0..5u64 {
        let (ideal, truth) = generate_scene(&default_scene(), 300 + s).unwrap();
        let l = simulate_frame_ladder(&ideal, 64.0, 11 + s, &[4, 64]).unwrap();
        let c = evaluate_denoiser(&l[0], &l[1], Some(&truth), &AnalysisConfig::default()).unwrap();
        assert!(c.cd_delta_pct.abs() <= 5.0, "seed {s}: {}", c.cd_delta_pct);
    }
}

#[test]
fn nlmeans_does_not_worsen_the_roughness_error_at_4_frames() {
    let spec = DenoiserSpec::nlmeans_default();
    let cfg = AnalysisConfig::default();
    let better = (0..50u64)
        .into_par_iter()
        .filter(|&s| {
            let (img, truth) = noisy(400 + s, 4);
            let out = denoise(&img, &spec, None).unwrap();
            let c = evaluate_denoiser(&img, &out, Some(&truth), &cfg).unwrap();
            c.error_denoised.unwrap().abs() <= c.error_noisy.unwrap().abs()
        })
        .count();
    assert!(better >= 40, "{better} of 50");
}
