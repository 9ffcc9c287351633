use std::f64::consts::PI;

use lsmetro::config::default_scene;
use lsmetro::image::GrayImage;
use lsmetro::psd::{palasantzas_model, PsdModel};
use lsmetro::snr::estimate_snr;
use lsmetro::synthetic::*;
use proptest::prelude::*;

fn params() -> PalasantzasParams {
    PalasantzasParams {
        sigma: 1.0,
        xi: 20.0,
        hurst: 0.75,
        exponent_free: None,
    }
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

/// Periodogram bin `k` by direct summation, `2Δ/N |Σ w_j e^{-2πijk/N}|²`.
fn naive_bin(w: &[f64], k: usize, dx: f64) -> f64 {
    let n = w.len();
    let (mut re, mut im) = (0.0, 0.0);
    for (j, &x) in w.iter().enumerate() {
        let a = -2.0 * PI * (j * k % n) as f64 / n as f64;
        re += x * a.cos();
        im += x * a.sin();
    }
    let scale = if k == n / 2 { 1.0 } else { 2.0 };
    scale * dx / n as f64 * (re * re + im * im)
}

#[test]
fn trace_variance_over_200_seeds() {
    let v: Vec<f64> = (0..200)
        .map(|s| variance(&sample_edge_trace(&params(), PsdModel::Palasantzas1, 2048, 0.8, s).unwrap()))
        .collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean - 1.0).abs() < 0.05, "mean variance {mean}");
}

#[test]
fn expected_periodogram_is_the_model() {
    let (n, dx) = (2048, 0.8);
    let p = params();
    let psd0 = p.psd0_for_band(PsdModel::Palasantzas1, n, dx).unwrap();
    let traces: Vec<Vec<f64>> = (0..200)
        .map(|s| sample_edge_trace(&p, PsdModel::Palasantzas1, n, dx, 1000 + s).unwrap())
        .collect();
    // band [2/(NΔ), 1/(4Δ)] is bins 2..=512; every 17th bin by direct DFT
    let bins: Vec<usize> = (2..=512).step_by(17).collect();
    let mut ratios = Vec::new();
    for &k in &bins {
        let avg = traces.iter().map(|t| naive_bin(t, k, dx)).sum::<f64>() / traces.len() as f64;
        let f = k as f64 / (n as f64 * dx);
        let model = palasantzas_model(f, psd0, 20.0, 0.75, PsdModel::Palasantzas1, None).unwrap();
        ratios.push(avg / model);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let sd = variance(&ratios).sqrt();
    // each bin averages 200 exponential draws: relative sd 1/√200
    assert!((mean - 1.0).abs() < 0.03, "mean ratio {mean}");
    assert!(sd > 0.04 && sd < 0.10, "spread {sd}");
}

#[test]
fn independent_edges_give_twice_the_width_variance() {
    // σ = 1 nm per edge
    let v: Vec<f64> = (0..200u64)
        .map(|s| {
            let l = sample_edge_trace(&params(), PsdModel::Palasantzas1, 1024, 0.8, 2 * s).unwrap();
            let r = sample_edge_trace(&params(), PsdModel::Palasantzas1, 1024, 0.8, 2 * s + 1).unwrap();
            variance(&r.iter().zip(&l).map(|(a, b)| a - b).collect::<Vec<_>>())
        })
        .collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean - 2.0).abs() / 2.0 < 0.10, "{mean}");
}

#[test]
fn many_frames_converge_on_a_constant() {
    let ideal = GrayImage::constant(16, 16, 1.0, 0.5).unwrap();
    let out = simulate_frames(
        &ideal,
        &NoiseSpec {
            electrons_per_pixel_per_frame: 100.0,
            n_frames: 4096,
            seed: 3,
        },
    )
    .unwrap();
    assert!((out.mean() - 0.5).abs() / 0.5 < 0.01);
    assert!(variance(out.samples()).sqrt() < 0.002);
}

#[test]
fn pixel_variance_scales_inversely_with_frames() {
    let ideal = GrayImage::constant(64, 64, 1.0, 0.4).unwrap();
    let frames = [1, 4, 16];
    let mut acc = [0.0; 3];
    for seed in 0..5 {
        let ladder = simulate_frame_ladder(&ideal, 50.0, seed, &frames).unwrap();
        for (a, img) in acc.iter_mut().zip(&ladder) {
            *a += variance(img.samples()) / 5.0;
        }
    }
    // Poisson: var = v / (e n)
    for (&n, &v) in frames.iter().zip(&acc) {
        let want = 0.4 / (50.0 * n as f64);
        assert!((v / want - 1.0).abs() < 0.10, "{n} frames: {v} vs {want}");
    }
}

#[test]
fn frame_average_is_unbiased() {
    let spec = default_scene();
    let (ideal, _) = generate_scene(&spec, 1).unwrap();
    let n = 40;
    let mut mean = vec![0.0; ideal.samples().len()];
    for seed in 0..n {
        let img = simulate_frames(
            &ideal,
            &NoiseSpec {
                electrons_per_pixel_per_frame: 64.0,
                n_frames: 4,
                seed,
            },
        )
        .unwrap();
        for (m, v) in mean.iter_mut().zip(img.samples()) {
            *m += v / n as f64;
        }
    }
    let bias = mean.iter().zip(ideal.samples()).map(|(m, v)| m - v).sum::<f64>() / mean.len() as f64;
    let worst = mean
        .iter()
        .zip(ideal.samples())
        .map(|(m, v)| (m - v).abs())
        .fold(0.0, f64::max);
    assert!(bias.abs() < 1e-3, "{bias}");
    // per pixel sd over 40 images of 4 frames is about 0.0072
    assert!(worst < 0.05, "{worst}");
}

#[test]
fn snr_grows_fourfold_from_4_to_64_frames() {
    let spec = default_scene();
    let (mut s4, mut s64) = (0.0, 0.0);
    for seed in 0..5 {
        let (ideal, _) = generate_scene(&spec, seed).unwrap();
        let l = simulate_frame_ladder(&ideal, 64.0, 100 + seed, &[4, 64]).unwrap();
        s4 += estimate_snr(&l[0], 256).unwrap().linescan_snr;
        s64 += estimate_snr(&l[1], 256).unwrap().linescan_snr;
    }
    let ratio = s64 / s4;
    assert!((ratio / 4.0 - 1.0).abs() < 0.15, "{ratio}");
}

#[test]
fn sidecar_edges_sit_at_nominal_positions_on_average() {
    let spec = default_scene();
    let (_, truth) = generate_scene(&spec, 9).unwrap();
    let nominal = spec.pattern.nominal_edges(spec.width, spec.pixel_size);
    for (line, (l, r)) in truth.lines.iter().zip(nominal) {
        let ml = line.left.iter().sum::<f64>() / line.left.len() as f64;
        let mr = line.right.iter().sum::<f64>() / line.right.len() as f64;
        // σ ≈ 0.7 nm per edge, with correlation over about 20 nm of 410
        assert!((ml - l).abs() < 1.0 && (mr - r).abs() < 1.0);
    }
    assert!((truth.mean_cd() - 16.0).abs() < 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthesis_is_deterministic_and_zero_mean(
        sigma in 0.1f64..3.0,
        xi in 2.0f64..60.0,
        hurst in 0.1f64..1.0,
        seed in any::<u64>(),
    ) {
        let p = PalasantzasParams { sigma, xi, hurst, exponent_free: None };
        let a = sample_edge_trace(&p, PsdModel::Palasantzas1, 256, 0.8, seed).unwrap();
        let b = sample_edge_trace(&p, PsdModel::Palasantzas1, 256, 0.8, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        prop_assert!(mean.abs() < 1e-9 * sigma.max(1.0));
    }

    #[test]
    fn frames_keep_geometry_and_range(
        level in 0.0f64..1.0,
        e in 1.0f64..200.0,
        n in 1usize..6,
        seed in any::<u64>(),
    ) {
        let ideal = GrayImage::constant(12, 10, 0.8, level).unwrap();
        let out = simulate_frames(&ideal, &NoiseSpec { electrons_per_pixel_per_frame: e, n_frames: n, seed }).unwrap();
        prop_assert!(out.same_geometry(&ideal));
        prop_assert!(out.samples().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
