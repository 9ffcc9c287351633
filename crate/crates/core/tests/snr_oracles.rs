use lsmetro::config::{default_scene, FRAME_LADDER};
use lsmetro::snr::*;
use lsmetro::synthetic::*;
use rayon::prelude::*;

#[test]
fn noisy_histogram_conserves_counts_and_broadens() {
    let (ideal, _) = generate_scene(&default_scene(), 5).unwrap();
    let img = &simulate_frame_ladder(&ideal, 64.0, 6, &[4]).unwrap()[0];
    let h = grayscale_histogram(img, 256).unwrap();
    assert_eq!(h.total(), img.samples().len() as f64);
    let occupied = |h: &Histogram| h.counts.iter().filter(|&&c| c > 0.0).count();
    let clean = grayscale_histogram(&ideal, 256).unwrap();
    assert!(occupied(&h) > occupied(&clean));
}

#[test]
fn sixty_four_frames_beat_four() {
    for s in 0..5 {
        let (ideal, _) = generate_scene(&default_scene(), 40 + s).unwrap();
        let l = simulate_frame_ladder(&ideal, 64.0, 41 + s, &[4, 64]).unwrap();
        let a = estimate_snr(&l[0], 256).unwrap().linescan_snr;
        let b = estimate_snr(&l[1], 256).unwrap().linescan_snr;
        assert!(b > a, "seed {s}: {a} vs {b}");
    }
}

#[test]
fn seed_averaged_snr_grows_along_the_frame_ladder() {
    let mut scene = default_scene();
    scene.height = 128;
    let seeds = 200u64;
    let sums = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let (ideal, _) = generate_scene(&scene, 1000 + s).unwrap();
            simulate_frame_ladder(&ideal, 64.0, 2000 + s, &FRAME_LADDER)
                .unwrap()
                .iter()
                .map(|img| estimate_snr(img, 256).unwrap().linescan_snr)
                .collect::<Vec<_>>()
        })
        .reduce(
            || vec![0.0; FRAME_LADDER.len()],
            |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect(),
        );
    let mean: Vec<f64> = sums.iter().map(|v| v / seeds as f64).collect();
    assert!(mean.windows(2).all(|w| w[1] >= w[0]), "{mean:?}");
}
