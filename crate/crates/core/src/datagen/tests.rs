use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::model::ArchConfig;
use crate::rng::stream;
use crate::{complete, CompletionConfig, ObservationMask};

fn small(link: Link, scale: f64, seed: u64) -> PlantedConfig {
    PlantedConfig {
        dims: vec![2, 3, 2],
        input_dim: 5,
        arch: ArchConfig { hidden: vec![8], repr_dim: 4, ..ArchConfig::default() },
        classes: if link == Link::Softmax { 3 } else { 1 },
        rank: 2,
        link,
        head_scale: scale,
        seed,
    }
}

#[test]
fn planting_is_deterministic() {
    let a = plant_model(&small(Link::Logistic, 1.0, 9)).unwrap();
    let b = plant_model(&small(Link::Logistic, 1.0, 9)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, plant_model(&small(Link::Logistic, 1.0, 10)).unwrap());
}

#[test]
fn planted_heads_have_unit_rms_norm() {
    for seed in 0..5 {
        let m = plant_model(&small(Link::Softmax, 1.0, seed)).unwrap();
        let heads = m.model.bank.materialize().unwrap();
        let mut ss = 0.0;
        for row in heads.rows() {
            ss += row.iter().map(|v| v * v).sum::<f64>();
        }
        let rms = libm::sqrt(ss / heads.grid().len() as f64);
        assert!((rms - 1.0).abs() < 0.1, "rms {rms}");
    }
}

#[test]
fn planted_heads_are_rank_k() {
    let m = plant_model(&small(Link::Logistic, 1.0, 3)).unwrap();
    let heads = m.model.bank.materialize().unwrap();
    let cfg = CompletionConfig { rank: 2, max_sweeps: 3000, restarts: 5, ..CompletionConfig::default() };
    let res = complete(&heads, &ObservationMask::all(m.grid().clone()), &cfg).unwrap();
    assert!(res.objective_l2 <= 1e-6, "{}", res.objective_l2);
}

#[test]
fn noiseless_gaussian_labels_equal_the_planted_output() {
    let m = plant_model(&small(Link::Gaussian { sigma: 0.0 }, 1.0, 1)).unwrap();
    let ds = m.dataset(&[0, 7], 20, 5, stream::TRAIN_DATA).unwrap();
    for t in [0, 7] {
        for s in ds.domain(t) {
            assert_eq!(s.y, m.model.forward(t, &s.x).unwrap()[0]);
        }
    }
}

fn bayes_accuracy(m: &PlantedModel) -> f64 {
    let domains: Vec<usize> = (0..m.grid().len()).collect();
    let ds = m.dataset(&domains, 400, 77, stream::TEST_DATA).unwrap();
    let mut hit = 0usize;
    for &t in &domains {
        for s in ds.domain(t) {
            let z = m.model.forward(t, &s.x).unwrap();
            hit += ((z[0] > 0.0) as u8 as f64 == s.y) as usize;
        }
    }
    hit as f64 / ds.total_samples() as f64
}

#[test]
fn planted_predictor_beats_chance_more_with_larger_heads() {
    let mut prev = 0.5;
    for scale in [1.0, 4.0, 16.0] {
        let acc = bayes_accuracy(&plant_model(&small(Link::Logistic, scale, 2)).unwrap());
        assert!(acc > prev, "scale {scale}: accuracy {acc} not above {prev}");
        prev = acc;
    }
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn domains_share_the_input_marginal() {
    let m = plant_model(&small(Link::Logistic, 1.0, 4)).unwrap();
    let n = 10_000;
    let ds = m.dataset(&[0, 11], n, 8, stream::TRAIN_DATA).unwrap();
    let first = |t: usize| ds.domain(t).iter().map(|s| s.x[0]).collect::<Vec<_>>();
    // critical value at the 1% level: 1.628·sqrt(2/n)
    let crit = 1.628 * libm::sqrt(2.0 / n as f64);
    assert!(ks(first(0), first(11)) < crit);
}

#[test]
fn subsets_reproduce_per_domain_data() {
    let m = plant_model(&small(Link::Softmax, 1.0, 4)).unwrap();
    let a = m.dataset(&[1, 2, 3], 5, 8, stream::TRAIN_DATA).unwrap();
    let b = m.dataset(&[3], 5, 8, stream::TRAIN_DATA).unwrap();
    assert_eq!(a.domain(3), b.domain(3));
    let c = m.dataset(&[3], 5, 8, stream::TEST_DATA).unwrap();
    assert_ne!(a.domain(3), c.domain(3));
}

#[test]
fn default_transform_lists() {
    let cfg = GridTransformConfig::default();
    assert_eq!(cfg.rotations, vec![-30.0, -15.0, 0.0, 15.0, 30.0]);
    assert_eq!(cfg.translations, vec![[-3.0, 0.0], [0.0, -3.0], [0.0, 0.0], [0.0, 3.0], [3.0, 0.0]]);
    assert_eq!(cfg.grid().unwrap().dims(), &[5, 5]);
}

#[test]
fn identity_domain_leaves_base_unchanged() {
    let cfg = GridTransformConfig { noise: 0.0, ..GridTransformConfig::default() };
    // rotation index 2 is 0°, translation index 2 is (0, 0)
    let ds = grid_transform_dataset(&cfg, &[12], 10, 1, stream::TRAIN_DATA).unwrap();
    let img: Vec<f64> = ds.domain(12)[0].x.clone();
    assert_eq!(rotate_raster(&img, 20, 20, 0.0), img);
    assert_eq!(translate_raster(&img, 20, 20, 0.0, 0.0), img);
}

#[test]
fn rotation_round_trip() {
    let cfg = GridTransformConfig { noise: 0.0, ..GridTransformConfig::default() };
    let ds = grid_transform_dataset(&cfg, &[12], 20, 3, stream::TRAIN_DATA).unwrap();
    for s in ds.domain(12) {
        for th in [15.0, 30.0] {
            let back = rotate_raster(&rotate_raster(&s.x, 20, 20, th), 20, 20, -th);
            let mae = back.iter().zip(&s.x).map(|(a, b)| (a - b).abs()).sum::<f64>() / 400.0;
            assert!(mae <= 1e-2, "mean abs error {mae}");
        }
    }
    let pts = [1.0, 2.0, -3.5, 0.25, 0.0, -4.0];
    let back = transform_points(&transform_points(&pts, 30.0, [0.0, 0.0]), -30.0, [0.0, 0.0]);
    for (a, b) in back.iter().zip(pts) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn translation_moves_mass() {
    let mut img = vec![0.0; 16];
    img[5] = 1.0; // row 1, col 1
    let out = translate_raster(&img, 4, 4, 2.0, 1.0);
    assert_eq!(out[2 * 4 + 3], 1.0);
    assert_eq!(out.iter().sum::<f64>(), 1.0);
    // 90° counter-clockwise moves the right-middle to the top-middle
    let mut img = vec![0.0; 9];
    img[5] = 1.0;
    let r = rotate_raster(&img, 3, 3, 90.0);
    assert!((r[1] - 1.0).abs() < 1e-12);
}

#[test]
fn clipped_translations_are_flagged() {
    let cfg = GridTransformConfig { translations: vec![[40.0, 0.0]], rotations: vec![0.0], ..GridTransformConfig::default() };
    let ds = grid_transform_dataset(&cfg, &[0], 2, 0, stream::TRAIN_DATA).unwrap();
    assert!(ds.provenance().contains_key("warning"));
    let ok = grid_transform_dataset(&GridTransformConfig::default(), &[0], 2, 0, stream::TRAIN_DATA).unwrap();
    assert!(!ok.provenance().contains_key("warning"));
}

#[test]
fn point_set_domains_apply_exact_affine_maps() {
    let cfg = GridTransformConfig { base: BasePatterns::PointSet { points: 4 }, noise: 0.0, ..GridTransformConfig::default() };
    let ds = grid_transform_dataset(&cfg, &[12, 0], 3, 2, stream::TRAIN_DATA).unwrap();
    assert_eq!(ds.input_dim(), 8);
    let same = grid_transform_dataset(&cfg, &[12, 0], 3, 2, stream::TRAIN_DATA).unwrap();
    assert_eq!(ds, same);
}

#[test]
fn external_rasters_are_resampled() {
    let cfg = GridTransformConfig::default();
    let base = grid_transform_dataset(&GridTransformConfig { rotations: vec![0.0], translations: vec![[0.0, 0.0]], ..cfg.clone() }, &[0], 30, 0, stream::TRAIN_DATA).unwrap();
    let ds = grid_transform_from_base(&cfg, &base, &[0, 24], 10, 1, stream::TRAIN_DATA).unwrap();
    assert_eq!(ds.domain(24).len(), 10);
    assert_eq!(ds.provenance()["base"], "external_raster");
}
