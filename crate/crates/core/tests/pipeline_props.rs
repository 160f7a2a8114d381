mod common;

use common::*;
use tag_core::config::{ConfigDocument, Normalization};
use tag_core::{analyze_video, ground, PipelineConfig};

fn change_count(features: &tag_core::FeatureSequence, w: usize, r: usize) -> usize {
    let cfg = ConfigDocument::default().w(w).r(r).build().unwrap();
    analyze_video(features, &cfg).unwrap().change_points.interior_count()
}

#[test]
fn wider_coherence_window_yields_fewer_change_points() {
    let (mut wide, mut narrow, mut worse) = (0, 0, 0);
    for seed in 0..100 {
        let s = piecewise_signal(seed, 200, 8, 3, 40, 1.5);
        let (a, b) = (change_count(&s.features, 1, 7), change_count(&s.features, 1, 1));
        wide += a;
        narrow += b;
        worse += usize::from(a > b);
    }
    assert!(wide < narrow, "r=7: {wide} change points, r=1: {narrow}");
    assert!(worse <= 5, "{worse} signals fragmented more with r=7");
}

#[test]
fn pooling_alone_reduces_fragmentation() {
    let (mut pooled, mut raw) = (0, 0);
    for seed in 0..50 {
        let s = piecewise_signal(500 + seed, 200, 8, 3, 40, 1.5);
        pooled += change_count(&s.features, 21, 1);
        raw += change_count(&s.features, 1, 1);
    }
    assert!(pooled < raw, "w=21: {pooled}, w=1: {raw}");
}

#[test]
fn grounding_is_deterministic() {
    let v = planted_video(3, &PlantedOptions::default());
    let cfg = PipelineConfig::default();
    let a = ground(&v.features, &v.query, &cfg).unwrap();
    let b = ground(&v.features, &v.query, &cfg).unwrap();
    assert_eq!(a.frames, b.frames);
    assert_eq!(a.score.to_bits(), b.score.to_bits());
    assert_eq!(a.lambda.map(f64::to_bits), b.lambda.map(f64::to_bits));
}

fn clean_suite() -> PlantedOptions {
    PlantedOptions {
        n_frames: 600,
        segments: 6,
        min_segment: 75,
        ..Default::default()
    }
}

#[test]
fn gaussian_kernel_and_fixed_lambda_recover_clean_plants() {
    let configs = [
        ConfigDocument::default().gaussian(5.0).build().unwrap(),
        ConfigDocument::default().lambda(0.0).build().unwrap(),
    ];
    for cfg in &configs {
        let hits = (0..20)
            .filter(|&seed| {
                let v = planted_video(seed, &clean_suite());
                iou_frames(ground(&v.features, &v.query, cfg).unwrap().frames, v.target) >= 0.8
            })
            .count();
        assert!(hits >= 17, "{cfg:?}: {hits}/20");
    }
}

// Yeo-Johnson keeps positive similarities positive, so the whole-video
// proposal (scored as its plain mean, the outside being empty) can outrank
// every proper interval. Among proper intervals the plant still comes first.
#[test]
fn yeo_johnson_ranks_the_plant_first_among_proper_intervals() {
    let cfg = ConfigDocument::default()
        .normalization(Normalization::YeoJohnson)
        .build()
        .unwrap();
    let hits = (0..20)
        .filter(|&seed| {
            let v = planted_video(seed, &clean_suite());
            let analysis = analyze_video(&v.features, &cfg).unwrap();
            let r = analysis.ground(&v.features, &[v.query.clone()], &cfg, true).unwrap();
            let best = r
                .ranked
                .unwrap()
                .into_iter()
                .find(|p| p.len() < v.features.n_frames())
                .unwrap();
            iou_frames(best.proposal(), v.target) >= 0.8
        })
        .count();
    assert!(hits >= 17, "{hits}/20");
}

#[test]
fn frame_rate_only_rescales_seconds() {
    let v = planted_video(5, &PlantedOptions::default());
    let cfg = PipelineConfig::default();
    let at_one = ground(&v.features, &v.query, &cfg).unwrap();
    let faster = tag_core::FeatureSequence::new(
        v.features.as_slice().to_vec(),
        v.features.n_frames(),
        v.features.dim(),
        4.0,
    )
    .unwrap();
    let at_four = ground(&faster, &v.query, &cfg).unwrap();
    assert_eq!(at_one.frames, at_four.frames);
    assert_eq!(at_four.seconds.start * 4.0, at_one.seconds.start);
    assert_eq!(at_four.seconds.end * 4.0, at_one.seconds.end);
}
