#![allow(clippy::needless_range_loop)]

mod common;

use avexpr_core::alignment::{align_audio, build_frame_pairs, AlignmentConfig, AudioTrack};
use avexpr_core::datamodel::make_folds;
use avexpr_core::ndmath::Rng;
use avexpr_core::synth::{generate, SynthConfig};
use proptest::prelude::*;

fn track(rng: &mut Rng, n: usize, hop: f64) -> AudioTrack {
    let mut t = AudioTrack::new(2, hop);
    let start = rng.uniform();
    for j in 0..n {
        t.push(start + j as f64 * hop, &[rng.normal() as f32, j as f32]).unwrap();
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Nearest picks the entry with the smallest distance, the earlier one on ties.
    #[test]
    fn nearest_matches_scan(seed in any::<u64>(), n in 1usize..40, at in -1.0f64..3.0) {
        let mut rng = Rng::new(seed);
        let hop = 0.02 + 0.05 * rng.uniform();
        let t = track(&mut rng, n, hop);
        let got = align_audio(&t, at, &AlignmentConfig::nearest()).unwrap().unwrap();
        let mut best = 0;
        for i in 1..n {
            if (t.timestamps[i] - at).abs() < (t.timestamps[best] - at).abs() {
                best = i;
            }
        }
        prop_assert_eq!(got[1], best as f64);
    }

    /// Window mean averages exactly the entries within half a window of the frame.
    #[test]
    fn window_mean_matches_scan(seed in any::<u64>(), n in 1usize..60, at in 0.0f64..2.0, w in 0.05f64..1.0) {
        let mut rng = Rng::new(seed);
        let t = track(&mut rng, n, 0.02);
        let got = align_audio(&t, at, &AlignmentConfig::window_mean(w)).unwrap();
        let inside: Vec<usize> = (0..n).filter(|&i| (t.timestamps[i] - at).abs() <= w / 2.0 + 1e-9).collect();
        if inside.is_empty() {
            prop_assert!(got.is_none());
        } else {
            let got = got.unwrap();
            for d in 0..2 {
                let mean = inside.iter().map(|&i| t.feature(i)[d] as f64).sum::<f64>() / inside.len() as f64;
                prop_assert!((got[d] - mean).abs() < 1e-12);
            }
        }
    }

    /// Folds partition the ids, differ in size by at most one, and ignore input order.
    #[test]
    fn folds_partition(seed in any::<u64>(), n in 2usize..40, k in 2usize..8) {
        prop_assume!(k <= n);
        let ids: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
        let split = make_folds(&ids, k, seed).unwrap();
        let sizes = split.sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut rev = ids.clone();
        rev.reverse();
        let again = make_folds(&rev, k, seed).unwrap();
        for id in &ids {
            prop_assert_eq!(split.fold_of(id), again.fold_of(id));
        }
    }
}

#[test]
fn too_many_folds_rejected() {
    let ids: Vec<String> = (0..3).map(|i| i.to_string()).collect();
    assert!(make_folds(&ids, 4, 0).is_err());
    assert!(make_folds(&ids, 0, 0).is_err());
}

#[test]
fn synthetic_pairs_cover_every_frame() {
    let cfg = SynthConfig { videos: 2, frames_per_video: 90, ..SynthConfig::default() };
    for v in generate(&cfg, 3).unwrap() {
        for align in [AlignmentConfig::nearest(), AlignmentConfig::default()] {
            let pairs = build_frame_pairs(&v.sequence, &v.track, &align).unwrap();
            assert_eq!(pairs.len(), 90);
            assert!(pairs.iter().all(|p| p.audio.is_some() && p.visual.len() == cfg.visual_dim));
        }
    }
}
