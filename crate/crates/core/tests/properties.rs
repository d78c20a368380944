//! Invariants checked over generated inputs.

use pgla::diffusion::{
    decode_checkpoint, encode_checkpoint, map_m_to_tprime, Checkpoint, DensePredictor,
    NoiseSchedule, PredictorConfig,
};
use pgla::harness::{
    decode_idx_images, decode_idx_labels, encode_idx_images, encode_idx_labels, parse_report_csv,
    report_csv, FileRole, GradientFile,
};
use pgla::attack::{AttackReport, Metrics};
use pgla::numeric::RngState;
use pgla::perturb::{clip_gradient, compose, PrivacyAccountant};
use pgla::shape::{adjust, adjust_with, grid_side, restore, GradientRole, GradientVector, GridRule, LayerLayout};
use proptest::prelude::*;

fn layout_strategy() -> impl Strategy<Value = LayerLayout> {
    prop::collection::vec(prop::collection::vec(1usize..6, 1..4), 1..5).prop_map(|shapes| {
        LayerLayout::new(shapes.into_iter().enumerate().map(|(i, s)| (format!("l{i}"), s))).unwrap()
    })
}

fn gradient_strategy() -> impl Strategy<Value = GradientVector> {
    layout_strategy().prop_flat_map(|layout| {
        let n = layout.total_len();
        prop::collection::vec(-1e3f32..1e3, n).prop_map(move |v| {
            GradientVector::from_vec(v, layout.clone(), GradientRole::Clean).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn grid_is_minimal(len in 1usize..200_000) {
        let g = grid_side(len, GridRule::Strict);
        prop_assert!(g * g > len && (g - 1) * (g - 1) <= len);
        let g = grid_side(len, GridRule::Inclusive);
        prop_assert!(g * g >= len && (g - 1) * (g - 1) < len);
    }

    #[test]
    fn adjust_restore_is_bit_exact(g in gradient_strategy()) {
        for rule in [GridRule::Strict, GridRule::Inclusive] {
            let a = adjust_with(&g, rule);
            prop_assert!(a.grid().data()[g.len()..].iter().all(|&v| v == 0.0));
            let back = restore(&a, g.layout()).unwrap();
            prop_assert_eq!(back.data(), g.data());
        }
    }

    #[test]
    fn normalized_grid_restores_within_rounding(g in gradient_strategy()) {
        let n = adjust(&g).normalized();
        let back = restore(&n, g.layout()).unwrap();
        for (a, b) in back.data().iter().zip(g.data()) {
            prop_assert!((a - b).abs() <= 1e-3 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn clipped_norm_never_exceeds_bound(g in gradient_strategy(), clip in 1e-3f64..10.0) {
        let c = clip_gradient(&g, clip).unwrap();
        prop_assert!(c.norm() <= clip);
        if g.norm() <= clip {
            prop_assert_eq!(c.data(), g.data());
        }
    }

    #[test]
    fn compose_ignores_order(mut entries in prop::collection::vec((0.0f64..10.0, 0.0f64..1e-3), 0..20)) {
        let mut a = PrivacyAccountant::new();
        for &(e, d) in &entries {
            a.record(e, d);
        }
        entries.reverse();
        let mut b = PrivacyAccountant::new();
        for &(e, d) in &entries {
            b.record(e, d);
        }
        prop_assert_eq!(compose(&a), compose(&b));
    }

    #[test]
    fn start_step_is_monotone_and_bracketed(a in 0.0f64..20.0, b in 0.0f64..20.0) {
        let s = NoiseSchedule::standard();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (tl, th) = (map_m_to_tprime(lo, &s).unwrap(), map_m_to_tprime(hi, &s).unwrap());
        prop_assert!(tl.t_prime <= th.t_prime);
        let target = 1.0 / (1.0 + hi * hi);
        let t = th.t_prime;
        if t > 0 && t < s.steps() {
            prop_assert!(s.gamma(t - 1) > target && target >= s.gamma(t));
        }
    }

    #[test]
    fn derived_streams_are_reproducible(seed: u64, tags in prop::collection::vec(any::<u64>(), 1..4)) {
        let root = RngState::new(seed);
        let (mut a, mut b) = (root.derive(&tags), root.derive(&tags));
        for _ in 0..8 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut other = tags.clone();
        other[0] = other[0].wrapping_add(1);
        prop_assert_ne!(root.derive(&other).next_u64(), root.derive(&tags).next_u64());
    }

    #[test]
    fn gradient_file_roundtrip(g in gradient_strategy(), seed: u64, d in any::<[u8; 32]>()) {
        let f = GradientFile::from_gradient(&g, seed, d);
        let back = GradientFile::decode(&f.encode().unwrap()).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(back.role, FileRole::Gradient(GradientRole::Clean));
        let bytes: Vec<u32> = back.to_gradient().unwrap().data().iter().map(|v| v.to_bits()).collect();
        let orig: Vec<u32> = g.data().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(bytes, orig);
    }

    #[test]
    fn truncated_gradient_file_is_rejected(g in gradient_strategy(), cut in 1usize..16) {
        let bytes = GradientFile::from_gradient(&g, 0, [0; 32]).encode().unwrap();
        let n = bytes.len().saturating_sub(cut);
        prop_assert!(GradientFile::decode(&bytes[..n]).is_err());
    }

    #[test]
    fn idx_roundtrip(rows in 1usize..6, cols in 1usize..6, raw in prop::collection::vec(any::<u8>(), 1..100)) {
        let per = rows * cols;
        let images: Vec<Vec<f32>> = raw
            .chunks(per)
            .filter(|c| c.len() == per)
            .map(|c| c.iter().map(|&b| f32::from(b) / 255.0).collect())
            .collect();
        let (r, c, back) = decode_idx_images(&encode_idx_images(rows, cols, &images)).unwrap();
        prop_assert_eq!((r, c), (rows, cols));
        prop_assert_eq!(back, images);
        prop_assert_eq!(decode_idx_labels(&encode_idx_labels(&raw)).unwrap(), raw);
    }

    #[test]
    fn report_csv_roundtrip(vals in prop::collection::vec(prop::option::of(-1e3f64..1e3), 8), trial in 0u64..100) {
        let m = |o: usize| Metrics { cos_g: vals[o], psnr_g: vals[o + 1], psnr_i: vals[o + 2], lra: vals[o + 3] };
        let r = AttackReport::new(trial, 7, "abc").with_shared(m(0)).with_recovered(m(4));
        let bytes = report_csv(std::slice::from_ref(&r)).unwrap();
        prop_assert!(!bytes.contains(&b'\r'));
        prop_assert_eq!(parse_report_csv(&bytes).unwrap(), vec![r]);
    }
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let cfg = PredictorConfig { hidden: 16, blocks: 2, time_dim: 8 };
    for cond_m in [None, Some(1.25)] {
        let p = DensePredictor::new(5, cond_m, cfg, NoiseSchedule::standard(), &mut RngState::new(3)).unwrap();
        let c = Checkpoint { predictor: p, seed: 9, digest: [7; 32] };
        let bytes = encode_checkpoint(&c).unwrap();
        assert_eq!(decode_checkpoint(&bytes).unwrap(), c);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    }
}
