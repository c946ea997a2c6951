use proptest::prelude::*;
use synthfetal_core::labels::remap_drawem_to_feta;
use synthfetal_core::metrics::{dice, hd100, hd95, midranks, wilcoxon_rank_sum};
use synthfetal_core::phantom::fetal_phantom;
use synthfetal_core::soup::{interpolate, Checkpoint, Tensor};
use synthfetal_core::synth::{generate_sample, GenerationConfig, GeneratorMode};
use synthfetal_core::volume::{Geometry, LabelMap, LabelScheme};

fn feta(dims: [usize; 3], data: Vec<u16>) -> LabelMap {
    LabelMap::new(Geometry::from_spacing(dims, [1.0; 3]).unwrap(), data, LabelScheme::Feta7).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn overlap_metrics_are_symmetric(a in prop::collection::vec(0u16..4, 216), b in prop::collection::vec(0u16..4, 216)) {
        let (a, b) = (feta([6, 6, 6], a), feta([6, 6, 6], b));
        for label in 1..4 {
            let d = dice(&a, &b, label).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, dice(&b, &a, label).unwrap());
            prop_assert_eq!(hd95(&a, &b, label).unwrap(), hd95(&b, &a, label).unwrap());
            if let (Some(p), Some(m)) = (hd95(&a, &b, label).unwrap(), hd100(&a, &b, label).unwrap()) {
                prop_assert!(p <= m);
            }
        }
    }

    #[test]
    fn identical_maps_score_perfectly(a in prop::collection::vec(0u16..8, 125)) {
        let a = feta([5, 5, 5], a);
        for label in 1..8 {
            prop_assert_eq!(dice(&a, &a, label).unwrap(), 1.0);
            if let Some(h) = hd95(&a, &a, label).unwrap() {
                prop_assert_eq!(h, 0.0);
            }
        }
    }

    #[test]
    fn midranks_sum_to_triangular(v in prop::collection::vec(-3i32..3, 1..40)) {
        let x: Vec<f64> = v.iter().map(|&i| i as f64).collect();
        let n = x.len() as f64;
        prop_assert!((midranks(&x).iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn rank_sum_p_is_a_probability_and_symmetric(
        x in prop::collection::vec(-10.0f64..10.0, 1..15),
        y in prop::collection::vec(-10.0f64..10.0, 1..15),
    ) {
        let p = wilcoxon_rank_sum(&x, &y).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0);
        prop_assert!((p - wilcoxon_rank_sum(&y, &x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn remap_only_produces_feta_labels(v in prop::collection::vec(0u16..10, 1..64)) {
        let n = v.len();
        let lm = LabelMap::new(Geometry::from_spacing([n, 1, 1], [1.0; 3]).unwrap(), v, LabelScheme::DrawEm9).unwrap();
        let out = remap_drawem_to_feta(&lm).unwrap();
        prop_assert!(out.data().iter().all(|&l| l <= 7));
    }

    #[test]
    fn interpolation_stays_between_endpoints(
        pairs in prop::collection::vec((-1e3f32..1e3, -1e3f32..1e3), 1..32),
        alpha in 0.0f64..=1.0,
    ) {
        let (a, b): (Vec<f32>, Vec<f32>) = pairs.into_iter().unzip();
        let n = a.len() as u64;
        let ck = |d| Checkpoint::new(vec![Tensor::new("w", vec![n], d).unwrap()], vec![]).unwrap();
        let mid = interpolate(&ck(a.clone()), &ck(b.clone()), alpha).unwrap();
        for ((m, x), y) in mid.tensors()[0].data.iter().zip(&a).zip(&b) {
            prop_assert!(*m >= x.min(*y) && *m <= x.max(*y));
        }
    }
}

#[test]
fn generated_labels_stay_within_the_input_label_set() {
    let (lm, img) = fetal_phantom([40, 40, 40], [3.0; 3], 4.0, 7).unwrap();
    let input = lm.unique_values();
    for mode in [GeneratorMode::SynthSeg, GeneratorMode::FetalSynthSeg, GeneratorMode::RandFabian] {
        let cfg = GenerationConfig {
            mode,
            master_seed: 11,
            ..Default::default()
        };
        for i in 0..2 {
            let pair = generate_sample(&lm, &img, &cfg, i).unwrap();
            assert!(pair.labels.unique_values().iter().all(|l| input.contains(l)), "{mode:?}");
            assert!(pair.image.data().iter().all(|v| (0.0..=1.0).contains(v)), "{mode:?}");
            assert!(pair.image.geometry().matches(pair.labels.geometry()));
        }
    }
}
