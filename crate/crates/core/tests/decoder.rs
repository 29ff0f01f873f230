mod common;

use houghvote::decoder::DEFAULT_TOP_K;
use houghvote::{decode_all, extract_peaks, AuxMaps, PresenceMap, PresenceStack};
use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::Rng;

fn random_aux(seed: u64, h: usize, w: usize, stride: u32) -> AuxMaps {
    let mut rng = common::rng(seed);
    // dyadic values keep the box arithmetic exact
    let wh = Array3::from_shape_simple_fn((h, w, 2), || rng.random_range(0..64) as f32 / 4.0);
    let off = Array3::from_shape_simple_fn((h, w, 2), || rng.random_range(0..8) as f32 / 8.0);
    AuxMaps::new(wh, off, stride).unwrap()
}

#[test]
fn decode_all_matches_brute_force_c5() {
    let mut rng = common::rng(11);
    // coarse values force plenty of ties
    let maps = Array3::from_shape_simple_fn((5, 20, 24), || rng.random_range(0..6) as f32 / 5.0);
    let stack = PresenceStack::new(maps.clone()).unwrap();
    let aux = random_aux(12, 20, 24, 4);
    for top_k in [1, 7, 100, 10_000] {
        let dets = decode_all(&stack, &aux, top_k, f32::NEG_INFINITY).unwrap();
        let want = common::brute_force_peaks(maps.view(), top_k);
        let got: Vec<_> = dets
            .iter()
            .map(|d| (d.class_id, d.center.0, d.center.1, d.score))
            .collect();
        assert_eq!(got, want, "top_k {top_k}");
    }
}

#[test]
fn random_maps_yield_exactly_top_k_sorted() {
    let mut rng = common::rng(13);
    let maps = Array3::from_shape_simple_fn((3, 64, 64), || rng.random::<f32>());
    let stack = PresenceStack::new(maps).unwrap();
    let aux = random_aux(14, 64, 64, 4);
    let dets = decode_all(&stack, &aux, DEFAULT_TOP_K, f32::NEG_INFINITY).unwrap();
    assert_eq!(dets.len(), 100);
    assert!(dets.windows(2).all(|p| p[0].score >= p[1].score));
}

#[test]
fn dominant_class_takes_every_slot() {
    let mut rng = common::rng(15);
    let mut maps = Array3::from_shape_simple_fn((4, 16, 16), || rng.random::<f32>());
    maps.index_axis_mut(ndarray::Axis(0), 2)
        .mapv_inplace(|v| v + 10.0);
    let stack = PresenceStack::new(maps).unwrap();
    let aux = random_aux(16, 16, 16, 4);
    let dets = decode_all(&stack, &aux, 10, f32::NEG_INFINITY).unwrap();
    assert_eq!(dets.len(), 10);
    assert!(dets.iter().all(|d| d.class_id == 2));
}

fn map_strategy() -> impl Strategy<Value = Array2<f32>> {
    (1usize..24, 1usize..24, any::<u64>(), 1u32..8).prop_map(|(h, w, seed, levels)| {
        let mut rng = common::rng(seed);
        Array2::from_shape_simple_fn((h, w), || {
            rng.random_range(0..=levels) as f32 / levels as f32
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn positive_scaling_keeps_peaks(map in map_strategy(), scale in prop::sample::select(vec![0.25f32, 0.5, 2.0, 8.0]), top_k in 1usize..50) {
        // power-of-two factors scale without rounding, so ties are preserved
        let a = extract_peaks(&PresenceMap::new(map.clone()).unwrap(), top_k);
        let b = extract_peaks(&PresenceMap::new(map.mapv(|v| v * scale)).unwrap(), top_k);
        let ca: Vec<_> = a.iter().map(|p| (p.cy, p.cx)).collect();
        let cb: Vec<_> = b.iter().map(|p| (p.cy, p.cx)).collect();
        prop_assert_eq!(ca, cb);
    }

    #[test]
    fn nms_is_idempotent(map in map_strategy(), top_k in 1usize..50) {
        let peaks = extract_peaks(&PresenceMap::new(map.clone()).unwrap(), top_k);
        // fill below every original value so cleared pixels rank last
        let floor = map.iter().fold(f32::INFINITY, |m, &v| m.min(v)) - 1.0;
        let mut masked = Array2::from_elem(map.dim(), floor);
        for p in &peaks {
            masked[[p.cy, p.cx]] = p.score;
        }
        let again = extract_peaks(&PresenceMap::new(masked).unwrap(), top_k);
        prop_assert_eq!(&again[..peaks.len()], &peaks[..]);
        // when fewer than top_k survived, the rest are cleared background pixels
        prop_assert!(again[peaks.len()..].iter().all(|p| p.score == floor));
    }

    #[test]
    fn count_never_exceeds_top_k(map in map_strategy(), top_k in 1usize..200) {
        let peaks = extract_peaks(&PresenceMap::new(map).unwrap(), top_k);
        prop_assert!(peaks.len() <= top_k);
        prop_assert!(peaks.windows(2).all(|p| p[0].score >= p[1].score));
    }

    #[test]
    fn boxes_invert_to_aux(seed in any::<u64>(), h in 1usize..16, w in 1usize..16, stride in prop::sample::select(vec![1u32, 2, 4, 8, 16])) {
        let mut rng = common::rng(seed);
        let maps = Array3::from_shape_simple_fn((2, h, w), || rng.random::<f32>());
        let wh = Array3::from_shape_simple_fn((h, w, 2), || rng.random_range(0..256) as f32 / 4.0);
        let off = Array3::from_shape_simple_fn((h, w, 2), || rng.random_range(0..16) as f32 / 16.0);
        let aux = AuxMaps::new(wh.clone(), off.clone(), stride).unwrap();
        let dets = decode_all(&PresenceStack::new(maps).unwrap(), &aux, 100, f32::NEG_INFINITY).unwrap();
        for d in &dets {
            let (cy, cx) = d.center;
            let ((oy, ox), (bh, bw)) = d.recover_aux(stride);
            prop_assert_eq!(oy, f64::from(off[[cy, cx, 0]]));
            prop_assert_eq!(ox, f64::from(off[[cy, cx, 1]]));
            prop_assert_eq!(bh, f64::from(wh[[cy, cx, 0]]));
            prop_assert_eq!(bw, f64::from(wh[[cy, cx, 1]]));
            prop_assert!(d.bbox[2] >= 0.0 && d.bbox[3] >= 0.0);
        }
    }
}
