mod common;

use std::collections::{BTreeMap, BTreeSet};

use houghvote::{
    build_temporal_field, build_vote_field, materialize_kernels, Offset, VoteField, VoteFieldSpec,
};
use proptest::prelude::*;

fn membership(field: &VoteField) -> BTreeMap<(i32, i32), usize> {
    let mut seen = BTreeMap::new();
    for (r, region) in field.regions().iter().enumerate() {
        for off in &region.offsets {
            assert!(
                seen.insert((off.dy, off.dx), r).is_none(),
                "offset {off:?} in two regions"
            );
        }
    }
    seen
}

fn disk(radius: i32) -> BTreeSet<(i32, i32)> {
    let mut out = BTreeSet::new();
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            if dy * dy + dx * dx <= radius * radius {
                out.insert((dy, dx));
            }
        }
    }
    out
}

#[test]
fn paper_configurations_match_integer_oracle() {
    for diams in [vec![2, 8, 16, 32, 64], vec![2, 8, 16, 32], vec![2, 8, 16]] {
        let field = build_vote_field(&VoteFieldSpec::spatial(90, &diams)).unwrap();
        let m = membership(&field);
        let radius = (*diams.last().unwrap() / 2) as i32;
        assert_eq!(m.keys().copied().collect::<BTreeSet<_>>(), disk(radius));
        for (&(dy, dx), &r) in &m {
            let region = field.region(r);
            let want = common::expected_cell(dy, dx, 90, &diams).unwrap();
            assert_eq!((region.ring, region.sector), want, "offset ({dy},{dx})");
        }
    }
}

#[test]
fn temporal_quadrants_match_integer_oracle() {
    let field = build_temporal_field();
    assert_eq!(field.region_count(), 4);
    assert_eq!(field.side(), 9);
    let m = membership(&field);
    let mut want = disk(4);
    want.remove(&(0, 0));
    assert_eq!(m.keys().copied().collect::<BTreeSet<_>>(), want);
    for (&(dy, dx), &r) in &m {
        assert_eq!(r, common::octant(dy, dx) / 2);
    }
    // first region is the (+x, +y) quadrant
    assert!(field.region(0).offsets.contains(&Offset::new(1, 1)));
    let counts = field.counts();
    assert!(counts.iter().all(|&k| k == counts[0]));
    // quadrant size by direct enumeration: dx > 0, dy >= 0 inside the disk
    let q = disk(4)
        .iter()
        .filter(|&&(dy, dx)| dx > 0 && dy >= 0)
        .count();
    assert_eq!(counts[0], q);
}

#[test]
fn threshold_of_stacked_kernels_reproduces_partition() {
    let field = build_vote_field(&VoteFieldSpec::spatial(90, &[2, 8, 16])).unwrap();
    let bank = materialize_kernels(&field);
    let c = field.radius() as i32;
    let side = field.side();
    for y in 0..side {
        for x in 0..side {
            let owners: Vec<usize> = (0..bank.region_count())
                .filter(|&r| bank.kernel(r)[[y, x]] > 0.0)
                .collect();
            let off = Offset::new(y as i32 - c, x as i32 - c);
            let expected: Vec<usize> = field
                .regions()
                .iter()
                .enumerate()
                .filter(|(_, reg)| reg.offsets.contains(&off))
                .map(|(r, _)| r)
                .collect();
            assert_eq!(owners, expected);
        }
    }
    for k in bank.kernels() {
        assert!((k.sum() - 1.0).abs() <= 1e-7);
    }
}

#[test]
fn build_is_deterministic() {
    let spec = VoteFieldSpec::spatial(60, &[2, 8, 16]);
    let a = build_vote_field(&spec).unwrap();
    let b = build_vote_field(&spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}

fn spec_strategy() -> impl Strategy<Value = VoteFieldSpec> {
    let bins = prop::sample::select(vec![30u32, 45, 60, 90, 120, 180, 360]);
    let steps = prop::collection::vec(1u32..5, 0..4);
    (bins, 2u32..5, steps).prop_map(|(bin, first, steps)| {
        // outer rings wide enough that every sector holds a pixel
        let mut diams = vec![2 * first];
        for s in steps {
            let last = *diams.last().unwrap();
            diams.push(last + 2 * s + 6);
        }
        VoteFieldSpec::spatial(bin, &diams)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_and_count_identity(spec in spec_strategy()) {
        let field = build_vote_field(&spec).unwrap();
        let n = spec.ring_diams.len();
        prop_assert_eq!(field.region_count(), 1 + (360 / spec.angle_bin_deg as usize) * (n - 1));
        prop_assert_eq!(field.side(), *spec.ring_diams.last().unwrap() as usize + 1);
        prop_assert!(field.side() % 2 == 1);
        prop_assert!(field.counts().iter().all(|&k| k >= 1));
        let m = membership(&field);
        let radius = (*spec.ring_diams.last().unwrap() / 2) as i32;
        prop_assert_eq!(m.keys().copied().collect::<BTreeSet<_>>(), disk(radius));
        // ring membership by integer distance
        for (&(dy, dx), &r) in &m {
            let d2 = (dy * dy + dx * dx) as u32;
            let ring = spec.ring_diams.iter().position(|&d| d2 <= (d / 2) * (d / 2)).unwrap() + 1;
            prop_assert_eq!(field.region(r).ring, ring);
        }
    }

    #[test]
    fn octant_bins_match_integer_oracle(
        bin in prop::sample::select(vec![45u32, 90, 180, 360]),
        steps in prop::collection::vec(1u32..6, 1..4),
    ) {
        let mut diams = vec![2u32];
        for s in steps {
            let last = *diams.last().unwrap();
            diams.push(last + 2 * s + 4);
        }
        let field = build_vote_field(&VoteFieldSpec::spatial(bin, &diams)).unwrap();
        for (&(dy, dx), &r) in &membership(&field) {
            let reg = field.region(r);
            prop_assert_eq!(Some((reg.ring, reg.sector)), common::expected_cell(dy, dx, bin, &diams));
        }
    }

    #[test]
    fn point_symmetry_when_bin_divides_180(spec in spec_strategy()) {
        prop_assume!(180 % spec.angle_bin_deg == 0);
        let field = build_vote_field(&spec).unwrap();
        let m = membership(&field);
        let half = (180 / spec.angle_bin_deg) as usize;
        let sectors = (360 / spec.angle_bin_deg) as usize;
        for (&(dy, dx), &r) in &m {
            let mirror = m[&(-dy, -dx)];
            let (a, b) = (field.region(r), field.region(mirror));
            prop_assert_eq!(a.ring, b.ring);
            if a.ring > 1 {
                prop_assert_eq!(b.sector, (a.sector + half) % sectors);
                prop_assert_eq!(a.count(), b.count());
            }
        }
    }
}
