//! Reference implementations used as oracles by the integration suites.
//! Each one is written independently of the library code path it checks.

#![allow(dead_code)]

use houghvote::{EvidenceStack, EvidenceTensor, PresenceMap, VoteField};
use ndarray::{Array2, Array3, Array4, ArrayView2, ArrayView3, ArrayView4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_evidence(rng: &mut ChaCha8Rng, h: usize, w: usize, r: usize) -> EvidenceTensor {
    EvidenceTensor::new(Array3::from_shape_simple_fn((h, w, r), || {
        rng.random_range(-1.0f32..1.0)
    }))
    .unwrap()
}

pub fn random_nonneg(rng: &mut ChaCha8Rng, h: usize, w: usize, r: usize) -> EvidenceTensor {
    EvidenceTensor::new(Array3::from_shape_simple_fn((h, w, r), || {
        rng.random::<f32>()
    }))
    .unwrap()
}

pub fn random_stack(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize, r: usize) -> EvidenceStack {
    EvidenceStack::new(Array4::from_shape_simple_fn((c, h, w, r), || {
        rng.random_range(-1.0f32..1.0)
    }))
    .unwrap()
}

/// The voting loop written out literally: for every `(i, j, r)` and every
/// pixel `k` of region `r`, add `E(i, j, r) / K_r` at `(i, j) + offset_k`.
/// Iterates region-major to use a different summation order from the
/// library's scatter.
pub fn brute_force_vote(e: ArrayView3<'_, f32>, field: &VoteField) -> Array2<f64> {
    let (h, w, rc) = e.dim();
    assert_eq!(rc, field.region_count());
    let mut out = Array2::<f64>::zeros((h, w));
    for r in 0..rc {
        let region = field.region(r);
        let k = region.offsets.len() as f64;
        for i in 0..h {
            for j in 0..w {
                for off in &region.offsets {
                    let y = i as i64 + i64::from(off.dy);
                    let x = j as i64 + i64::from(off.dx);
                    if (0..h as i64).contains(&y) && (0..w as i64).contains(&x) {
                        out[[y as usize, x as usize]] += f64::from(e[[i, j, r]]) / k;
                    }
                }
            }
        }
    }
    out
}

/// `max |got - want| / max |want|` with `want` in `f64`.
pub fn rel_err(got: ArrayView2<'_, f32>, want: ArrayView2<'_, f64>) -> f64 {
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = got
        .iter()
        .zip(want.iter())
        .fold(0.0f64, |m, (&g, &w)| m.max((f64::from(g) - w).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn rel_err_maps(a: &PresenceMap, b: &PresenceMap) -> f64 {
    houghvote::voting::max_relative_error(a.view(), b.view())
}

/// Octant `0..8` of `(dy, dx) != (0, 0)`, where octant `o` covers angles
/// `[45 o, 45 (o + 1))` of `atan2(dy, dx)`. Integer arithmetic only: rotate
/// into the first quadrant, then split it on the diagonal.
pub fn octant(dy: i32, dx: i32) -> usize {
    assert!((dy, dx) != (0, 0));
    let (mut y, mut x) = (dy, dx);
    let mut q = 0;
    while !(x > 0 && y >= 0) {
        // rotate by -90 degrees
        let (ny, nx) = (-x, y);
        y = ny;
        x = nx;
        q += 1;
    }
    2 * q + usize::from(y >= x)
}

/// Expected `(ring, sector)` of an offset for bins that are multiples of 45
/// degrees, or `None` outside the field. Rings are numbered from 1.
pub fn expected_cell(dy: i32, dx: i32, bin: u32, diams: &[u32]) -> Option<(usize, usize)> {
    assert!(bin.is_multiple_of(45) && 360u32.is_multiple_of(bin));
    let d2 = i64::from(dy).pow(2) + i64::from(dx).pow(2);
    let ring = diams.iter().position(|&d| d2 <= i64::from(d / 2).pow(2))? + 1;
    if ring == 1 {
        return Some((1, 0));
    }
    Some((ring, octant(dy, dx) * 45 / bin as usize))
}

/// Naive 3x3 non-maximum suppression over all classes followed by a full
/// sort of every surviving candidate.
pub fn brute_force_peaks(
    maps: ArrayView3<'_, f32>,
    top_k: usize,
) -> Vec<(usize, usize, usize, f32)> {
    let (c, h, w) = maps.dim();
    let mut cands = Vec::new();
    for k in 0..c {
        for y in 0..h {
            for x in 0..w {
                let v = maps[[k, y, x]];
                let mut keep = true;
                for ny in y as i64 - 1..=y as i64 + 1 {
                    for nx in x as i64 - 1..=x as i64 + 1 {
                        if (0..h as i64).contains(&ny)
                            && (0..w as i64).contains(&nx)
                            && maps[[k, ny as usize, nx as usize]] > v
                        {
                            keep = false;
                        }
                    }
                }
                if keep {
                    cands.push((k, y, x, v));
                }
            }
        }
    }
    cands.sort_by(|a, b| {
        b.3.partial_cmp(&a.3)
            .unwrap()
            .then((a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)))
    });
    cands.truncate(top_k);
    cands
}

/// Scalable head: brute-force vote per channel, ReLU, direct zero-padded
/// 3x3 correlation plus bias.
pub fn scalable_oracle(
    shared: ArrayView4<'_, f32>,
    field: &VoteField,
    conv: ArrayView4<'_, f32>,
    bias: &[f32],
) -> Array3<f64> {
    let (n, h, w, _) = shared.dim();
    let c = conv.dim().0;
    let votes: Vec<Array2<f64>> = (0..n)
        .map(|k| {
            brute_force_vote(shared.index_axis(ndarray::Axis(0), k), field)
                .mapv(|v| f64::from((v as f32).max(0.0)))
        })
        .collect();
    let mut out = Array3::<f64>::zeros((c, h, w));
    for cls in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut s = f64::from(bias[cls]);
                for (k, vk) in votes.iter().enumerate() {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = y as i64 + ky as i64 - 1;
                            let ix = x as i64 + kx as i64 - 1;
                            if (0..h as i64).contains(&iy) && (0..w as i64).contains(&ix) {
                                s += f64::from(conv[[cls, k, ky, kx]])
                                    * vk[[iy as usize, ix as usize]];
                            }
                        }
                    }
                }
                out[[cls, y, x]] = s;
            }
        }
    }
    out
}
