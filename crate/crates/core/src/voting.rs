//! Vote aggregation: evidence tensors to object-presence maps.
//!
//! Every voter `(i, j)` adds `E(i, j, r) / K_r` to each pixel of region `r`
//! of the vote field placed at `(i, j)`. Votes landing outside the map are
//! dropped. Four interchangeable backends compute the same map:
//!
//! - [`Backend::Scatter`] walks voters and pushes votes, exactly as the
//!   definition reads. It is the reference path.
//! - [`Backend::Gather`] pulls votes into each output row from
//!   region-prescaled evidence planes.
//! - [`Backend::Kernel`] is a stride-1 transposed convolution of each
//!   channel with its [`KernelBank`] kernel, cropped to `H x W`.
//! - [`Backend::Sparse`] scatters only entries whose magnitude reaches a
//!   threshold.
//!
//! Accumulation is done in `f64`; maps are emitted as `f32`.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Array3, Array4, ArrayView, ArrayView3, Dimension};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::maps::{EvidenceStack, EvidenceTensor, PresenceMap, PresenceStack};
use crate::votefield::{materialize_kernels, KernelBank, VoteField};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Backend {
    Scatter,
    Gather,
    Kernel,
    /// Scatter restricted to entries with `|e| >= threshold`.
    Sparse {
        threshold: f32,
    },
}

impl Backend {
    pub const ALL: [Backend; 4] = [
        Backend::Scatter,
        Backend::Gather,
        Backend::Kernel,
        Backend::Sparse { threshold: 0.0 },
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Backend::Scatter => "scatter",
            Backend::Gather => "gather",
            Backend::Kernel => "kernel",
            Backend::Sparse { .. } => "sparse",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scatter" => Ok(Backend::Scatter),
            "gather" => Ok(Backend::Gather),
            "kernel" | "kernelbank" => Ok(Backend::Kernel),
            "sparse" => Ok(Backend::Sparse { threshold: 0.0 }),
            other => Err(Error::UnknownBackend(other.to_string())),
        }
    }
}

/// One tap of a row-oriented voting plan: source plane `plane`, shifted by
/// `(dy, dx)`, scaled by `weight`.
#[derive(Clone, Copy, Debug)]
struct Tap {
    dy: isize,
    dx: isize,
    plane: usize,
    weight: f64,
}

enum Plan {
    Scatter,
    Sparse(f32),
    /// Taps over evidence planes already divided by `K_r`.
    Gather(Vec<Tap>),
    /// Taps over raw evidence planes, weighted by kernel values.
    Kernel(Vec<Tap>),
}

/// A vote field bound to a backend, with whatever precomputation the
/// backend needs. Cheap to share across threads.
pub struct Voter<'f> {
    field: &'f VoteField,
    inv_counts: Vec<f64>,
    plan: Plan,
}

impl<'f> Voter<'f> {
    pub fn new(field: &'f VoteField, backend: Backend) -> Self {
        let plan = match backend {
            Backend::Scatter => Plan::Scatter,
            Backend::Sparse { threshold } => Plan::Sparse(threshold),
            Backend::Gather => Plan::Gather(gather_taps(field)),
            Backend::Kernel => Plan::Kernel(kernel_taps(&materialize_kernels(field))),
        };
        Self::with_plan(field, plan)
    }

    fn with_plan(field: &'f VoteField, plan: Plan) -> Self {
        let inv_counts = field.counts().iter().map(|&k| 1.0 / k as f64).collect();
        Self {
            field,
            inv_counts,
            plan,
        }
    }

    pub fn field(&self) -> &VoteField {
        self.field
    }

    pub fn vote(&self, evidence: &EvidenceTensor) -> Result<PresenceMap> {
        self.vote_view(evidence.view())
    }

    pub fn vote_view(&self, evidence: ArrayView3<'_, f32>) -> Result<PresenceMap> {
        let (h, w, _) = evidence.dim();
        let mut acc = vec![0.0f64; h * w];
        self.accumulate(evidence, &mut acc)?;
        Ok(emit(acc, h, w))
    }

    /// Adds this voter's votes for `evidence` into `acc` (`H * W`, row-major).
    pub(crate) fn accumulate(&self, evidence: ArrayView3<'_, f32>, acc: &mut [f64]) -> Result<()> {
        let (h, w, r) = evidence.dim();
        if r != self.field.region_count() {
            return Err(Error::ShapeMismatch(format!(
                "evidence has {r} region channels, field has {}",
                self.field.region_count()
            )));
        }
        debug_assert_eq!(acc.len(), h * w);
        if h == 0 || w == 0 {
            return Ok(());
        }
        let data = contiguous(&evidence);
        match &self.plan {
            Plan::Scatter => scatter(self.field, &data, h, w, acc),
            Plan::Sparse(threshold) => {
                let entries = sparse_entries(&data, r, *threshold);
                scatter_entries(self.field, &entries, h, w, acc);
            }
            Plan::Gather(taps) => {
                let planes = planes(&data, h, w, r, Some(&self.inv_counts));
                gather_rows(taps, &planes, h, w, acc);
            }
            Plan::Kernel(taps) => {
                let planes = planes(&data, h, w, r, None);
                gather_rows(taps, &planes, h, w, acc);
            }
        }
        Ok(())
    }
}

fn contiguous<'a>(view: &'a ArrayView3<'_, f32>) -> Cow<'a, [f32]> {
    match view.as_slice() {
        Some(s) => Cow::Borrowed(s),
        None => Cow::Owned(view.iter().copied().collect()),
    }
}

fn emit(acc: Vec<f64>, h: usize, w: usize) -> PresenceMap {
    let data: Vec<f32> = acc.into_iter().map(|v| v as f32).collect();
    PresenceMap::from_raw(Array2::from_shape_vec((h, w), data).expect("accumulator sized H*W"))
}

/// Direct transcription of the voting loop.
fn scatter(field: &VoteField, e: &[f32], h: usize, w: usize, acc: &mut [f64]) {
    let regions = field.regions();
    let rc = regions.len();
    for i in 0..h {
        for j in 0..w {
            let base = (i * w + j) * rc;
            for (r, region) in regions.iter().enumerate() {
                let vote = f64::from(e[base + r]) / region.count() as f64;
                for off in &region.offsets {
                    let y = i as isize + off.dy as isize;
                    let x = j as isize + off.dx as isize;
                    if y >= 0 && y < h as isize && x >= 0 && x < w as isize {
                        acc[y as usize * w + x as usize] += vote;
                    }
                }
            }
        }
    }
}

struct SparseEntry {
    pixel: usize,
    region: usize,
    value: f32,
}

fn sparse_entries(e: &[f32], rc: usize, threshold: f32) -> Vec<SparseEntry> {
    e.iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0 && v.abs() >= threshold)
        .map(|(idx, &value)| SparseEntry {
            pixel: idx / rc,
            region: idx % rc,
            value,
        })
        .collect()
}

fn scatter_entries(
    field: &VoteField,
    entries: &[SparseEntry],
    h: usize,
    w: usize,
    acc: &mut [f64],
) {
    let regions = field.regions();
    for entry in entries {
        let (i, j) = (entry.pixel / w, entry.pixel % w);
        let region = &regions[entry.region];
        let vote = f64::from(entry.value) / region.count() as f64;
        for off in &region.offsets {
            let y = i as isize + off.dy as isize;
            let x = j as isize + off.dx as isize;
            if y >= 0 && y < h as isize && x >= 0 && x < w as isize {
                acc[y as usize * w + x as usize] += vote;
            }
        }
    }
}

/// Splits channel-last evidence into `R` planes of `H * W` values,
/// optionally scaling plane `r` by `scale[r]`.
fn planes(e: &[f32], h: usize, w: usize, rc: usize, scale: Option<&[f64]>) -> Vec<f64> {
    let n = h * w;
    let mut out = vec![0.0f64; rc * n];
    for (p, px) in e.chunks_exact(rc).enumerate() {
        for (r, &v) in px.iter().enumerate() {
            out[r * n + p] = match scale {
                Some(s) => f64::from(v) * s[r],
                None => f64::from(v),
            };
        }
    }
    out
}

fn gather_taps(field: &VoteField) -> Vec<Tap> {
    let mut taps: Vec<Tap> = field
        .regions()
        .iter()
        .enumerate()
        .flat_map(|(r, region)| {
            region.offsets.iter().map(move |off| Tap {
                dy: off.dy as isize,
                dx: off.dx as isize,
                plane: r,
                weight: 1.0,
            })
        })
        .collect();
    taps.sort_by_key(|t| (t.dy, t.dx, t.plane));
    taps
}

fn kernel_taps(bank: &KernelBank) -> Vec<Tap> {
    let c = (bank.side() / 2) as isize;
    let mut taps = Vec::new();
    for (r, kernel) in bank.kernels().iter().enumerate() {
        for ((ky, kx), &weight) in kernel.indexed_iter() {
            if weight != 0.0 {
                taps.push(Tap {
                    dy: ky as isize - c,
                    dx: kx as isize - c,
                    plane: r,
                    weight,
                });
            }
        }
    }
    taps.sort_by_key(|t| (t.dy, t.dx, t.plane));
    taps
}

/// Output-row-parallel pull: `O(y, x) += w * plane(y - dy, x - dx)`.
fn gather_rows(taps: &[Tap], planes: &[f64], h: usize, w: usize, acc: &mut [f64]) {
    let n = h * w;
    acc.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for tap in taps {
            let i = y as isize - tap.dy;
            if i < 0 || i >= h as isize {
                continue;
            }
            let lo = tap.dx.max(0);
            let hi = (w as isize + tap.dx).min(w as isize);
            if lo >= hi {
                continue;
            }
            let start = tap.plane * n + i as usize * w;
            let src = &planes[start + (lo - tap.dx) as usize..start + (hi - tap.dx) as usize];
            let dst = &mut row[lo as usize..hi as usize];
            if tap.weight == 1.0 {
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
            } else {
                let wt = tap.weight;
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += wt * s);
            }
        }
    });
}

fn check_regions(evidence: &EvidenceTensor, regions: usize) -> Result<()> {
    if evidence.regions() != regions {
        return Err(Error::ShapeMismatch(format!(
            "evidence has {} region channels, expected {regions}",
            evidence.regions()
        )));
    }
    Ok(())
}

pub fn vote_scatter(evidence: &EvidenceTensor, field: &VoteField) -> Result<PresenceMap> {
    Voter::new(field, Backend::Scatter).vote(evidence)
}

pub fn vote_gather(evidence: &EvidenceTensor, field: &VoteField) -> Result<PresenceMap> {
    Voter::new(field, Backend::Gather).vote(evidence)
}

/// Transposed convolution of each evidence channel with its bank kernel.
/// The bank may carry arbitrary weights (for instance masked kernels).
pub fn vote_kernelbank(evidence: &EvidenceTensor, bank: &KernelBank) -> Result<PresenceMap> {
    check_regions(evidence, bank.region_count())?;
    let (h, w) = (evidence.height(), evidence.width());
    let mut acc = vec![0.0f64; h * w];
    if h > 0 && w > 0 {
        let view = evidence.view();
        let data = contiguous(&view);
        let planes = planes(&data, h, w, bank.region_count(), None);
        gather_rows(&kernel_taps(bank), &planes, h, w, &mut acc);
    }
    Ok(emit(acc, h, w))
}

pub fn vote_sparse(
    evidence: &EvidenceTensor,
    field: &VoteField,
    threshold: f32,
) -> Result<PresenceMap> {
    Voter::new(field, Backend::Sparse { threshold }).vote(evidence)
}

pub fn vote(evidence: &EvidenceTensor, field: &VoteField, backend: Backend) -> Result<PresenceMap> {
    Voter::new(field, backend).vote(evidence)
}

/// Votes every class of the stack independently, classes in parallel.
pub fn vote_all_classes(
    stack: &EvidenceStack,
    field: &VoteField,
    backend: Backend,
) -> Result<PresenceStack> {
    if stack.regions() != field.region_count() {
        return Err(Error::ShapeMismatch(format!(
            "evidence has {} region channels, field has {}",
            stack.regions(),
            field.region_count()
        )));
    }
    let voter = Voter::new(field, backend);
    let maps = (0..stack.classes())
        .into_par_iter()
        .map(|c| voter.vote_view(stack.class(c)))
        .collect::<Result<Vec<_>>>()?;
    if maps.is_empty() {
        return Ok(PresenceStack::zeros(0, stack.height(), stack.width()));
    }
    PresenceStack::from_maps(maps)
}

/// Sum of visual votes through `field_vis` and temporal votes through `field_temp`.
pub fn vote_spatiotemporal(
    visual: &EvidenceTensor,
    temporal: &EvidenceTensor,
    field_vis: &VoteField,
    field_temp: &VoteField,
    backend: Backend,
) -> Result<PresenceMap> {
    let (h, w) = (visual.height(), visual.width());
    if (temporal.height(), temporal.width()) != (h, w) {
        return Err(Error::ShapeMismatch(format!(
            "visual evidence is {h}x{w}, temporal is {}x{}",
            temporal.height(),
            temporal.width()
        )));
    }
    let mut acc = vec![0.0f64; h * w];
    Voter::new(field_vis, backend).accumulate(visual.view(), &mut acc)?;
    Voter::new(field_temp, backend).accumulate(temporal.view(), &mut acc)?;
    Ok(emit(acc, h, w))
}

/// Weights of the scalable head's mixing layer: a `C x N x 3 x 3`
/// correlation kernel and a length-`C` bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalableMixWeights {
    conv: Array4<f32>,
    bias: Array1<f32>,
}

impl ScalableMixWeights {
    pub fn new(conv: Array4<f32>, bias: Array1<f32>) -> Result<Self> {
        let (c, _, kh, kw) = conv.dim();
        if (kh, kw) != (3, 3) {
            return Err(Error::ShapeMismatch(format!(
                "mixing kernel must be 3x3, got {kh}x{kw}"
            )));
        }
        if bias.len() != c {
            return Err(Error::ShapeMismatch(format!(
                "bias has {} entries for {c} classes",
                bias.len()
            )));
        }
        if !conv.iter().chain(bias.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { conv, bias })
    }

    /// `N == C` mixing that copies channel `c` to class `c`.
    pub fn identity(channels: usize) -> Self {
        let mut conv = Array4::zeros((channels, channels, 3, 3));
        for c in 0..channels {
            conv[[c, c, 1, 1]] = 1.0;
        }
        Self {
            conv,
            bias: Array1::zeros(channels),
        }
    }

    pub fn classes(&self) -> usize {
        self.conv.dim().0
    }

    pub fn channels(&self) -> usize {
        self.conv.dim().1
    }
}

/// Votes `N` shared evidence tensors, applies ReLU to the `N` voting maps,
/// then mixes them into `C` presence maps with a zero-padded 3x3 correlation.
pub fn vote_scalable(
    shared: &EvidenceStack,
    field: &VoteField,
    mix: &ScalableMixWeights,
    backend: Backend,
) -> Result<PresenceStack> {
    if shared.classes() != mix.channels() {
        return Err(Error::ShapeMismatch(format!(
            "{} shared evidence tensors, mixing expects {}",
            shared.classes(),
            mix.channels()
        )));
    }
    let votes = vote_all_classes(shared, field, backend)?;
    let (h, w) = (shared.height(), shared.width());
    let n = mix.channels();
    let rectified = votes.view().mapv(|v| f64::from(v.max(0.0)));

    let maps: Vec<f32> = (0..mix.classes())
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut out = vec![f64::from(mix.bias[c]); h * w];
            for k in 0..n {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let wt = f64::from(mix.conv[[c, k, ky, kx]]);
                        if wt == 0.0 {
                            continue;
                        }
                        let (sy, sx) = (ky as isize - 1, kx as isize - 1);
                        for y in 0..h {
                            let iy = y as isize + sy;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for x in 0..w {
                                let ix = x as isize + sx;
                                if ix >= 0 && ix < w as isize {
                                    out[y * w + x] += wt * rectified[[k, iy as usize, ix as usize]];
                                }
                            }
                        }
                    }
                }
            }
            out.into_iter().map(|v| v as f32)
        })
        .collect();
    PresenceStack::new(Array3::from_shape_vec((mix.classes(), h, w), maps).expect("C*H*W values"))
}

/// `max |a - b| / max(max |a|, max |b|)`; zero when both are all zero.
pub fn max_relative_error<D: Dimension>(a: ArrayView<'_, f32, D>, b: ArrayView<'_, f32, D>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "compared maps differ in shape");
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let (x, y) = (f64::from(x), f64::from(y));
        diff = diff.max((x - y).abs());
        scale = scale.max(x.abs()).max(y.abs());
    }
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::votefield::{build_vote_field, VoteFieldSpec};
    use ndarray::Array3;

    fn field_9() -> VoteField {
        build_vote_field(&VoteFieldSpec::spatial(90, &[2, 8, 16])).unwrap()
    }

    #[test]
    fn zero_in_zero_out() {
        let f = field_9();
        let e = EvidenceTensor::zeros(12, 10, 9);
        for b in Backend::ALL {
            let o = vote(&e, &f, b).unwrap();
            assert!(o.view().iter().all(|&v| v == 0.0), "{b}");
        }
    }

    #[test]
    fn single_voter_spreads_over_its_region() {
        let f = field_9();
        let r = 3;
        let k = f.region(r).count();
        let mut a = Array3::zeros((20, 20, 9));
        a[[10, 10, r]] = 2.0;
        let o = vote_scatter(&EvidenceTensor::new(a).unwrap(), &f).unwrap();
        let expected = (2.0f64 / k as f64) as f32;
        let mut hits = 0;
        for ((y, x), &v) in o.view().indexed_iter() {
            let off = crate::votefield::Offset::new(y as i32 - 10, x as i32 - 10);
            if f.region(r).offsets.contains(&off) {
                assert_eq!(v, expected);
                hits += 1;
            } else {
                assert_eq!(v, 0.0);
            }
        }
        assert_eq!(hits, k);
    }

    #[test]
    fn corner_voter_loses_clipped_votes() {
        let f = field_9();
        let mut a = Array3::zeros((16, 16, 9));
        a[[0, 0, 0]] = 1.0;
        let e = EvidenceTensor::new(a).unwrap();
        for b in Backend::ALL {
            let o = vote(&e, &f, b).unwrap();
            let total: f32 = o.view().sum();
            assert!(total < 1.0, "{b}: {total}");
            assert!(o.view().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn region_mismatch_is_a_shape_error() {
        let f = field_9();
        let e = EvidenceTensor::zeros(4, 4, 5);
        for b in Backend::ALL {
            assert!(matches!(vote(&e, &f, b), Err(Error::ShapeMismatch(_))));
        }
        let bank = materialize_kernels(&f);
        assert!(matches!(
            vote_kernelbank(&e, &bank),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn delta_reproduces_kernels() {
        let f = build_vote_field(&VoteFieldSpec::spatial(60, &[2, 8, 16])).unwrap();
        let bank = materialize_kernels(&f);
        let c = f.radius();
        for r in 0..f.region_count() {
            let mut a = Array3::zeros((f.side(), f.side(), f.region_count()));
            a[[c, c, r]] = 3.0;
            let o = vote_kernelbank(&EvidenceTensor::new(a).unwrap(), &bank).unwrap();
            for ((y, x), &v) in o.view().indexed_iter() {
                assert_eq!(v, (3.0 * bank.kernel(r)[[y, x]]) as f32);
            }
        }
    }

    #[test]
    fn sparse_threshold_above_max_gives_zero() {
        let f = field_9();
        let a = Array3::from_shape_fn((8, 8, 9), |(y, x, r)| ((y + x + r) % 5) as f32 * 0.1);
        let e = EvidenceTensor::new(a).unwrap();
        let o = vote_sparse(&e, &f, 1.0).unwrap();
        assert!(o.view().iter().all(|&v| v == 0.0));
        assert_eq!(
            vote_sparse(&e, &f, 0.0).unwrap(),
            vote_scatter(&e, &f).unwrap()
        );
    }

    #[test]
    fn backend_names_round_trip() {
        for b in Backend::ALL {
            assert_eq!(b.name().parse::<Backend>().unwrap().name(), b.name());
        }
        assert!(matches!(
            "bogus".parse::<Backend>(),
            Err(Error::UnknownBackend(_))
        ));
    }

    #[test]
    fn scalable_zero_mix_is_bias() {
        let f = field_9();
        let shared = EvidenceStack::new(Array4::from_elem((2, 6, 7, 9), 0.5)).unwrap();
        let mix = ScalableMixWeights::new(
            Array4::zeros((3, 2, 3, 3)),
            Array1::from(vec![0.5, -1.0, 2.0]),
        )
        .unwrap();
        let out = vote_scalable(&shared, &f, &mix, Backend::Gather).unwrap();
        for c in 0..3 {
            let b = mix.bias[c];
            assert!(out.class(c).iter().all(|&v| v == b));
        }
    }

    #[test]
    fn scalable_rejects_bad_shapes() {
        assert!(ScalableMixWeights::new(Array4::zeros((3, 2, 5, 5)), Array1::zeros(3)).is_err());
        assert!(ScalableMixWeights::new(Array4::zeros((3, 2, 3, 3)), Array1::zeros(2)).is_err());
        let f = field_9();
        let shared = EvidenceStack::new(Array4::zeros((4, 5, 5, 9))).unwrap();
        let mix = ScalableMixWeights::identity(3);
        assert!(vote_scalable(&shared, &f, &mix, Backend::Scatter).is_err());
    }

    #[test]
    fn relative_error_of_equal_maps_is_zero() {
        let a = Array2::from_elem((3, 3), 1.5f32);
        assert_eq!(max_relative_error(a.view(), a.view()), 0.0);
        let z = Array2::<f32>::zeros((3, 3));
        assert_eq!(max_relative_error(z.view(), z.view()), 0.0);
    }
}
