//! Inverse voting: which voters, through which regions, built a given
//! presence-map value.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};
use ndarray::{Array2, ArrayView2, ArrayView3};
use serde::Serialize;

use crate::decoder::Detection;
use crate::error::{Error, Result};
use crate::maps::{EvidenceStack, EvidenceTensor, PresenceMap};
use crate::tensorio::LabelMap;
use crate::votefield::VoteField;

/// A single vote: voter pixel, the region it voted through, and the amount
/// it added to the target (`E(i, j, r) / K_r`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VoteRecord {
    pub voter: (usize, usize),
    pub region: usize,
    pub strength: f64,
}

pub(crate) fn attribute_view(
    evidence: ArrayView3<'_, f32>,
    field: &VoteField,
    center: (usize, usize),
    keep_zeros: bool,
) -> Result<Vec<VoteRecord>> {
    let (h, w, rc) = evidence.dim();
    if rc != field.region_count() {
        return Err(Error::ShapeMismatch(format!(
            "evidence has {rc} region channels, field has {}",
            field.region_count()
        )));
    }
    let (cy, cx) = center;
    if cy >= h || cx >= w {
        return Err(Error::OutOfBounds {
            y: cy,
            x: cx,
            height: h,
            width: w,
        });
    }
    let mut records = Vec::new();
    for (r, region) in field.regions().iter().enumerate() {
        let k = region.count() as f64;
        for off in &region.offsets {
            let i = cy as isize - off.dy as isize;
            let j = cx as isize - off.dx as isize;
            if i < 0 || i >= h as isize || j < 0 || j >= w as isize {
                continue;
            }
            let (i, j) = (i as usize, j as usize);
            let value = evidence[[i, j, r]];
            if value == 0.0 && !keep_zeros {
                continue;
            }
            records.push(VoteRecord {
                voter: (i, j),
                region: r,
                strength: f64::from(value) / k,
            });
        }
    }
    Ok(records)
}

/// Every in-bounds `(i, j, r)` whose region `r` covers `center`, with its
/// vote strength. Zero-strength voters are dropped unless `keep_zeros`.
pub fn attribute(
    evidence: &EvidenceTensor,
    field: &VoteField,
    center: (usize, usize),
    keep_zeros: bool,
) -> Result<Vec<VoteRecord>> {
    attribute_view(evidence.view(), field, center, keep_zeros)
}

/// Accumulates record strengths at their voter pixels.
pub fn vote_map(records: &[VoteRecord], height: usize, width: usize) -> Result<PresenceMap> {
    let mut acc = Array2::<f64>::zeros((height, width));
    for rec in records {
        let (i, j) = rec.voter;
        if i >= height || j >= width {
            return Err(Error::OutOfBounds {
                y: i,
                x: j,
                height,
                width,
            });
        }
        acc[[i, j]] += rec.strength;
    }
    PresenceMap::new(acc.mapv(|v| v as f32))
}

/// `C x C` vote counts: rows are vote-getter classes, columns vote-givers.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassInteractionMatrix(Array2<f64>);

impl ClassInteractionMatrix {
    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn get(&self, getter: usize, giver: usize) -> f64 {
        self.0[[getter, giver]]
    }

    /// CSV with a header row of giver names and one row per getter.
    pub fn to_csv(&self, labels: &LabelMap) -> Result<String> {
        let c = self.0.nrows();
        if labels.len() != c {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {c} classes",
                labels.len()
            )));
        }
        let mut out = String::from("getter");
        for name in labels.names() {
            write!(out, ",{}", csv_field(name)).expect("string write");
        }
        out.push('\n');
        for (g, row) in self.0.rows().into_iter().enumerate() {
            out.push_str(&csv_field(&labels.names()[g]));
            for v in row {
                write!(out, ",{v}").expect("string write");
            }
            out.push('\n');
        }
        Ok(out)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// For each detection of class `c`, finds its voter pixels and adds their
/// class probabilities to row `c`. Voter pixels reached through several
/// regions count once. Entries are raw sums.
pub fn class_interactions(
    detections: &[Detection],
    evidence: &EvidenceStack,
    prob_maps: ArrayView3<'_, f32>,
    field: &VoteField,
) -> Result<ClassInteractionMatrix> {
    let c = evidence.classes();
    let (pc, ph, pw) = prob_maps.dim();
    if pc != c || (ph, pw) != (evidence.height(), evidence.width()) {
        return Err(Error::ShapeMismatch(format!(
            "probability maps {:?} do not match evidence {}x{}x{}",
            prob_maps.dim(),
            c,
            evidence.height(),
            evidence.width()
        )));
    }
    let mut m = Array2::<f64>::zeros((c, c));
    for det in detections {
        if det.class_id >= c {
            return Err(Error::ShapeMismatch(format!(
                "detection class {} but only {c} classes",
                det.class_id
            )));
        }
        let records = attribute_view(evidence.class(det.class_id), field, det.center, false)?;
        let voters: BTreeSet<(usize, usize)> = records.iter().map(|r| r.voter).collect();
        let mut row = m.row_mut(det.class_id);
        for (i, j) in voters {
            for (g, cell) in row.iter_mut().enumerate() {
                *cell += f64::from(prob_maps[[g, i, j]]);
            }
        }
    }
    Ok(ClassInteractionMatrix(m))
}

/// Classic jet colormap for `t` in `[0, 1]`.
pub fn jet(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let channel = |center: f64| {
        let v = (1.5 - (4.0 * t - center).abs()).clamp(0.0, 1.0);
        (v * 255.0).round() as u8
    };
    [channel(3.0), channel(2.0), channel(1.0)]
}

/// Min-max normalized jet rendering of `map`, optionally blended 50/50
/// over an image of the same size.
pub fn render_heatmap(map: ArrayView2<'_, f32>, underlay: Option<&RgbImage>) -> Result<RgbImage> {
    let (h, w) = map.dim();
    let (lo, hi) = map
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = f64::from(hi) - f64::from(lo);
    let mut img = RgbImage::new(w as u32, h as u32);
    if let Some(under) = underlay {
        if under.dimensions() != img.dimensions() {
            return Err(Error::ImageSizeMismatch {
                expected: img.dimensions(),
                got: under.dimensions(),
            });
        }
    }
    for ((y, x), &v) in map.indexed_iter() {
        let t = if span > 0.0 {
            (f64::from(v) - f64::from(lo)) / span
        } else {
            0.5
        };
        let mut px = jet(t);
        if let Some(under) = underlay {
            let base = under.get_pixel(x as u32, y as u32).0;
            for (p, b) in px.iter_mut().zip(base) {
                *p = (u16::from(*p) + u16::from(b)).div_ceil(2) as u8;
            }
        }
        img.put_pixel(x as u32, y as u32, Rgb(px));
    }
    Ok(img)
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}
