//! Peak extraction and box decoding on presence maps.
//!
//! Peaks are pixels equal to the maximum of their 3x3 neighborhood
//! (neighborhoods are truncated at the border). Ranking is by score
//! descending with ties broken by `(class_id, cy, cx)` ascending, so output
//! order never depends on hashing or thread scheduling.

use std::cmp::Ordering;
use std::io::Write;

use ndarray::{Array3, ArrayView2};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{PresenceMap, PresenceStack};

pub const DEFAULT_TOP_K: usize = 100;
pub const DEFAULT_STRIDE: u32 = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub cy: usize,
    pub cx: usize,
    pub score: f32,
}

fn rank(a: (f32, usize, usize, usize), b: (f32, usize, usize, usize)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then(a.1.cmp(&b.1))
        .then(a.2.cmp(&b.2))
        .then(a.3.cmp(&b.3))
}

fn local_maxima(map: ArrayView2<'_, f32>) -> Vec<Peak> {
    let (h, w) = map.dim();
    let mut peaks = Vec::new();
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let v = map[[y, x]];
            let is_max = (y0..=y1).all(|ny| (x0..=x1).all(|nx| map[[ny, nx]] <= v));
            if is_max {
                peaks.push(Peak {
                    cy: y,
                    cx: x,
                    score: v,
                });
            }
        }
    }
    peaks
}

fn extract_view(map: ArrayView2<'_, f32>, top_k: usize) -> Vec<Peak> {
    let mut peaks = local_maxima(map);
    peaks.sort_unstable_by(|a, b| rank((a.score, 0, a.cy, a.cx), (b.score, 0, b.cy, b.cx)));
    peaks.truncate(top_k);
    peaks
}

/// 3x3 max-pool suppression followed by top-k selection.
pub fn extract_peaks(map: &PresenceMap, top_k: usize) -> Vec<Peak> {
    extract_view(map.view(), top_k)
}

/// Width/height and sub-pixel offset maps, both `H x W x 2`.
///
/// `wh[.., 0]` is the box height and `wh[.., 1]` its width, in output-map
/// pixels. `offset[.., 0]` and `offset[.., 1]` are the `dy` and `dx`
/// corrections of the center.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxMaps {
    wh: Array3<f32>,
    offset: Array3<f32>,
    stride: u32,
}

impl AuxMaps {
    pub fn new(wh: Array3<f32>, offset: Array3<f32>, stride: u32) -> Result<Self> {
        if wh.dim().2 != 2 || wh.dim() != offset.dim() {
            return Err(Error::ShapeMismatch(format!(
                "wh {:?} and offset {:?} must both be HxWx2",
                wh.dim(),
                offset.dim()
            )));
        }
        if stride == 0 {
            return Err(Error::ShapeMismatch("stride must be at least 1".into()));
        }
        if !wh.iter().chain(offset.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { wh, offset, stride })
    }

    pub fn height(&self) -> usize {
        self.wh.dim().0
    }

    pub fn width(&self) -> usize {
        self.wh.dim().1
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }
}

/// A decoded instance. `bbox` is `[x, y, w, h]` in input-image pixels;
/// `center` is the integer peak location on the output map.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Detection {
    pub class_id: usize,
    pub score: f32,
    pub bbox: [f64; 4],
    #[serde(skip)]
    pub center: (usize, usize),
}

impl Detection {
    /// Recovers `((offset_y, offset_x), (h, w))` from the box.
    pub fn recover_aux(&self, stride: u32) -> ((f64, f64), (f64, f64)) {
        let s = f64::from(stride);
        let [bx, by, bw, bh] = self.bbox;
        let (cy_img, cx_img) = (by + bh / 2.0, bx + bw / 2.0);
        (
            (
                cy_img / s - self.center.0 as f64,
                cx_img / s - self.center.1 as f64,
            ),
            (bh / s, bw / s),
        )
    }
}

fn decode_one(peak: &Peak, aux: &AuxMaps, class_id: usize) -> Detection {
    let s = f64::from(aux.stride);
    let (cy, cx) = (peak.cy, peak.cx);
    let oy = f64::from(aux.offset[[cy, cx, 0]]);
    let ox = f64::from(aux.offset[[cy, cx, 1]]);
    let bh = f64::from(aux.wh[[cy, cx, 0]]) * s;
    let bw = f64::from(aux.wh[[cy, cx, 1]]) * s;
    let cy_img = (cy as f64 + oy) * s;
    let cx_img = (cx as f64 + ox) * s;
    Detection {
        class_id,
        score: peak.score,
        bbox: [cx_img - bw / 2.0, cy_img - bh / 2.0, bw, bh],
        center: (cy, cx),
    }
}

/// Decodes the peaks scoring at least `score_thresh` into boxes.
pub fn decode_detections(
    peaks: &[Peak],
    aux: &AuxMaps,
    class_id: usize,
    score_thresh: f32,
) -> Result<Vec<Detection>> {
    let mut dets = Vec::with_capacity(peaks.len());
    for p in peaks {
        if p.cy >= aux.height() || p.cx >= aux.width() {
            return Err(Error::OutOfBounds {
                y: p.cy,
                x: p.cx,
                height: aux.height(),
                width: aux.width(),
            });
        }
        if p.score >= score_thresh {
            dets.push(decode_one(p, aux, class_id));
        }
    }
    dets.sort_by(|a, b| {
        rank(
            (a.score, a.class_id, a.center.0, a.center.1),
            (b.score, b.class_id, b.center.0, b.center.1),
        )
    });
    Ok(dets)
}

/// Per-class peak extraction, pooled across classes, global top-k.
pub fn decode_all(
    stack: &PresenceStack,
    aux: &AuxMaps,
    top_k: usize,
    score_thresh: f32,
) -> Result<Vec<Detection>> {
    if (stack.height(), stack.width()) != (aux.height(), aux.width()) {
        return Err(Error::ShapeMismatch(format!(
            "presence maps are {}x{}, aux maps are {}x{}",
            stack.height(),
            stack.width(),
            aux.height(),
            aux.width()
        )));
    }
    let mut pooled: Vec<(usize, Peak)> = (0..stack.classes())
        .into_par_iter()
        .flat_map_iter(|c| {
            extract_view(stack.class(c), top_k)
                .into_iter()
                .map(move |p| (c, p))
        })
        .collect();
    pooled.sort_unstable_by(|(ca, a), (cb, b)| {
        rank((a.score, *ca, a.cy, a.cx), (b.score, *cb, b.cy, b.cx))
    });
    pooled.truncate(top_k);
    Ok(pooled
        .iter()
        .filter(|(_, p)| p.score >= score_thresh)
        .map(|(c, p)| decode_one(p, aux, *c))
        .collect())
}

/// One JSON object per line: `{"class_id":..,"score":..,"bbox":[x,y,w,h]}`.
pub fn write_jsonl<W: Write>(detections: &[Detection], mut out: W) -> Result<()> {
    for det in detections {
        serde_json::to_writer(&mut out, det)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CocoResult {
    image_id: u64,
    category_id: usize,
    bbox: [f64; 4],
    score: f32,
}

/// COCO results-file array; `category_id` is the class id.
pub fn write_coco<W: Write>(detections: &[Detection], image_id: u64, out: W) -> Result<()> {
    let results: Vec<CocoResult> = detections
        .iter()
        .map(|d| CocoResult {
            image_id,
            category_id: d.class_id,
            bbox: d.bbox,
            score: d.score,
        })
        .collect();
    serde_json::to_writer(out, &results)?;
    Ok(())
}
