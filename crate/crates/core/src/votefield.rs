//! Log-polar vote fields.
//!
//! A vote field partitions the disk of pixels around a voter into regions:
//! an unsplit central ring plus outer rings cut into equal angular sectors.
//! Ring parameters are diameters, so a field with outermost diameter `d`
//! covers the pixels within Euclidean distance `d / 2` of its center and
//! is materialized on a `(d + 1) x (d + 1)` grid.
//!
//! Geometry conventions:
//! - offsets are `(dy, dx)` in row/column order, `dy` growing downwards;
//! - ring bands are half-open `(prev / 2, diam / 2]`, the center ring is
//!   `[0, ring_diams[0] / 2]`;
//! - angles are `atan2(dy, dx)` mapped to `[0, 360)`, sectors are half-open
//!   `[k * bin, (k + 1) * bin)` starting on the `+x` axis;
//! - region ids are ring-major, then sector ascending.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of a vote field, as read from a JSON spec file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteFieldSpec {
    pub angle_bin_deg: u32,
    pub ring_diams: Vec<u32>,
    #[serde(default)]
    pub split_center: bool,
    #[serde(default)]
    pub temporal: bool,
}

impl VoteFieldSpec {
    pub fn spatial(angle_bin_deg: u32, ring_diams: &[u32]) -> Self {
        Self {
            angle_bin_deg,
            ring_diams: ring_diams.to_vec(),
            split_center: false,
            temporal: false,
        }
    }

    /// The four-quadrant motion field: one ring of diameter 8, 90 degree bins.
    pub fn temporal() -> Self {
        Self {
            angle_bin_deg: 90,
            ring_diams: vec![8],
            split_center: false,
            temporal: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bin = self.angle_bin_deg;
        if bin == 0 || bin > 360 || 360 % bin != 0 {
            return Err(Error::InvalidSpec(format!(
                "angle bin {bin} does not divide 360"
            )));
        }
        if self.ring_diams.is_empty() {
            return Err(Error::InvalidSpec("no rings given".into()));
        }
        for &d in &self.ring_diams {
            if d < 2 {
                return Err(Error::InvalidSpec(format!("ring diameter {d} is below 2")));
            }
            if d % 2 != 0 {
                return Err(Error::InvalidSpec(format!("ring diameter {d} is odd")));
            }
        }
        if self.ring_diams.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpec(
                "ring diameters must be strictly ascending".into(),
            ));
        }
        if self.split_center {
            return Err(Error::InvalidSpec("the center ring is never split".into()));
        }
        if self.temporal && (self.ring_diams.len() != 1 || bin != 90) {
            return Err(Error::InvalidSpec(
                "a temporal field has exactly one ring and 90 degree bins".into(),
            ));
        }
        Ok(())
    }

    fn sectors(&self) -> usize {
        (360 / self.angle_bin_deg) as usize
    }
}

/// Relative coordinates of one vote-field pixel with respect to the field center.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Offset {
    pub dy: i32,
    pub dx: i32,
}

impl Offset {
    pub const fn new(dy: i32, dx: i32) -> Self {
        Self { dy, dx }
    }

    fn dist_sq(self) -> i64 {
        let (dy, dx) = (i64::from(self.dy), i64::from(self.dx));
        dy * dy + dx * dx
    }
}

/// One cell of the field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    /// Ring number, counted from 1 at the center.
    pub ring: usize,
    /// Angular sector within the ring; always 0 for the center ring.
    pub sector: usize,
    pub offsets: Vec<Offset>,
}

impl Region {
    /// Number of pixels in the region (`K_r`).
    pub fn count(&self) -> usize {
        self.offsets.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteField {
    spec: VoteFieldSpec,
    side: usize,
    regions: Vec<Region>,
}

impl VoteField {
    pub fn spec(&self) -> &VoteFieldSpec {
        &self.spec
    }

    /// Side length of the square grid the field occupies; always odd.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Distance from the center pixel to the grid edge.
    pub fn radius(&self) -> usize {
        self.side / 2
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, r: usize) -> &Region {
        &self.regions[r]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.regions.iter().map(Region::count).collect()
    }

    /// Total number of pixels over all regions.
    pub fn total_pixels(&self) -> usize {
        self.regions.iter().map(Region::count).sum()
    }

    /// Indices of the regions lying in any of the given rings.
    pub fn regions_in_rings(&self, rings: &BTreeSet<usize>) -> Vec<usize> {
        self.regions
            .iter()
            .enumerate()
            .filter(|(_, reg)| rings.contains(&reg.ring))
            .map(|(r, _)| r)
            .collect()
    }

    /// `side x side` map of 1-based region ids, 0 outside the field.
    pub fn region_map(&self) -> Array2<u32> {
        let c = self.radius() as i32;
        let mut map = Array2::zeros((self.side, self.side));
        for (r, region) in self.regions.iter().enumerate() {
            for off in &region.offsets {
                map[[(c + off.dy) as usize, (c + off.dx) as usize]] = r as u32 + 1;
            }
        }
        map
    }

    /// Reorders regions so that region `r` of the result is region `perm[r]` of `self`.
    pub fn permute_regions(&self, perm: &[usize]) -> Result<VoteField> {
        check_permutation(perm, self.regions.len())?;
        Ok(VoteField {
            spec: self.spec.clone(),
            side: self.side,
            regions: perm.iter().map(|&p| self.regions[p].clone()).collect(),
        })
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::NotAPermutation(n));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::NotAPermutation(n));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Angle of an offset in degrees in `[0, 360)`. Offsets on the axes and
/// diagonals get exact values so sector boundaries never depend on rounding.
fn angle_deg(off: Offset) -> f64 {
    let Offset { dy, dx } = off;
    match (dy.signum(), dx.signum()) {
        (0, 1) => return 0.0,
        (1, 0) => return 90.0,
        (0, -1) => return 180.0,
        (-1, 0) => return 270.0,
        _ => {}
    }
    if dy.abs() == dx.abs() {
        return match (dy > 0, dx > 0) {
            (true, true) => 45.0,
            (true, false) => 135.0,
            (false, false) => 225.0,
            (false, true) => 315.0,
        };
    }
    let a = f64::from(dy).atan2(f64::from(dx)).to_degrees();
    if a < 0.0 {
        a + 360.0
    } else {
        a
    }
}

fn sector_of(off: Offset, bin_deg: u32, sectors: usize) -> usize {
    let s = (angle_deg(off) / f64::from(bin_deg)).floor() as usize;
    s.min(sectors - 1)
}

/// Builds the field described by `spec`. Temporal specs are routed to the
/// quadrant construction.
pub fn build_vote_field(spec: &VoteFieldSpec) -> Result<VoteField> {
    spec.validate()?;
    if spec.temporal {
        return build_quadrant_field(spec);
    }

    let sectors = spec.sectors();
    let rings = spec.ring_diams.len();
    let outer = (spec.ring_diams[rings - 1] / 2) as i32;
    let radii_sq: Vec<i64> = spec
        .ring_diams
        .iter()
        .map(|&d| i64::from(d / 2).pow(2))
        .collect();

    let mut regions: Vec<Region> = Vec::with_capacity(1 + sectors * (rings - 1));
    regions.push(Region {
        ring: 1,
        sector: 0,
        offsets: Vec::new(),
    });
    for ring in 2..=rings {
        for sector in 0..sectors {
            regions.push(Region {
                ring,
                sector,
                offsets: Vec::new(),
            });
        }
    }

    for dy in -outer..=outer {
        for dx in -outer..=outer {
            let off = Offset::new(dy, dx);
            let d2 = off.dist_sq();
            let Some(ring) = radii_sq.iter().position(|&r2| d2 <= r2) else {
                continue;
            };
            let idx = if ring == 0 {
                0
            } else {
                1 + (ring - 1) * sectors + sector_of(off, spec.angle_bin_deg, sectors)
            };
            regions[idx].offsets.push(off);
        }
    }

    finish(spec, regions)
}

/// The temporal (motion) vote field: a single ring of diameter 8 split into
/// four quadrants, center pixel excluded. Region 0 collects `(+x, +y)` motion.
pub fn build_temporal_field() -> VoteField {
    build_quadrant_field(&VoteFieldSpec::temporal()).expect("temporal spec is valid")
}

fn build_quadrant_field(spec: &VoteFieldSpec) -> Result<VoteField> {
    let radius = (spec.ring_diams[0] / 2) as i32;
    let r2 = i64::from(radius).pow(2);
    let mut regions: Vec<Region> = (0..4)
        .map(|sector| Region {
            ring: 1,
            sector,
            offsets: Vec::new(),
        })
        .collect();
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let off = Offset::new(dy, dx);
            if off == Offset::new(0, 0) || off.dist_sq() > r2 {
                continue;
            }
            regions[sector_of(off, 90, 4)].offsets.push(off);
        }
    }
    finish(spec, regions)
}

fn finish(spec: &VoteFieldSpec, regions: Vec<Region>) -> Result<VoteField> {
    if let Some(r) = regions.iter().position(|reg| reg.offsets.is_empty()) {
        return Err(Error::InvalidSpec(format!(
            "region {} (ring {}, sector {}) contains no pixels",
            r + 1,
            regions[r].ring,
            regions[r].sector
        )));
    }
    let side = *spec.ring_diams.last().expect("validated") as usize + 1;
    Ok(VoteField {
        spec: spec.clone(),
        side,
        regions,
    })
}

/// Keeps only the regions of the listed rings (numbered from 1 at the center).
pub fn mask_regions(field: &VoteField, keep_rings: &BTreeSet<usize>) -> Result<VoteField> {
    let ring_count = field.regions.iter().map(|r| r.ring).max().unwrap_or(0);
    if keep_rings.is_empty() || keep_rings.iter().any(|&k| k == 0 || k > ring_count) {
        return Err(Error::EmptySelection);
    }
    let regions: Vec<Region> = field
        .regions
        .iter()
        .filter(|reg| keep_rings.contains(&reg.ring))
        .cloned()
        .collect();
    if regions.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(VoteField {
        spec: field.spec.clone(),
        side: field.side,
        regions,
    })
}

/// Per-region transposed-convolution kernels.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelBank {
    side: usize,
    kernels: Vec<Array2<f64>>,
}

impl KernelBank {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn region_count(&self) -> usize {
        self.kernels.len()
    }

    pub fn kernel(&self, r: usize) -> &Array2<f64> {
        &self.kernels[r]
    }

    pub fn kernels(&self) -> &[Array2<f64>] {
        &self.kernels
    }

    /// Copy of the bank with the listed regions' kernels set to zero.
    pub fn with_zeroed(&self, regions: &[usize]) -> KernelBank {
        let mut bank = self.clone();
        for &r in regions {
            bank.kernels[r].fill(0.0);
        }
        bank
    }
}

/// Kernel `r` holds `1 / K_r` on the pixels of region `r` and zero elsewhere.
pub fn materialize_kernels(field: &VoteField) -> KernelBank {
    let side = field.side();
    let c = field.radius() as i32;
    let kernels = field
        .regions()
        .iter()
        .map(|region| {
            let w = 1.0 / region.count() as f64;
            let mut k = Array2::zeros((side, side));
            for off in &region.offsets {
                k[[(c + off.dy) as usize, (c + off.dx) as usize]] = w;
            }
            k
        })
        .collect();
    KernelBank { side, kernels }
}
