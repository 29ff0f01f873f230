//! Dense map types passed between the voting stages.
//!
//! All arrays are row-major with the last axis fastest, matching the
//! on-disk tensor layout.

use ndarray::{Array2, Array3, Array4, ArrayView2, ArrayView3, ArrayView4, Axis};

use crate::error::{Error, Result};

fn ensure_finite<'a>(mut values: impl Iterator<Item = &'a f32>) -> Result<()> {
    if values.all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// `H x W x R` class-conditional evidence scores for one class.
#[derive(Clone, Debug, PartialEq)]
pub struct EvidenceTensor(Array3<f32>);

impl EvidenceTensor {
    pub fn new(data: Array3<f32>) -> Result<Self> {
        ensure_finite(data.iter())?;
        Ok(Self(data.as_standard_layout().into_owned()))
    }

    pub fn zeros(height: usize, width: usize, regions: usize) -> Self {
        Self(Array3::zeros((height, width, regions)))
    }

    pub fn height(&self) -> usize {
        self.0.dim().0
    }

    pub fn width(&self) -> usize {
        self.0.dim().1
    }

    pub fn regions(&self) -> usize {
        self.0.dim().2
    }

    pub fn view(&self) -> ArrayView3<'_, f32> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array3<f32> {
        self.0
    }

    /// Evidence restricted to the listed region channels, in the given order.
    pub fn select_regions(&self, regions: &[usize]) -> EvidenceTensor {
        Self(self.0.select(Axis(2), regions))
    }

    /// Copy with every channel not listed in `keep` set to zero.
    pub fn keep_regions(&self, keep: &[usize]) -> EvidenceTensor {
        let mut out = self.0.clone();
        for (r, mut lane) in out.axis_iter_mut(Axis(2)).enumerate() {
            if !keep.contains(&r) {
                lane.fill(0.0);
            }
        }
        Self(out)
    }
}

/// `C x H x W x R` evidence for all classes.
#[derive(Clone, Debug, PartialEq)]
pub struct EvidenceStack(Array4<f32>);

impl EvidenceStack {
    pub fn new(data: Array4<f32>) -> Result<Self> {
        ensure_finite(data.iter())?;
        Ok(Self(data.as_standard_layout().into_owned()))
    }

    pub fn from_classes(classes: &[EvidenceTensor]) -> Result<Self> {
        let views: Vec<_> = classes.iter().map(EvidenceTensor::view).collect();
        let data = ndarray::stack(Axis(0), &views)
            .map_err(|e| Error::ShapeMismatch(format!("cannot stack classes: {e}")))?;
        Ok(Self(data))
    }

    pub fn classes(&self) -> usize {
        self.0.dim().0
    }

    pub fn height(&self) -> usize {
        self.0.dim().1
    }

    pub fn width(&self) -> usize {
        self.0.dim().2
    }

    pub fn regions(&self) -> usize {
        self.0.dim().3
    }

    pub fn class(&self, c: usize) -> ArrayView3<'_, f32> {
        self.0.index_axis(Axis(0), c)
    }

    pub fn view(&self) -> ArrayView4<'_, f32> {
        self.0.view()
    }

    pub fn class_tensor(&self, c: usize) -> EvidenceTensor {
        EvidenceTensor(self.class(c).to_owned())
    }

    pub fn into_inner(self) -> Array4<f32> {
        self.0
    }
}

/// `H x W` accumulated object-presence scores.
#[derive(Clone, Debug, PartialEq)]
pub struct PresenceMap(Array2<f32>);

impl PresenceMap {
    pub fn new(data: Array2<f32>) -> Result<Self> {
        ensure_finite(data.iter())?;
        Ok(Self(data.as_standard_layout().into_owned()))
    }

    pub(crate) fn from_raw(data: Array2<f32>) -> Self {
        Self(data)
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self(Array2::zeros((height, width)))
    }

    pub fn height(&self) -> usize {
        self.0.nrows()
    }

    pub fn width(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f32> {
        self.0.view()
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.0[[y, x]]
    }

    pub fn into_inner(self) -> Array2<f32> {
        self.0
    }
}

/// `C x H x W` presence maps, one per class.
#[derive(Clone, Debug, PartialEq)]
pub struct PresenceStack(Array3<f32>);

impl PresenceStack {
    pub fn new(data: Array3<f32>) -> Result<Self> {
        ensure_finite(data.iter())?;
        Ok(Self(data.as_standard_layout().into_owned()))
    }

    pub fn zeros(classes: usize, height: usize, width: usize) -> Self {
        Self(Array3::zeros((classes, height, width)))
    }

    pub fn from_maps(maps: Vec<PresenceMap>) -> Result<Self> {
        let views: Vec<_> = maps.iter().map(PresenceMap::view).collect();
        let data = ndarray::stack(Axis(0), &views)
            .map_err(|e| Error::ShapeMismatch(format!("cannot stack maps: {e}")))?;
        Ok(Self(data))
    }

    pub fn classes(&self) -> usize {
        self.0.dim().0
    }

    pub fn height(&self) -> usize {
        self.0.dim().1
    }

    pub fn width(&self) -> usize {
        self.0.dim().2
    }

    pub fn class(&self, c: usize) -> ArrayView2<'_, f32> {
        self.0.index_axis(Axis(0), c)
    }

    pub fn class_map(&self, c: usize) -> PresenceMap {
        PresenceMap(self.class(c).to_owned())
    }

    pub fn view(&self) -> ArrayView3<'_, f32> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array3<f32> {
        self.0
    }
}

/// `H x W x D` backbone features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap(Array3<f32>);

impl FeatureMap {
    pub fn new(data: Array3<f32>) -> Result<Self> {
        ensure_finite(data.iter())?;
        Ok(Self(data))
    }

    pub fn view(&self) -> ArrayView3<'_, f32> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array3<f32> {
        self.0
    }
}

/// Motion features: elementwise `reference - auxiliary`.
pub fn feature_diff(reference: &FeatureMap, auxiliary: &FeatureMap) -> Result<FeatureMap> {
    if reference.0.dim() != auxiliary.0.dim() {
        return Err(Error::ShapeMismatch(format!(
            "reference features {:?} vs auxiliary {:?}",
            reference.0.dim(),
            auxiliary.0.dim()
        )));
    }
    FeatureMap::new(&reference.0 - &auxiliary.0)
}
