use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a training point inside a [`PointStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PointId(pub u32);

impl PointId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Append-only pool of labelled training points.
///
/// Trees keep only [`PointId`]s at their leaves; the features live here once
/// and are shared by every tree of a forest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointStore {
    dim: usize,
    num_classes: usize,
    features: Vec<f64>,
    labels: Vec<u32>,
}

impl PointStore {
    pub fn new(dim: usize, num_classes: usize) -> Self {
        Self {
            dim,
            num_classes,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Validate and append a point.
    pub fn push(&mut self, features: &[f64], label: usize) -> Result<PointId> {
        if features.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: features.len(),
            });
        }
        if label >= self.num_classes {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: self.num_classes,
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        let id = u32::try_from(self.labels.len())
            .map_err(|_| Error::InvalidArgument("point store is full".into()))?;
        self.features.extend_from_slice(features);
        self.labels.push(label as u32);
        Ok(PointId(id))
    }

    pub fn features(&self, id: PointId) -> &[f64] {
        let start = id.index() * self.dim;
        &self.features[start..start + self.dim]
    }

    pub fn label(&self, id: PointId) -> usize {
        self.labels[id.index()] as usize
    }

    pub fn ids(&self) -> impl Iterator<Item = PointId> {
        (0..self.labels.len() as u32).map(PointId)
    }
}
