//! Flattened model parameters and the layout that maps flat ranges back onto
//! layers.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Weight,
    Bias,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Weight => f.write_str("weight"),
            Role::Bias => f.write_str("bias"),
        }
    }
}

/// One contiguous slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub layer: usize,
    pub role: Role,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered segment table. Segments are disjoint and tile `[0, len)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    segments: Vec<Segment>,
    len: usize,
}

impl Layout {
    /// Builds a layout by packing `(layer, role, shape)` entries back to back.
    pub fn packed(entries: impl IntoIterator<Item = (usize, Role, Vec<usize>)>) -> Self {
        let mut offset = 0;
        let segments = entries
            .into_iter()
            .map(|(layer, role, shape)| {
                let seg = Segment {
                    layer,
                    role,
                    offset,
                    shape,
                };
                offset += seg.len();
                seg
            })
            .collect();
        Self {
            segments,
            len: offset,
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn segment(&self, layer: usize, role: Role) -> Option<&Segment> {
        self.segments
            .iter()
            .find(|s| s.layer == layer && s.role == role)
    }
}

/// Flat `f64` parameters plus the layout they are interpreted under.
#[derive(Debug, Clone)]
pub struct ParameterVector {
    values: Vec<f64>,
    layout: Arc<Layout>,
}

impl PartialEq for ParameterVector {
    fn eq(&self, other: &Self) -> bool {
        self.same_layout(other) && self.values == other.values
    }
}

impl ParameterVector {
    pub fn new(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::LayoutMismatch(format!(
                "layout holds {} parameters, got {} values",
                layout.len(),
                values.len()
            )));
        }
        Ok(Self { values, layout })
    }

    pub fn zeros(layout: Arc<Layout>) -> Self {
        let values = vec![0.0; layout.len()];
        Self { values, layout }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || *self.layout == *other.layout
    }

    pub fn check_layout(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::LayoutMismatch(format!(
                "{what}: {} vs {} parameters with differing segment tables",
                self.len(),
                other.len()
            )))
        }
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(Arc::clone(&self.layout), values)
    }

    /// Splits into one tensor per segment, in layout order.
    pub fn unflatten(&self) -> Vec<Tensor> {
        self.layout
            .segments()
            .iter()
            .map(|s| {
                Tensor::new(s.shape.clone(), self.values[s.range()].to_vec())
                    .expect("segment shape matches its range")
            })
            .collect()
    }

    /// Inverse of [`unflatten`](Self::unflatten).
    pub fn flatten(layout: Arc<Layout>, tensors: &[Tensor]) -> Result<Self> {
        if tensors.len() != layout.segments().len() {
            return Err(Error::LayoutMismatch(format!(
                "expected {} tensors, got {}",
                layout.segments().len(),
                tensors.len()
            )));
        }
        let mut values = Vec::with_capacity(layout.len());
        for (seg, t) in layout.segments().iter().zip(tensors) {
            if t.shape() != seg.shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    layer: format!("layer {} {}", seg.layer, seg.role),
                    expected: format!("{:?}", seg.shape),
                    actual: format!("{:?}", t.shape()),
                });
            }
            values.extend_from_slice(t.data());
        }
        Self::new(layout, values)
    }

    /// Euclidean distance to `other`.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.check_layout(other, "distance")?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout() -> Arc<Layout> {
        Arc::new(Layout::packed([
            (0, Role::Weight, vec![3, 2]),
            (0, Role::Bias, vec![2]),
            (1, Role::Weight, vec![2, 1]),
        ]))
    }

    #[test]
    fn segments_tile_the_range() {
        let l = layout();
        assert_eq!(l.len(), 10);
        let mut next = 0;
        for s in l.segments() {
            assert_eq!(s.offset, next);
            next = s.range().end;
        }
        assert_eq!(next, l.len());
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert!(ParameterVector::new(layout(), vec![0.0; 9]).is_err());
    }

    #[test]
    fn layouts_compare_structurally() {
        let a = ParameterVector::zeros(layout());
        let b = ParameterVector::zeros(layout());
        assert!(a.same_layout(&b));
        let other = Arc::new(Layout::packed([(0, Role::Weight, vec![10])]));
        let c = ParameterVector::zeros(other);
        assert!(a.check_layout(&c, "test").is_err());
    }

    proptest! {
        #[test]
        fn flatten_unflatten_round_trip(values in prop::collection::vec(-1e6f64..1e6, 10)) {
            let v = ParameterVector::new(layout(), values).unwrap();
            let back = ParameterVector::flatten(layout(), &v.unflatten()).unwrap();
            prop_assert_eq!(
                back.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                v.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
