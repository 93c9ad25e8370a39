//! Flat parameter and gradient vectors with a named segment table.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One named contiguous slice of a flat vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Segment table covering a flat vector exactly, without overlap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    segments: Vec<Segment>,
    total: usize,
}

impl Layout {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }
}

/// Builds a [`Layout`] by appending segments back to back.
#[derive(Debug, Default)]
pub struct LayoutBuilder {
    segments: Vec<Segment>,
    offset: usize,
}

impl LayoutBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, len: usize) -> &mut Self {
        let name = name.into();
        debug_assert!(
            self.segments.iter().all(|s| s.name != name),
            "duplicate segment {name}"
        );
        self.segments.push(Segment {
            name,
            offset: self.offset,
            len,
        });
        self.offset += len;
        self
    }

    pub fn build(self) -> Arc<Layout> {
        Arc::new(Layout {
            segments: self.segments,
            total: self.offset,
        })
    }
}

/// Flat model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Arc<Layout>,
}

impl ParamVector {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        ParamVector {
            values: vec![0.0; layout.total_len()],
            layout,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Replaces all values; the length must match the layout.
    pub fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.layout.total_len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameter values, got {}",
                self.layout.total_len(),
                values.len()
            )));
        }
        self.values = values;
        Ok(())
    }

    pub fn segment(&self, name: &str) -> &[f64] {
        let s = self
            .layout
            .segment(name)
            .unwrap_or_else(|| panic!("unknown segment {name}"));
        &self.values[s.offset..s.offset + s.len]
    }

    pub fn segment_mut(&mut self, name: &str) -> &mut [f64] {
        let s = self
            .layout
            .segment(name)
            .unwrap_or_else(|| panic!("unknown segment {name}"))
            .clone();
        &mut self.values[s.offset..s.offset + s.len]
    }
}

/// Flat gradient with the same layout as its owning [`ParamVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector {
    values: Vec<f64>,
    layout: Arc<Layout>,
}

impl GradVector {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        GradVector {
            values: vec![0.0; layout.total_len()],
            layout,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn segment(&self, name: &str) -> &[f64] {
        let s = self
            .layout
            .segment(name)
            .unwrap_or_else(|| panic!("unknown segment {name}"));
        &self.values[s.offset..s.offset + s.len]
    }

    pub fn segment_mut(&mut self, name: &str) -> &mut [f64] {
        let s = self
            .layout
            .segment(name)
            .unwrap_or_else(|| panic!("unknown segment {name}"))
            .clone();
        &mut self.values[s.offset..s.offset + s.len]
    }

    pub fn zero_segment(&mut self, name: &str) {
        for v in self.segment_mut(name) {
            *v = 0.0;
        }
    }
}
