use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const NUM_CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    /// The slice of the test split handed to clients for their own testing.
    LocalTest,
    GlobalTest,
}

/// Grayscale images stored as raw bytes; features are `byte / 255`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        rows: usize,
        cols: usize,
        pixels: Vec<u8>,
        labels: Vec<u8>,
        split: Split,
    ) -> Result<Self> {
        let dim = rows * cols;
        if dim == 0 {
            return Err(Error::Empty("image dimensions"));
        }
        if pixels.len() != dim * labels.len() {
            return Err(Error::LengthMismatch {
                expected: dim * labels.len(),
                found: pixels.len(),
            });
        }
        if let Some(i) = labels.iter().position(|&l| usize::from(l) >= NUM_CLASSES) {
            return Err(Error::InvalidParams(alloc::format!(
                "label {} at index {i} outside 0..{NUM_CLASSES}",
                labels[i]
            )));
        }
        Ok(Self {
            rows,
            cols,
            pixels,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image_bytes(&self, i: usize) -> &[u8] {
        let d = self.dim();
        &self.pixels[i * d..(i + 1) * d]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Normalised feature `j` of example `i`.
    pub fn feature(&self, i: usize, j: usize) -> f64 {
        f64::from(self.pixels[i * self.dim() + j]) / 255.0
    }

    /// Copies the examples at `indices` into a new dataset.
    pub fn select(&self, indices: &[usize], split: Split) -> Self {
        let d = self.dim();
        let mut pixels = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            pixels.extend_from_slice(self.image_bytes(i));
            labels.push(self.labels[i]);
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            pixels,
            labels,
            split,
        }
    }

    /// Contiguous range `[start, end)` as a new dataset.
    pub fn range(&self, start: usize, end: usize, split: Split) -> Self {
        let idx: Vec<usize> = (start..end.min(self.len())).collect();
        self.select(&idx, split)
    }

    pub fn label_histogram(&self, indices: &[usize]) -> [usize; NUM_CLASSES] {
        let mut h = [0; NUM_CLASSES];
        for &i in indices {
            h[usize::from(self.labels[i])] += 1;
        }
        h
    }
}
