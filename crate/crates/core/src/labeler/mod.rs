//! Per-pixel labeling: the convolutional scorer, pixel softmax, argmax
//! labels, and the biased E-step relabeling.

mod cnn;
mod estep;
mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::{softmax_backward, softmax_vec};

pub use cnn::{Cnn, CnnConfig, CnnTrace, Conv2d};
pub use estep::{claim_quotas, estep_labels, quota_labels, quota_size};
pub use io::{read_ppm, write_ppm};

pub const MIN_SIDE: usize = 8;

/// RGB image, channel-major (`[3][H][W]`), values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height < MIN_SIDE || width < MIN_SIDE {
            return Err(Error::Data(format!(
                "image is {height}x{width}, both sides must be at least {MIN_SIDE}"
            )));
        }
        if pixels.len() != 3 * height * width {
            return Err(Error::ShapeMismatch {
                expected: vec![3, height, width],
                actual: vec![pixels.len()],
            });
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Image {
            height,
            width,
            pixels,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Image::new(height, width, vec![0.0; 3 * height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    /// Channel-major data.
    pub fn data(&self) -> &[f64] {
        &self.pixels
    }

    pub fn rgb(&self, y: usize, x: usize) -> [f64; 3] {
        let m = self.pixel_count();
        let j = y * self.width + x;
        [self.pixels[j], self.pixels[m + j], self.pixels[2 * m + j]]
    }
}

/// `[K+1][H][W]` raw class scores; class 0 is background.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMaps {
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

/// Softmax of [`ScoreMaps`] over the class axis, same layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMaps {
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ProbMaps {
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, class: usize, pixel: usize) -> f64 {
        self.data[class * self.pixel_count() + pixel]
    }

    /// Class distribution at one pixel.
    pub fn at(&self, pixel: usize) -> Vec<f64> {
        (0..self.classes).map(|c| self.get(c, pixel)).collect()
    }
}

/// `[D][H][W]` activations of the layer feeding the score layer.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelFeatures {
    pub dim: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl PixelFeatures {
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, d: usize, pixel: usize) -> f64 {
        self.data[d * self.pixel_count() + pixel]
    }
}

/// Row-major class labels, serialized as `{"h","w","labels"}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    #[serde(rename = "h")]
    pub height: usize,
    #[serde(rename = "w")]
    pub width: usize,
    pub labels: Vec<usize>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: vec![height, width],
                actual: vec![labels.len()],
            });
        }
        Ok(LabelMap {
            height,
            width,
            labels,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.labels.len()
    }

    pub fn count(&self, class: usize) -> usize {
        self.labels.iter().filter(|&&c| c == class).count()
    }

    /// Check every label is in `0..classes`.
    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.labels.len() != self.height * self.width {
            return Err(Error::ShapeMismatch {
                expected: vec![self.height, self.width],
                actual: vec![self.labels.len()],
            });
        }
        match self.labels.iter().find(|&&c| c >= classes) {
            Some(c) => Err(Error::Data(format!("label {c} outside 0..{classes}"))),
            None => Ok(()),
        }
    }
}

/// Per-pixel softmax over all `K+1` classes, background included.
pub fn pixel_softmax(scores: &ScoreMaps) -> ProbMaps {
    let m = scores.height * scores.width;
    let c = scores.classes;
    let mut data = vec![0.0; c * m];
    let mut column = vec![0.0; c];
    for j in 0..m {
        for (k, v) in column.iter_mut().enumerate() {
            *v = scores.data[k * m + j];
        }
        for (k, p) in softmax_vec(&column).into_iter().enumerate() {
            data[k * m + j] = p;
        }
    }
    ProbMaps {
        classes: c,
        height: scores.height,
        width: scores.width,
        data,
    }
}

/// Pull per-class probability gradients back to the raw scores.
pub fn pixel_softmax_backward(probs: &ProbMaps, dprobs: &[f64]) -> Vec<f64> {
    let m = probs.pixel_count();
    let c = probs.classes;
    let mut dscores = vec![0.0; c * m];
    let mut dp = vec![0.0; c];
    for j in 0..m {
        let p = probs.at(j);
        for (k, v) in dp.iter_mut().enumerate() {
            *v = dprobs[k * m + j];
        }
        for (k, g) in softmax_backward(&p, &dp).into_iter().enumerate() {
            dscores[k * m + j] = g;
        }
    }
    dscores
}

/// Index of the largest value, ties to the smallest index.
pub(crate) fn argmax(values: impl IntoIterator<Item = (usize, f64)>) -> usize {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (i, v) in values {
        if v > best.1 || best.0 == usize::MAX {
            best = (i, v);
        }
    }
    best.0
}

/// Per-pixel argmax of the class probabilities.
pub fn predict_labels(probs: &ProbMaps) -> LabelMap {
    let m = probs.pixel_count();
    let labels = (0..m)
        .map(|j| argmax((0..probs.classes).map(|k| (k, probs.get(k, j)))))
        .collect();
    LabelMap {
        height: probs.height,
        width: probs.width,
        labels,
    }
}
