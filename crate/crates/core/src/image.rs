use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A flat image with pixel values in `[0, 1]`.
///
/// Multi-channel images are stored channel-minor: the value for channel `c`
/// at spatial position `(row, col)` lives at index
/// `(row * width + col) * channels + c`. Every channel component is treated
/// as an independent coordinate, so an RGB image with `q` spatial pixels has
/// `3q` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub pixels: Vec<f64>,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub label: Option<usize>,
}

impl Image {
    pub fn new(pixels: Vec<f64>, width: usize, height: usize, channels: usize) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::input(format!(
                "image dimensions must be positive, got {width}x{height}x{channels}"
            )));
        }
        if width * height * channels != pixels.len() {
            return Err(Error::input(format!(
                "image shape {width}x{height}x{channels} does not match {} pixels",
                pixels.len()
            )));
        }
        if let Some((i, v)) = pixels
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::input(format!("pixel {i} has value {v} outside [0, 1]")));
        }
        Ok(Self {
            pixels,
            width,
            height,
            channels,
            label: None,
        })
    }

    /// A single-row grayscale image, handy for vector-shaped inputs.
    pub fn from_vec(pixels: Vec<f64>) -> Result<Self> {
        let n = pixels.len();
        Self::new(pixels, n, 1, 1)
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    /// Number of coordinates (`width * height * channels`).
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    /// Copy of this image with `delta[k]` added at `coords[k]`, clipped to `[0, 1]`.
    pub fn perturbed(&self, coords: &[usize], delta: &[f64]) -> Image {
        let mut out = self.clone();
        for (&i, &d) in coords.iter().zip(delta) {
            out.pixels[i] = (out.pixels[i] + d).clamp(0.0, 1.0);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_shape_mismatch() {
        assert!(Image::new(vec![0.0; 5], 2, 2, 1).is_err());
        assert!(Image::new(vec![0.0; 12], 2, 2, 3).is_ok());
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(Image::from_vec(vec![0.0, 1.5]).is_err());
        assert!(Image::from_vec(vec![f64::NAN]).is_err());
    }

    #[test]
    fn perturbation_is_sparse_and_clipped() {
        let img = Image::from_vec(vec![0.5, 0.95, 0.1]).unwrap();
        let p = img.perturbed(&[1, 2], &[0.1, -0.2]);
        assert_eq!(p.pixels, vec![0.5, 1.0, 0.0]);
    }
}
