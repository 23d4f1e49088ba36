//! Dense containers shared by every stage of the pipeline, plus the uniform
//! resampling primitives (bilinear lookup, decimation, bilinear resize).
//!
//! Everything is stored row-major with the last axis fastest and computed in
//! `f64`; files store `f32` (see [`io`]).

pub mod io;
mod sample;

pub use sample::{
    bilinear_at, bilinear_plane, decimate, decimate_plane, resize_bilinear, BilinearStencil,
};

use crate::error::{domain, Error, Result};

/// An n-d array of up to four axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 {
            return domain(format!("tensor rank must be 1..=4, got {}", shape.len()));
        }
        if shape.contains(&0) {
            return domain(format!("tensor extents must be >= 1, got {shape:?}"));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return domain(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(shape, vec![0.0; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// A single H×W real grid: one channel of a feature map, an attention map,
/// a Laplacian response, a density field.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return domain(format!("plane extents must be >= 1, got {height}x{width}"));
        }
        if data.len() != height * width {
            return domain(format!(
                "{height}x{width} plane needs {} values, got {}",
                height * width,
                data.len()
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "plane extents must be >= 1");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self::new(height, width, data).expect("extents checked by caller")
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.width + j] = value;
    }

    /// Border-clamped read with signed indices.
    #[inline]
    pub fn get_clamped(&self, i: isize, j: isize) -> f64 {
        let i = i.clamp(0, self.height as isize - 1) as usize;
        let j = j.clamp(0, self.width as isize - 1) as usize;
        self.get(i, j)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn same_extent(&self, other: &Plane) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// A C×H×W feature map with C ≥ 1, H ≥ 2, W ≥ 2.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels < 1 || height < 2 || width < 2 {
            return domain(format!(
                "feature map needs C>=1, H>=2, W>=2, got {channels}x{height}x{width}"
            ));
        }
        if data.len() != channels * height * width {
            return domain(format!(
                "{channels}x{height}x{width} feature map needs {} values, got {}",
                channels * height * width,
                data.len()
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(channels, height, width, vec![0.0; channels * height * width])
    }

    pub fn from_planes(planes: &[Plane]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::Domain("feature map needs at least one channel".into()))?;
        if planes.iter().any(|p| !p.same_extent(first)) {
            return domain("all channels must share spatial extents");
        }
        let data = planes.iter().flat_map(|p| p.data().iter().copied()).collect();
        Self::new(planes.len(), first.height(), first.width(), data)
    }

    pub fn from_plane(plane: Plane) -> Result<Self> {
        let (h, w) = (plane.height(), plane.width());
        Self::new(1, h, w, plane.into_data())
    }

    /// Accepts rank-3 (C,H,W) tensors and rank-2 (H,W) tensors as one channel.
    pub fn from_tensor(tensor: Tensor) -> Result<Self> {
        match *tensor.shape() {
            [c, h, w] => Self::new(c, h, w, tensor.into_data()),
            [h, w] => Self::new(1, h, w, tensor.into_data()),
            ref other => domain(format!("expected a (C,H,W) or (H,W) tensor, got {other:?}")),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.channels, self.height, self.width],
            self.data.clone(),
        )
        .expect("feature map extents are valid tensor extents")
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[(c * self.height + i) * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, c: usize, i: usize, j: usize, value: f64) {
        self.data[(c * self.height + i) * self.width + j] = value;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn plane(&self, c: usize) -> Plane {
        Plane::new(self.height, self.width, self.channel(c).to_vec())
            .expect("channel slice has plane extents")
    }

    pub fn planes(&self) -> Vec<Plane> {
        (0..self.channels).map(|c| self.plane(c)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn max_abs_diff(&self, other: &FeatureMap) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-pixel class ids in `0..classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    classes: usize,
    data: Vec<usize>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, classes: usize, data: Vec<usize>) -> Result<Self> {
        if height == 0 || width == 0 || classes == 0 {
            return domain("label map needs non-zero extents and at least one class");
        }
        if data.len() != height * width {
            return domain(format!(
                "{height}x{width} label map needs {} entries, got {}",
                height * width,
                data.len()
            ));
        }
        if let Some(bad) = data.iter().find(|&&k| k >= classes) {
            return domain(format!("label {bad} out of range for {classes} classes"));
        }
        Ok(Self {
            height,
            width,
            classes,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        classes: usize,
        mut f: impl FnMut(usize, usize) -> usize,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self::new(height, width, classes, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> usize {
        self.data[i * self.width + j]
    }

    pub fn data(&self) -> &[usize] {
        &self.data
    }

    /// Indicator plane of one class.
    pub fn one_hot(&self, class: usize) -> Plane {
        Plane::from_fn(self.height, self.width, |i, j| {
            if self.get(i, j) == class {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Pixels whose label differs from at least one 4-neighbour.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let (h, w) = (self.height, self.width);
        let mut mask = vec![false; h * w];
        for i in 0..h {
            for j in 0..w {
                let k = self.get(i, j);
                let differs = (i > 0 && self.get(i - 1, j) != k)
                    || (i + 1 < h && self.get(i + 1, j) != k)
                    || (j > 0 && self.get(i, j - 1) != k)
                    || (j + 1 < w && self.get(i, j + 1) != k);
                mask[i * w + j] = differs;
            }
        }
        mask
    }
}
