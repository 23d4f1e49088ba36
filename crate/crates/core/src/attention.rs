//! Attention generation: difference-aware convolution, pyramid pooling and
//! a joint spatial softmax, plus the Laplacian used for energy maps.
//!
//! All spatial filters use replicate padding.

use crate::error::{config, domain, Result};
use crate::tensor::{resize_bilinear, FeatureMap, Plane};

/// Pyramid bin sizes of the pooling branch.
pub const PSP_BINS: [usize; 4] = [1, 2, 3, 7];

/// Floor `κ` used when turning a Laplacian energy into attention.
pub const LAPLACIAN_ATTENTION_FLOOR: f64 = 0.01;

/// Softmax over all entries of a raw kernel.
pub fn kernel_softmax(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = raw.iter().map(|&r| (r - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Vector-Jacobian product of [`kernel_softmax`], given its output.
pub fn kernel_softmax_vjp(weights: &[f64], grad: &[f64]) -> Vec<f64> {
    let dot: f64 = weights.iter().zip(grad).map(|(w, g)| w * g).sum();
    weights.iter().zip(grad).map(|(w, g)| w * (g - dot)).collect()
}

/// Depthwise difference-aware convolution weights: one raw `k×k` kernel
/// per channel, softmax-normalised on use.
#[derive(Debug, Clone, PartialEq)]
pub struct DaConvParams {
    kernel: usize,
    channels: usize,
    raw: Vec<f64>,
}

impl DaConvParams {
    pub fn new(kernel: usize, channels: usize, raw: Vec<f64>) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return config(format!("kernel extent must be odd, got {kernel}"));
        }
        if channels == 0 {
            return config("DAConv needs at least one channel");
        }
        if raw.len() != channels * kernel * kernel {
            return config(format!(
                "expected {} raw weights, got {}",
                channels * kernel * kernel,
                raw.len()
            ));
        }
        Ok(Self {
            kernel,
            channels,
            raw,
        })
    }

    pub fn zeros(kernel: usize, channels: usize) -> Result<Self> {
        Self::new(kernel, channels, vec![0.0; channels * kernel * kernel])
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.raw
    }

    /// Softmax-normalised weights, one `k×k` block per channel.
    pub fn weights(&self) -> Vec<f64> {
        self.raw
            .chunks_exact(self.kernel * self.kernel)
            .flat_map(kernel_softmax)
            .collect()
    }

    /// Maps a gradient on the normalised weights back to the raw weights.
    pub fn raw_vjp(&self, grad_weights: &[f64]) -> Vec<f64> {
        let kk = self.kernel * self.kernel;
        self.weights()
            .chunks_exact(kk)
            .zip(grad_weights.chunks_exact(kk))
            .flat_map(|(w, g)| kernel_softmax_vjp(w, g))
            .collect()
    }
}

/// Difference-aware convolution with explicit weights:
/// `out = Σ_pq W_pq·(X_ij − [pq ≠ 0]·X_{i+p,j+q})`.
pub fn daconv_with_weights(map: &FeatureMap, kernel: usize, weights: &[f64]) -> Result<FeatureMap> {
    if kernel.is_multiple_of(2) {
        return config(format!("kernel extent must be odd, got {kernel}"));
    }
    let kk = kernel * kernel;
    if weights.len() != map.channels() * kk {
        return domain(format!(
            "{} channels need {} weights, got {}",
            map.channels(),
            map.channels() * kk,
            weights.len()
        ));
    }
    let r = (kernel / 2) as isize;
    let centre = kk / 2;
    let mut out = FeatureMap::zeros(map.channels(), map.height(), map.width())?;
    for c in 0..map.channels() {
        let plane = map.plane(c);
        let w = &weights[c * kk..(c + 1) * kk];
        let total: f64 = w.iter().sum();
        let dst = out.channel_mut(c);
        for i in 0..plane.height() {
            for j in 0..plane.width() {
                let mut acc = total * plane.get(i, j);
                for (idx, &wpq) in w.iter().enumerate() {
                    if idx == centre {
                        continue;
                    }
                    let p = (idx / kernel) as isize - r;
                    let q = (idx % kernel) as isize - r;
                    acc -= wpq * plane.get_clamped(i as isize + p, j as isize + q);
                }
                dst[i * plane.width() + j] = acc;
            }
        }
    }
    Ok(out)
}

/// Difference-aware convolution with softmax-normalised kernels.
pub fn daconv(map: &FeatureMap, params: &DaConvParams) -> Result<FeatureMap> {
    if params.channels != map.channels() {
        return domain(format!(
            "DAConv has {} channels, feature map has {}",
            params.channels,
            map.channels()
        ));
    }
    daconv_with_weights(map, params.kernel, &params.weights())
}

/// Gradient of a scalar with respect to the normalised DAConv weights,
/// given its gradient `grad` with respect to the DAConv output.
pub fn daconv_weight_vjp(map: &FeatureMap, kernel: usize, grad: &FeatureMap) -> Vec<f64> {
    let kk = kernel * kernel;
    let r = (kernel / 2) as isize;
    let centre = kk / 2;
    let mut out = vec![0.0; map.channels() * kk];
    for c in 0..map.channels() {
        let plane = map.plane(c);
        let g = grad.channel(c);
        let gw = &mut out[c * kk..(c + 1) * kk];
        for i in 0..plane.height() {
            for j in 0..plane.width() {
                let gij = g[i * plane.width() + j];
                if gij == 0.0 {
                    continue;
                }
                let x = plane.get(i, j);
                for (idx, acc) in gw.iter_mut().enumerate() {
                    if idx == centre {
                        *acc += gij * x;
                    } else {
                        let p = (idx / kernel) as isize - r;
                        let q = (idx % kernel) as isize - r;
                        *acc += gij * (x - plane.get_clamped(i as isize + p, j as isize + q));
                    }
                }
            }
        }
    }
    out
}

/// 5-point Laplacian `[[0,1,0],[1,−4,1],[0,1,0]]`.
pub fn laplacian(plane: &Plane) -> Plane {
    Plane::from_fn(plane.height(), plane.width(), |i, j| {
        let (i, j) = (i as isize, j as isize);
        plane.get_clamped(i - 1, j)
            + plane.get_clamped(i + 1, j)
            + plane.get_clamped(i, j - 1)
            + plane.get_clamped(i, j + 1)
            - 4.0 * plane.get_clamped(i, j)
    })
}

/// Separable Gaussian blur with a normalised kernel truncated at `radius`.
pub fn gaussian_blur(plane: &Plane, sigma: f64, radius: usize) -> Plane {
    let taps: Vec<f64> = (-(radius as isize)..=radius as isize)
        .map(|t| (-((t * t) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.into_iter().map(|t| t / norm).collect();
    let r = radius as isize;
    let rows = Plane::from_fn(plane.height(), plane.width(), |i, j| {
        taps.iter()
            .enumerate()
            .map(|(t, w)| w * plane.get_clamped(i as isize + t as isize - r, j as isize))
            .sum()
    });
    Plane::from_fn(plane.height(), plane.width(), |i, j| {
        taps.iter()
            .enumerate()
            .map(|(t, w)| w * rows.get_clamped(i as isize, j as isize + t as isize - r))
            .sum()
    })
}

fn adaptive_bounds(extent: usize, bins: usize, i: usize) -> (usize, usize) {
    let start = i * extent / bins;
    let end = ((i + 1) * extent).div_ceil(bins);
    (start, end)
}

fn adaptive_avg_pool(plane: &Plane, bins: usize) -> Plane {
    Plane::from_fn(bins, bins, |a, b| {
        let (r0, r1) = adaptive_bounds(plane.height(), bins, a);
        let (c0, c1) = adaptive_bounds(plane.width(), bins, b);
        let mut acc = 0.0;
        for i in r0..r1 {
            for j in c0..c1 {
                acc += plane.get(i, j);
            }
        }
        acc / ((r1 - r0) * (c1 - c0)) as f64
    })
}

/// Pyramid pooling: for each bin size, adaptive average pooling followed by
/// corner-aligned bilinear upsampling. Output channels are grouped by bin.
pub fn psp_pool(map: &FeatureMap, bins: &[usize]) -> Result<FeatureMap> {
    let Some(&largest) = bins.iter().max() else {
        return config("pyramid needs at least one bin size");
    };
    if bins.contains(&0) {
        return config("pyramid bin sizes must be >= 1");
    }
    if map.height() < largest || map.width() < largest {
        return config(format!(
            "pyramid bin {largest} exceeds the {}x{} map",
            map.height(),
            map.width()
        ));
    }
    let mut planes = Vec::with_capacity(bins.len() * map.channels());
    for &b in bins {
        for plane in map.planes() {
            let pooled = adaptive_avg_pool(&plane, b);
            planes.push(resize_bilinear(&pooled, map.height(), map.width()));
        }
    }
    FeatureMap::from_planes(&planes)
}

/// Strictly positive spatial weighting that sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    plane: Plane,
}

impl AttentionMap {
    /// Normalises a strictly positive, finite plane to unit sum.
    pub fn new(plane: Plane) -> Result<Self> {
        if plane.data().iter().any(|&x| !(x.is_finite() && x > 0.0)) {
            return domain("attention entries must be finite and > 0");
        }
        let sum = plane.sum();
        Ok(Self {
            plane: plane.map(|x| x / sum),
        })
    }

    pub fn uniform(height: usize, width: usize) -> Self {
        Self {
            plane: Plane::filled(height, width, 1.0 / (height * width) as f64),
        }
    }

    /// Joint softmax over all positions of a logit plane.
    pub fn from_logits(logits: &Plane) -> Self {
        let max = logits.max();
        let exp = logits.map(|x| (x - max).exp());
        let sum = exp.sum();
        Self {
            plane: exp.map(|x| x / sum),
        }
    }

    /// `S ∝ e + κ·max(e)` for a non-negative energy `e`; uniform if `e ≡ 0`.
    pub fn from_energy(energy: &Plane, floor: f64) -> Result<Self> {
        if energy.data().iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
            return domain("energy must be finite and non-negative");
        }
        if floor <= 0.0 {
            return domain(format!("energy floor must be > 0, got {floor}"));
        }
        let peak = energy.max();
        if peak <= 0.0 {
            return Ok(Self::uniform(energy.height(), energy.width()));
        }
        Self::new(energy.map(|x| x + floor * peak))
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn into_plane(self) -> Plane {
        self.plane
    }

    pub fn height(&self) -> usize {
        self.plane.height()
    }

    pub fn width(&self) -> usize {
        self.plane.width()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.plane.get(i, j)
    }

    /// Gradient with respect to the logits of [`AttentionMap::from_logits`]
    /// given the gradient with respect to the attention values.
    pub fn logits_vjp(&self, grad: &Plane) -> Plane {
        let dot: f64 = self
            .plane
            .data()
            .iter()
            .zip(grad.data())
            .map(|(s, g)| s * g)
            .sum();
        Plane::from_fn(self.height(), self.width(), |i, j| {
            self.plane.get(i, j) * (grad.get(i, j) - dot)
        })
    }
}

/// Parameters of the attention generator: depthwise DAConv, and a 1×1
/// projection of `[DAConv(X), PSP(X)]` (5·C channels) to one logit.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub daconv: DaConvParams,
    pub projection: Vec<f64>,
    pub bias: f64,
}

impl AttentionParams {
    /// Zero projection (uniform attention) and zero raw DAConv weights.
    pub fn zeros(channels: usize) -> Result<Self> {
        Ok(Self {
            daconv: DaConvParams::zeros(3, channels)?,
            projection: vec![0.0; (1 + PSP_BINS.len()) * channels],
            bias: 0.0,
        })
    }

    pub fn channels(&self) -> usize {
        self.daconv.channels()
    }
}

/// Gradients of [`generate_attention`] with respect to its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrad {
    /// Gradient on the raw (pre-softmax) DAConv weights.
    pub daconv_raw: Vec<f64>,
    pub projection: Vec<f64>,
    pub bias: f64,
}

/// Forward state of [`generate_attention`], kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionForward {
    features: FeatureMap,
    attention: AttentionMap,
}

impl AttentionForward {
    pub fn attention(&self) -> &AttentionMap {
        &self.attention
    }

    /// Concatenated `[DAConv(X), PSP(X)]` features.
    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn vjp(&self, input: &FeatureMap, params: &AttentionParams, grad: &Plane) -> AttentionGrad {
        let g_logit = self.attention.logits_vjp(grad);
        let projection: Vec<f64> = (0..self.features.channels())
            .map(|c| {
                self.features
                    .channel(c)
                    .iter()
                    .zip(g_logit.data())
                    .map(|(f, g)| f * g)
                    .sum()
            })
            .collect();
        let channels = params.channels();
        let mut g_da = FeatureMap::zeros(channels, input.height(), input.width())
            .expect("extents come from a valid map");
        for c in 0..channels {
            let p = params.projection[c];
            for (dst, g) in g_da.channel_mut(c).iter_mut().zip(g_logit.data()) {
                *dst = p * g;
            }
        }
        let g_weights = daconv_weight_vjp(input, params.daconv.kernel(), &g_da);
        AttentionGrad {
            daconv_raw: params.daconv.raw_vjp(&g_weights),
            projection,
            bias: g_logit.sum(),
        }
    }
}

/// Pooling branch of the generator; independent of the parameters.
pub fn pyramid_features(map: &FeatureMap) -> Result<FeatureMap> {
    psp_pool(map, &PSP_BINS)
}

/// `S = Softmax(Conv1×1(Concat[DAConv(X), PSP(X)]))`, returning the
/// forward state needed for gradients.
pub fn generate_attention_forward(
    map: &FeatureMap,
    pyramid: &FeatureMap,
    params: &AttentionParams,
) -> Result<AttentionForward> {
    let channels = map.channels();
    if params.channels() != channels {
        return domain(format!(
            "attention parameters have {} channels, feature map has {channels}",
            params.channels()
        ));
    }
    if params.projection.len() != (1 + PSP_BINS.len()) * channels {
        return config(format!(
            "projection needs {} weights, got {}",
            (1 + PSP_BINS.len()) * channels,
            params.projection.len()
        ));
    }
    if pyramid.channels() != PSP_BINS.len() * channels
        || pyramid.height() != map.height()
        || pyramid.width() != map.width()
    {
        return domain("pyramid features do not match the input map");
    }
    let da = daconv(map, &params.daconv)?;
    let mut data = da.into_data();
    data.extend_from_slice(pyramid.data());
    let features = FeatureMap::new(params.projection.len(), map.height(), map.width(), data)?;
    let mut logits = Plane::filled(map.height(), map.width(), params.bias);
    for (c, &w) in params.projection.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (l, f) in logits.data_mut().iter_mut().zip(features.channel(c)) {
            *l += w * f;
        }
    }
    Ok(AttentionForward {
        features,
        attention: AttentionMap::from_logits(&logits),
    })
}

/// Attention map of a feature map under the given parameters.
pub fn generate_attention(map: &FeatureMap, params: &AttentionParams) -> Result<AttentionMap> {
    let pyramid = pyramid_features(map)?;
    Ok(generate_attention_forward(map, &pyramid, params)?.attention)
}

/// Attention from the blurred mean Laplacian magnitude of a feature map.
pub fn laplacian_attention(map: &FeatureMap) -> Result<AttentionMap> {
    let mut energy = Plane::zeros(map.height(), map.width());
    for plane in map.planes() {
        for (e, l) in energy.data_mut().iter_mut().zip(laplacian(&plane).data()) {
            *e += l.abs();
        }
    }
    let energy = energy.map(|e| e / map.channels() as f64);
    AttentionMap::from_energy(&gaussian_blur(&energy, 1.0, 3), LAPLACIAN_ATTENTION_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(c: usize, h: usize, w: usize) -> FeatureMap {
        let data = (0..c * h * w).map(|x| ((x * 37) % 11) as f64 / 7.0).collect();
        FeatureMap::new(c, h, w, data).unwrap()
    }

    #[test]
    fn kernel_softmax_examples() {
        let w = kernel_softmax(&[0.0; 9]);
        assert!(w.iter().all(|&x| (x - 1.0 / 9.0).abs() < 1e-15));
        let mut raw = [0.0; 9];
        raw[5] = 50.0;
        let w = kernel_softmax(&raw);
        assert!(w[5] > 1.0 - 1e-15 && w.iter().enumerate().all(|(i, &x)| i == 5 || x < 1e-20));
    }

    #[test]
    fn even_kernel_is_config_error() {
        assert!(matches!(DaConvParams::zeros(4, 1), Err(crate::Error::Config(_))));
        let fm = ramp(1, 4, 4);
        assert!(daconv_with_weights(&fm, 2, &[0.25; 4]).is_err());
    }

    #[test]
    fn daconv_constant_input_gives_centre_share() {
        let fm = FeatureMap::new(2, 5, 6, vec![3.0; 60]).unwrap();
        let out = daconv(&fm, &DaConvParams::zeros(3, 2).unwrap()).unwrap();
        assert!(out.data().iter().all(|&x| (x - 3.0 / 9.0).abs() < 1e-15));
    }

    #[test]
    fn daconv_step_edge_responds_at_the_edge() {
        let plane = Plane::from_fn(4, 4, |_, j| if j >= 2 { 1.0 } else { 0.0 });
        let fm = FeatureMap::from_plane(plane).unwrap();
        let out = daconv(&fm, &DaConvParams::zeros(3, 1).unwrap()).unwrap();
        // hand evaluation: column 0 → 0, column 1 → −3/9, column 2 → 1−5/9, column 3 → 1/9
        for i in 0..4 {
            assert!(out.get(0, i, 0).abs() < 1e-15);
            assert!((out.get(0, i, 1) + 3.0 / 9.0).abs() < 1e-15);
            assert!((out.get(0, i, 2) - 4.0 / 9.0).abs() < 1e-15);
            assert!((out.get(0, i, 3) - 1.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn laplacian_examples() {
        assert!(laplacian(&Plane::filled(4, 5, 2.5)).data().iter().all(|&x| x == 0.0));
        let imp = Plane::from_fn(5, 5, |i, j| if (i, j) == (2, 2) { 1.0 } else { 0.0 });
        let l = laplacian(&imp);
        for i in 0..5usize {
            for j in 0..5usize {
                let expect = match (i.abs_diff(2), j.abs_diff(2)) {
                    (0, 0) => -4.0,
                    (1, 0) | (0, 1) => 1.0,
                    _ => 0.0,
                };
                assert_eq!(l.get(i, j), expect);
            }
        }
        let ramp = laplacian(&Plane::from_fn(6, 6, |m, _| m as f64));
        for i in 1..5 {
            for j in 0..6 {
                assert_eq!(ramp.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn psp_examples() {
        let fm = FeatureMap::new(1, 9, 8, vec![1.5; 72]).unwrap();
        let out = psp_pool(&fm, &PSP_BINS).unwrap();
        assert_eq!(out.channels(), 4);
        assert!(out.data().iter().all(|&x| (x - 1.5).abs() < 1e-14));

        let fm = ramp(2, 8, 9);
        let out = psp_pool(&fm, &PSP_BINS).unwrap();
        for c in 0..2 {
            let mean = fm.plane(c).mean();
            assert!(out.channel(c).iter().all(|&x| (x - mean).abs() < 1e-13));
        }

        let fm = ramp(1, 7, 7);
        let out = psp_pool(&fm, &[7]).unwrap();
        assert!(out.max_abs_diff(&fm) < 1e-14);

        assert!(matches!(psp_pool(&ramp(1, 6, 9), &PSP_BINS), Err(crate::Error::Config(_))));
    }

    #[test]
    fn adaptive_bounds_match_overlapping_windows() {
        // 8 rows into 3 bins: [0,3), [2,6), [5,8)
        assert_eq!(adaptive_bounds(8, 3, 0), (0, 3));
        assert_eq!(adaptive_bounds(8, 3, 1), (2, 6));
        assert_eq!(adaptive_bounds(8, 3, 2), (5, 8));
    }

    #[test]
    fn zero_projection_gives_uniform_attention() {
        let fm = ramp(2, 9, 10);
        let s = generate_attention(&fm, &AttentionParams::zeros(2).unwrap()).unwrap();
        assert!(s.plane().data().iter().all(|&x| (x - 1.0 / 90.0).abs() < 1e-15));
    }

    #[test]
    fn energy_attention_is_uniform_for_zero_energy() {
        let s = AttentionMap::from_energy(&Plane::zeros(4, 4), 0.1).unwrap();
        assert_eq!(s, AttentionMap::uniform(4, 4));
        let s = laplacian_attention(&FeatureMap::new(1, 8, 8, vec![2.0; 64]).unwrap()).unwrap();
        assert_eq!(s, AttentionMap::uniform(8, 8));
    }

    #[test]
    fn laplacian_attention_prefers_texture() {
        let plane = Plane::from_fn(16, 16, |i, j| {
            if j >= 8 {
                ((i + j) % 2) as f64
            } else {
                0.5
            }
        });
        let s = laplacian_attention(&FeatureMap::from_plane(plane).unwrap()).unwrap();
        let (mut left, mut right) = (0.0, 0.0);
        for i in 0..16 {
            for j in 0..16 {
                if j < 8 {
                    left += s.get(i, j);
                } else {
                    right += s.get(i, j);
                }
            }
        }
        assert!(right > left);
    }

    fn arb_params(channels: usize) -> impl Strategy<Value = AttentionParams> {
        (
            proptest::collection::vec(-2.0..2.0f64, 9 * channels),
            proptest::collection::vec(-2.0..2.0f64, 5 * channels),
            -1.0..1.0f64,
        )
            .prop_map(move |(raw, projection, bias)| AttentionParams {
                daconv: DaConvParams::new(3, channels, raw).unwrap(),
                projection,
                bias,
            })
    }

    proptest! {
        #[test]
        fn kernel_softmax_sums_to_one(raw in proptest::collection::vec(-30.0..30.0f64, 9)) {
            let w = kernel_softmax(&raw);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(w.iter().all(|&x| x > 0.0));
        }

        #[test]
        fn daconv_constant_shift_moves_output_by_centre_weight(
            raw in proptest::collection::vec(-3.0..3.0f64, 9),
            shift in -5.0..5.0f64,
        ) {
            let params = DaConvParams::new(3, 1, raw).unwrap();
            let fm = ramp(1, 6, 7);
            let shifted = FeatureMap::new(1, 6, 7, fm.data().iter().map(|x| x + shift).collect()).unwrap();
            let a = daconv(&fm, &params).unwrap();
            let b = daconv(&shifted, &params).unwrap();
            let w00 = params.weights()[4];
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((y - x - shift * w00).abs() < 1e-12);
            }
        }

        #[test]
        fn attention_sums_to_one_and_is_positive(params in arb_params(2)) {
            let fm = ramp(2, 9, 11);
            let s = generate_attention(&fm, &params).unwrap();
            prop_assert!((s.plane().sum() - 1.0).abs() <= 1e-12);
            prop_assert!(s.plane().data().iter().all(|&x| x > 0.0));
        }

        #[test]
        fn attention_ignores_logit_shift(params in arb_params(1), shift in -20.0..20.0f64) {
            let fm = ramp(1, 8, 8);
            let a = generate_attention(&fm, &params).unwrap();
            let mut moved = params.clone();
            moved.bias += shift;
            let b = generate_attention(&fm, &moved).unwrap();
            for (x, y) in a.plane().data().iter().zip(b.plane().data()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}
