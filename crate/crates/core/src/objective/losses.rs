use crate::attention::{gaussian_blur, laplacian, AttentionMap};
use crate::error::{domain, Result};
use crate::spectral::{high_band_power_grad, DEFAULT_NYQUIST};
use crate::tensor::{FeatureMap, LabelMap, Plane};
use crate::warp::{map_coordinates, CoordinateGrid, GaussianKernel};

/// Floor `κ` used when turning the label-boundary energy into attention.
pub const SHF_ATTENTION_FLOOR: f64 = 0.1;

/// Weights of the auxiliary losses in the total objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub fm: f64,
    pub shf: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { fm: 0.01, shf: 100.0 }
    }
}

impl LossWeights {
    pub fn new(fm: f64, shf: f64) -> Result<Self> {
        if !(fm >= 0.0 && shf >= 0.0) || !fm.is_finite() || !shf.is_finite() {
            return domain(format!("loss weights must be finite and >= 0, got ({fm}, {shf})"));
        }
        Ok(Self { fm, shf })
    }
}

/// Frequency-modulation loss: high-band power averaged over channels.
pub fn fm_loss(map: &FeatureMap) -> Result<f64> {
    Ok(fm_loss_grad(map, DEFAULT_NYQUIST)?.0)
}

/// Frequency-modulation loss at threshold `nyquist` and its gradient.
pub fn fm_loss_grad(map: &FeatureMap, nyquist: f64) -> Result<(f64, FeatureMap)> {
    let c = map.channels() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(map.data().len());
    for plane in map.planes() {
        let (v, g) = high_band_power_grad(&plane, nyquist)?;
        value += v / c;
        grad.extend(g.into_data().into_iter().map(|x| x / c));
    }
    Ok((value, FeatureMap::new(map.channels(), map.height(), map.width(), grad)?))
}

/// Label-boundary attention: `Σ_k |Laplacian(onehot_k)|`, blurred.
pub fn shf_attention(labels: &LabelMap, blur_sigma: f64) -> Result<AttentionMap> {
    let mut energy = Plane::zeros(labels.height(), labels.width());
    for k in 0..labels.classes() {
        for (e, l) in energy.data_mut().iter_mut().zip(laplacian(&labels.one_hot(k)).data()) {
            *e += l.abs();
        }
    }
    let radius = (3.0 * blur_sigma).ceil().max(1.0) as usize;
    AttentionMap::from_energy(&gaussian_blur(&energy, blur_sigma, radius), SHF_ATTENTION_FLOOR)
}

/// Target sampling grid that concentrates samples on label boundaries.
pub fn shf_targets(labels: &LabelMap, blur_sigma: f64, kernel: GaussianKernel) -> Result<CoordinateGrid> {
    map_coordinates(&shf_attention(labels, blur_sigma)?, kernel)
}

fn check_same(a: &CoordinateGrid, b: &CoordinateGrid) -> Result<()> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return domain(format!(
            "grid extents differ: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        ));
    }
    Ok(())
}

/// `‖u − û‖₂ + ‖v − v̂‖₂` over the flattened grids.
pub fn shf_loss(grid: &CoordinateGrid, target: &CoordinateGrid) -> Result<f64> {
    Ok(shf_loss_grad(grid, target)?.0)
}

/// [`shf_loss`] with its gradient with respect to `grid`'s u and v planes.
/// Where a norm vanishes its subgradient is taken as zero.
pub fn shf_loss_grad(grid: &CoordinateGrid, target: &CoordinateGrid) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_same(grid, target)?;
    let axis = |a: &[f64], b: &[f64]| {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
        let grad = if norm > 0.0 {
            diff.iter().map(|d| d / norm).collect()
        } else {
            vec![0.0; diff.len()]
        };
        (norm, grad)
    };
    let (nu, gu) = axis(grid.u_values(), target.u_values());
    let (nv, gv) = axis(grid.v_values(), target.v_values());
    Ok((nu + nv, gu, gv))
}

/// Mean per-pixel softmax cross-entropy of class scores against labels.
pub fn seg_loss(pred: &FeatureMap, labels: &LabelMap) -> Result<f64> {
    Ok(seg_loss_grad(pred, labels)?.0)
}

/// [`seg_loss`] with its gradient with respect to the class scores.
pub fn seg_loss_grad(pred: &FeatureMap, labels: &LabelMap) -> Result<(f64, FeatureMap)> {
    if (pred.height(), pred.width()) != (labels.height(), labels.width()) {
        return domain("prediction and label extents differ");
    }
    let k = pred.channels();
    if labels.classes() > k || labels.data().iter().any(|&l| l >= k) {
        return domain(format!("labels exceed the {k} predicted classes"));
    }
    let n = pred.plane_len();
    let scores = pred.data();
    let mut grad = vec![0.0; scores.len()];
    let mut loss = 0.0;
    for (p, &label) in labels.data().iter().enumerate() {
        let max = (0..k).map(|c| scores[c * n + p]).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = (0..k).map(|c| (scores[c * n + p] - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - scores[label * n + p];
        for c in 0..k {
            let prob = (scores[c * n + p] - log_z).exp();
            grad[c * n + p] = (prob - f64::from(u8::from(c == label))) / n as f64;
        }
    }
    Ok((loss / n as f64, FeatureMap::new(k, pred.height(), pred.width(), grad)?))
}

/// `L_seg + λ_FM·L_FM + λ_SHF·L_SHF`.
pub fn total_loss(seg: f64, fm: f64, shf: f64, weights: LossWeights) -> f64 {
    seg + weights.fm * fm + weights.shf * shf
}

/// Poly schedule `base·(1 − iter/max_iter)^0.9`.
pub fn poly_lr(base: f64, iter: usize, max_iter: usize) -> f64 {
    if max_iter == 0 {
        return base;
    }
    base * (1.0 - iter as f64 / max_iter as f64).max(0.0).powf(0.9)
}
