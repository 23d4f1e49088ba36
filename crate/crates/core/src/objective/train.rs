use std::io;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::losses::{fm_loss_grad, poly_lr, seg_loss_grad, shf_loss_grad, shf_targets, total_loss, LossWeights};
use crate::attention::{generate_attention_forward, pyramid_features, AttentionParams, DaConvParams, PSP_BINS};
use crate::demod::{Interpolator, LprmCascade, LprmStage, DEFAULT_DILATIONS, RELATIONS};
use crate::error::{config, domain, Result};
use crate::scenes::{Scene, SceneKind, SCENE_SIZE};
use crate::spectral::{aliasing_ratio_map, DEFAULT_NYQUIST};
use crate::tensor::{decimate, FeatureMap, Tensor};
use crate::warp::{boundary_density_ratio, map_coordinates_forward, sample_grid, sample_grid_vjp, CoordinateGrid, GaussianKernel};
use crate::Error;

/// Channels of the compressed feature fed to the relation cascade.
pub const COMPRESSED_CHANNELS: usize = 16;

fn default_lambda_fm() -> f64 {
    LossWeights::default().fm
}

fn default_lambda_shf() -> f64 {
    LossWeights::default().shf
}

fn default_stride() -> usize {
    2
}

fn default_dilations() -> Vec<usize> {
    DEFAULT_DILATIONS.to_vec()
}

fn default_momentum() -> f64 {
    0.9
}

fn default_nyquist() -> f64 {
    DEFAULT_NYQUIST
}

fn default_size() -> usize {
    SCENE_SIZE
}

/// Toy training configuration, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub task: SceneKind,
    pub iterations: usize,
    pub base_lr: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_lambda_fm")]
    pub lambda_fm: f64,
    #[serde(default = "default_lambda_shf")]
    pub lambda_shf: f64,
    /// Gaussian kernel radius; `round(max(H,W)/8)` when absent.
    #[serde(default)]
    pub sigma: Option<usize>,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_dilations")]
    pub dilations: Vec<usize>,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_nyquist")]
    pub nyquist: f64,
    #[serde(default = "default_size")]
    pub size: usize,
}

impl TrainConfig {
    pub fn new(task: SceneKind, iterations: usize, base_lr: f64) -> Self {
        Self {
            task,
            iterations,
            base_lr,
            seed: 0,
            lambda_fm: default_lambda_fm(),
            lambda_shf: default_lambda_shf(),
            sigma: None,
            stride: default_stride(),
            dilations: default_dilations(),
            momentum: default_momentum(),
            nyquist: default_nyquist(),
            size: default_size(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return config("iterations must be >= 1");
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return config(format!("base_lr must be > 0, got {}", self.base_lr));
        }
        LossWeights::new(self.lambda_fm, self.lambda_shf).map_err(|e| Error::Config(e.to_string()))?;
        if self.sigma == Some(0) {
            return config("sigma must be >= 1");
        }
        if self.stride < 2 {
            return config(format!("stride must be >= 2, got {}", self.stride));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return config("dilations must be a non-empty list of positive integers");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return config(format!("momentum must lie in [0,1), got {}", self.momentum));
        }
        if !(self.nyquist > 0.0 && self.nyquist <= 0.5) {
            return config(format!("nyquist must lie in (0, 1/2], got {}", self.nyquist));
        }
        if self.size < 8 {
            return config(format!("size must be >= 8, got {}", self.size));
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            fm: self.lambda_fm,
            shf: self.lambda_shf,
        }
    }

    pub fn kernel(&self) -> Result<GaussianKernel> {
        match self.sigma {
            Some(r) => GaussianKernel::new(r),
            None => Ok(GaussianKernel::for_extent(self.size, self.size)),
        }
    }
}

/// Trainable parameters: the attention generator, a 1×1 class head, a 1×1
/// compression to [`COMPRESSED_CHANNELS`], and the relation cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    channels: usize,
    classes: usize,
    pub attention: AttentionParams,
    pub head_weight: Vec<f64>,
    pub head_bias: Vec<f64>,
    pub compress_weight: Vec<f64>,
    pub compress_bias: Vec<f64>,
    pub cascade: LprmCascade,
}

/// Role descriptions written to the parameter sidecar.
fn role_of(name: &str) -> &'static str {
    match name {
        "attention.daconv" => "raw difference-aware kernels, one 3x3 block per channel",
        "attention.projection" => "1x1 projection of [DAConv, PSP bins 1,2,3,7] to the attention logit",
        "attention.bias" => "attention logit bias",
        "head.weight" => "1x1 class head weights (classes x channels)",
        "head.bias" => "class head bias",
        "compress.weight" => "1x1 compression weights (16 x channels)",
        "compress.bias" => "compression bias",
        n if n.ends_with(".weight") => "relation conv weights (9 x inputs x 3 x 3)",
        _ => "relation conv bias",
    }
}

impl ToyModel {
    /// Zero attention, head and relation weights; compression drawn from
    /// N(0, 0.1²) with the given seed.
    pub fn new(channels: usize, classes: usize, dilations: &[usize], seed: u64) -> Result<Self> {
        if channels == 0 || classes < 2 {
            return domain(format!("model needs >= 1 channel and >= 2 classes, got {channels}, {classes}"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.1).expect("valid std");
        Ok(Self {
            channels,
            classes,
            attention: AttentionParams::zeros(channels)?,
            head_weight: vec![0.0; classes * channels],
            head_bias: vec![0.0; classes],
            compress_weight: (0..COMPRESSED_CHANNELS * channels).map(|_| normal.sample(&mut rng)).collect(),
            compress_bias: vec![0.0; COMPRESSED_CHANNELS],
            cascade: LprmCascade::zeros(COMPRESSED_CHANNELS, dilations)?,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    fn visit_mut(&mut self, mut f: impl FnMut(String, Vec<usize>, &mut [f64])) {
        let c = self.channels;
        f("attention.daconv".into(), vec![c, 3, 3], self.attention.daconv.raw_mut());
        f("attention.projection".into(), vec![self.attention.projection.len()], &mut self.attention.projection);
        f("attention.bias".into(), vec![1], std::slice::from_mut(&mut self.attention.bias));
        f("head.weight".into(), vec![self.classes, c], &mut self.head_weight);
        f("head.bias".into(), vec![self.classes], &mut self.head_bias);
        f("compress.weight".into(), vec![COMPRESSED_CHANNELS, c], &mut self.compress_weight);
        f("compress.bias".into(), vec![COMPRESSED_CHANNELS], &mut self.compress_bias);
        for (s, stage) in self.cascade.stages.iter_mut().enumerate() {
            let inputs = stage.inputs();
            f(format!("lprm.{s}.weight"), vec![RELATIONS, inputs, 3, 3], &mut stage.weights);
            f(format!("lprm.{s}.bias"), vec![RELATIONS], &mut stage.bias);
        }
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.clone().visit_mut(|name, shape, data| {
            out.push((name, Tensor::new(shape, data.to_vec()).expect("parameter shapes are valid")));
        });
        out
    }

    /// Parameter group names with their ranges in [`ToyModel::to_vector`].
    pub fn groups(&self) -> Vec<(String, std::ops::Range<usize>)> {
        let mut out = Vec::new();
        let mut at = 0;
        self.clone().visit_mut(|name, _, data| {
            out.push((name, at..at + data.len()));
            at += data.len();
        });
        out
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.clone().visit_mut(|_, _, data| out.extend_from_slice(data));
        out
    }

    pub fn set_vector(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.to_vector().len();
        if values.len() != expected {
            return domain(format!("model has {expected} parameters, got {}", values.len()));
        }
        let mut at = 0;
        self.visit_mut(|_, _, data| {
            data.copy_from_slice(&values[at..at + data.len()]);
            at += data.len();
        });
        Ok(())
    }

    fn zeroed(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(|_, _, data| data.fill(0.0));
        z
    }

    /// JSON sidecar plus the named tensors (file names `<name>.sfmt`).
    pub fn bundle(&self) -> (serde_json::Value, Vec<(String, Tensor)>) {
        let tensors = self.tensors();
        let entries: Vec<serde_json::Value> = tensors
            .iter()
            .map(|(name, t)| {
                serde_json::json!({
                    "name": name,
                    "file": format!("{name}.sfmt"),
                    "role": role_of(name),
                    "shape": t.shape(),
                })
            })
            .collect();
        let sidecar = serde_json::json!({
            "format": "sfm-params",
            "version": 1,
            "channels": self.channels,
            "classes": self.classes,
            "dilations": self.cascade.dilations,
            "tensors": entries,
        });
        (sidecar, tensors.into_iter().map(|(n, t)| (format!("{n}.sfmt"), t)).collect())
    }

    /// Rebuilds a model from a sidecar, loading each tensor by file name.
    pub fn from_bundle(sidecar: &serde_json::Value, mut load: impl FnMut(&str) -> Result<Tensor>) -> Result<Self> {
        let bad = |what: &str| Error::Format {
            offset: 0,
            reason: format!("parameter sidecar: {what}"),
        };
        if sidecar["format"] != "sfm-params" {
            return Err(bad("format must be \"sfm-params\""));
        }
        let field = |k: &str| sidecar[k].as_u64().map(|v| v as usize).ok_or_else(|| bad(&format!("missing '{k}'")));
        let channels = field("channels")?;
        let classes = field("classes")?;
        let dilations: Vec<usize> = sidecar["dilations"]
            .as_array()
            .ok_or_else(|| bad("missing 'dilations'"))?
            .iter()
            .map(|d| d.as_u64().map(|v| v as usize).ok_or_else(|| bad("dilations must be integers")))
            .collect::<Result<_>>()?;
        let mut model = Self::new(channels, classes, &dilations, 0)?;
        let entries = sidecar["tensors"].as_array().ok_or_else(|| bad("missing 'tensors'"))?;
        let mut failure = None;
        model.visit_mut(|name, shape, data| {
            if failure.is_some() {
                return;
            }
            let entry = entries.iter().find(|e| e["name"] == name.as_str());
            let result = match entry.and_then(|e| e["file"].as_str()) {
                None => Err(bad(&format!("no tensor named '{name}'"))),
                Some(file) => load(file).and_then(|t| {
                    if t.shape() != shape.as_slice() {
                        Err(bad(&format!("'{name}' has shape {:?}, expected {shape:?}", t.shape())))
                    } else {
                        data.copy_from_slice(t.data());
                        Ok(())
                    }
                }),
            };
            if let Err(e) = result {
                failure = Some(e);
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(model),
        }
    }
}

/// Pointwise (1×1) convolution with `weight` laid out `[out][in]`.
fn pointwise(x: &FeatureMap, weight: &[f64], bias: &[f64]) -> FeatureMap {
    let outputs = bias.len();
    let mut out = FeatureMap::zeros(outputs, x.height(), x.width()).expect("valid extents");
    for o in 0..outputs {
        let dst = out.channel_mut(o);
        dst.fill(bias[o]);
        for c in 0..x.channels() {
            let w = weight[o * x.channels() + c];
            if w != 0.0 {
                for (d, s) in dst.iter_mut().zip(x.channel(c)) {
                    *d += w * s;
                }
            }
        }
    }
    out
}

/// Returns `(g_weight, g_bias)` and accumulates the input gradient.
fn pointwise_vjp(x: &FeatureMap, weight: &[f64], grad: &FeatureMap, g_input: &mut FeatureMap) -> (Vec<f64>, Vec<f64>) {
    let outputs = grad.channels();
    let mut gw = vec![0.0; weight.len()];
    let mut gb = vec![0.0; outputs];
    for o in 0..outputs {
        let g = grad.channel(o);
        gb[o] = g.iter().sum();
        for c in 0..x.channels() {
            gw[o * x.channels() + c] = g.iter().zip(x.channel(c)).map(|(a, b)| a * b).sum();
            let w = weight[o * x.channels() + c];
            for (d, a) in g_input.channel_mut(c).iter_mut().zip(g) {
                *d += w * a;
            }
        }
    }
    (gw, gb)
}

/// One evaluation of the objective.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub seg: f64,
    pub fm: f64,
    pub shf: f64,
    pub total: f64,
    pub aliasing_ratio: f64,
    pub boundary_density_ratio: f64,
    pub grid: CoordinateGrid,
    pub modulated: FeatureMap,
    pub prediction: FeatureMap,
    /// Gradient in [`ToyModel::to_vector`] order.
    pub gradient: Option<Vec<f64>>,
}

/// A scene with the fixed quantities of the objective precomputed.
#[derive(Debug, Clone)]
pub struct ToyProblem {
    pub scene: Scene,
    pyramid: FeatureMap,
    target: CoordinateGrid,
    kernel: GaussianKernel,
    weights: LossWeights,
    stride: usize,
    nyquist: f64,
}

impl ToyProblem {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let scene = Scene::generate(config.task, config.size, config.size, config.seed)?;
        let kernel = config.kernel()?;
        Ok(Self {
            pyramid: pyramid_features(&scene.image)?,
            target: shf_targets(&scene.labels, 1.0, kernel)?,
            scene,
            kernel,
            weights: config.weights(),
            stride: config.stride,
            nyquist: config.nyquist,
        })
    }

    pub fn target(&self) -> &CoordinateGrid {
        &self.target
    }

    /// Runs modulate → decimate → demodulate → losses, and optionally the
    /// backward pass. The mesh used for demodulation is held fixed in the
    /// backward pass.
    pub fn evaluate(&self, model: &ToyModel, with_grad: bool) -> Result<Evaluation> {
        let x = &self.scene.image;
        let labels = &self.scene.labels;
        let (h, w) = (x.height(), x.width());
        if model.channels != x.channels() || model.classes < labels.classes() {
            return domain("model does not match the scene");
        }
        let att = generate_attention_forward(x, &self.pyramid, &model.attention)?;
        let mc = map_coordinates_forward(att.attention(), self.kernel)?;
        let grid = mc.grid();
        let xm = sample_grid(x, grid);
        let (fm, g_fm) = fm_loss_grad(&xm, self.nyquist)?;
        let (shf, gu_shf, gv_shf) = shf_loss_grad(grid, &self.target)?;

        let xl = decimate(&xm, self.stride)?;
        let gl = grid.decimate(self.stride)?;
        let pl = pointwise(&xl, &model.head_weight, &model.head_bias);
        let cl = pointwise(&xl, &model.compress_weight, &model.compress_bias);
        let interp = Interpolator::new(&gl, h, w)?;
        let y0 = interp.apply(&pl)?;
        let z = interp.apply(&cl)?;
        let cf = model.cascade.forward(&y0, &z)?;
        let (seg, g_y) = seg_loss_grad(cf.output(), labels)?;
        let total = total_loss(seg, fm, shf, self.weights);

        let mut eval = Evaluation {
            seg,
            fm,
            shf,
            total,
            aliasing_ratio: aliasing_ratio_map(&xm, self.nyquist)?,
            boundary_density_ratio: boundary_density_ratio(grid, labels)?,
            grid: grid.clone(),
            modulated: xm.clone(),
            prediction: cf.output().clone(),
            gradient: None,
        };
        if !with_grad {
            return Ok(eval);
        }

        let mut g = model.zeroed();
        let cg = model.cascade.vjp(&cf, &g_y);
        for (dst, src) in g.cascade.stages.iter_mut().zip(&cg.stages) {
            dst.weights.copy_from_slice(&src.weights);
            dst.bias = src.bias;
        }
        let g_pl = interp.adjoint(&cg.pred)?;
        let g_cl = interp.adjoint(&cg.xcomp)?;
        let mut g_xl = FeatureMap::zeros(xl.channels(), xl.height(), xl.width())?;
        (g.head_weight, g.head_bias) = pointwise_vjp(&xl, &model.head_weight, &g_pl, &mut g_xl);
        (g.compress_weight, g.compress_bias) = pointwise_vjp(&xl, &model.compress_weight, &g_cl, &mut g_xl);

        let mut g_xm = FeatureMap::new(
            xm.channels(),
            h,
            w,
            g_fm.data().iter().map(|v| v * self.weights.fm).collect(),
        )?;
        for c in 0..xl.channels() {
            for i in 0..xl.height() {
                for j in 0..xl.width() {
                    let v = g_xm.get(c, i * self.stride, j * self.stride) + g_xl.get(c, i, j);
                    g_xm.set(c, i * self.stride, j * self.stride, v);
                }
            }
        }
        let (mut gu, mut gv) = sample_grid_vjp(x, grid, &g_xm);
        for (a, b) in gu.iter_mut().zip(&gu_shf) {
            *a += self.weights.shf * b;
        }
        for (a, b) in gv.iter_mut().zip(&gv_shf) {
            *a += self.weights.shf * b;
        }
        let g_s = mc.vjp(&gu, &gv);
        let ag = att.vjp(x, &model.attention, &g_s);
        g.attention.daconv = DaConvParams::new(3, model.channels, ag.daconv_raw)?;
        g.attention.projection = ag.projection;
        g.attention.bias = ag.bias;
        debug_assert_eq!(g.attention.projection.len(), (1 + PSP_BINS.len()) * model.channels);
        eval.gradient = Some(g.to_vector());
        Ok(eval)
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub lr: f64,
    #[serde(rename = "L_seg")]
    pub seg: f64,
    #[serde(rename = "L_FM")]
    pub fm: f64,
    #[serde(rename = "L_SHF")]
    pub shf: f64,
    #[serde(rename = "L_total")]
    pub total: f64,
    pub aliasing_ratio: f64,
    pub boundary_density_ratio: f64,
}

/// Writes the history as CSV with a header row.
pub fn write_history<W: io::Write>(rows: &[HistoryRow], writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for row in rows {
        csv.serialize(row).map_err(io::Error::from)?;
    }
    csv.flush()?;
    Ok(())
}

/// Why training stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub iteration: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<HistoryRow>,
    /// The final parameters, or the last parameters with a finite objective
    /// when training diverged.
    pub model: ToyModel,
    pub diverged: Option<Divergence>,
}

/// SGD with momentum on the total objective under the poly schedule.
/// Records `iterations + 1` history rows (before each update and after the
/// last one).
pub fn train_toy(config: &TrainConfig) -> Result<TrainOutcome> {
    let problem = ToyProblem::new(config)?;
    let mut model = ToyModel::new(
        problem.scene.image.channels(),
        problem.scene.labels.classes(),
        &config.dilations,
        config.seed,
    )?;
    let mut velocity = vec![0.0; model.to_vector().len()];
    let mut last_finite = model.clone();
    let mut history = Vec::with_capacity(config.iterations + 1);
    for it in 0..=config.iterations {
        let last = it == config.iterations;
        let eval = match problem.evaluate(&model, !last) {
            Ok(e) => e,
            Err(Error::Numerical(reason)) => {
                return Ok(TrainOutcome {
                    history,
                    model: last_finite,
                    diverged: Some(Divergence { iteration: it, reason }),
                })
            }
            Err(e) => return Err(e),
        };
        let finite = [eval.seg, eval.fm, eval.shf, eval.total].iter().all(|v| v.is_finite())
            && eval.gradient.as_ref().is_none_or(|g| g.iter().all(|v| v.is_finite()));
        if !finite {
            return Ok(TrainOutcome {
                history,
                model: last_finite,
                diverged: Some(Divergence {
                    iteration: it,
                    reason: "objective or gradient became non-finite".into(),
                }),
            });
        }
        let lr = poly_lr(config.base_lr, it, config.iterations);
        history.push(HistoryRow {
            iter: it,
            lr,
            seg: eval.seg,
            fm: eval.fm,
            shf: eval.shf,
            total: eval.total,
            aliasing_ratio: eval.aliasing_ratio,
            boundary_density_ratio: eval.boundary_density_ratio,
        });
        last_finite = model.clone();
        if let Some(grad) = eval.gradient {
            let mut params = model.to_vector();
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = config.momentum * *v + g;
                *p -= lr * *v;
            }
            model.set_vector(&params)?;
        }
    }
    Ok(TrainOutcome {
        history,
        model,
        diverged: None,
    })
}

impl LprmStage {
    /// Relation stage shape check used when rebuilding bundles.
    pub fn shape(&self) -> [usize; 4] {
        [RELATIONS, self.inputs(), 3, 3]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::gradcheck::{grad_check, FnDifferentiable, DEFAULT_STEP};

    fn small_config() -> TrainConfig {
        let mut c = TrainConfig::new(SceneKind::Boundary, 3, 0.01);
        c.size = 16;
        c.dilations = vec![1, 2, 4];
        c
    }

    #[test]
    fn config_defaults_and_validation() {
        let c: TrainConfig = serde_json::from_str(r#"{"task":"boundary","iterations":5,"base_lr":0.01}"#).unwrap();
        assert_eq!(c.lambda_fm, 0.01);
        assert_eq!(c.lambda_shf, 100.0);
        assert_eq!(c.dilations, DEFAULT_DILATIONS.to_vec());
        assert_eq!(c.momentum, 0.9);
        c.validate().unwrap();
        let err = serde_json::from_str::<TrainConfig>(r#"{"task":"boundary","base_lr":0.01}"#).unwrap_err();
        assert!(err.to_string().contains("iterations"));
        let mut bad = c.clone();
        bad.stride = 1;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn vector_round_trip_and_groups() {
        let mut m = ToyModel::new(2, 3, &[1, 2], 4).unwrap();
        let v: Vec<f64> = (0..m.to_vector().len()).map(|k| k as f64).collect();
        m.set_vector(&v).unwrap();
        assert_eq!(m.to_vector(), v);
        let groups = m.groups();
        assert_eq!(groups.last().unwrap().1.end, v.len());
        assert_eq!(groups[0].0, "attention.daconv");
        assert_eq!(groups[0].1.len(), 18);
    }

    #[test]
    fn bundle_round_trip() {
        let mut m = ToyModel::new(1, 2, &[1, 2, 4], 9).unwrap();
        let v: Vec<f64> = (0..m.to_vector().len()).map(|k| (k as f64).sin()).collect();
        m.set_vector(&v).unwrap();
        let (sidecar, files) = m.bundle();
        let back = ToyModel::from_bundle(&sidecar, |name| {
            Ok(files.iter().find(|(n, _)| n == name).unwrap().1.clone())
        })
        .unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn gradient_matches_differences_for_grid_independent_parameters() {
        let config = small_config();
        let problem = ToyProblem::new(&config).unwrap();
        let mut model = ToyModel::new(1, 2, &config.dilations, 1).unwrap();
        let mut v = model.to_vector();
        let groups = model.groups();
        // nonzero head and relation weights; attention stays uniform so the
        // grid (and mesh) do not move under perturbation
        for (name, range) in &groups {
            if !name.starts_with("attention") {
                for (k, x) in v[range.clone()].iter_mut().enumerate() {
                    *x += 0.3 * ((k * 7 + name.len()) as f64).sin();
                }
            }
        }
        model.set_vector(&v).unwrap();
        let eval = problem.evaluate(&model, true).unwrap();
        let analytic = eval.gradient.unwrap();
        let mut m2 = model.clone();
        for (name, range) in groups.iter().filter(|(n, _)| !n.starts_with("attention")) {
            for k in range.clone().step_by(5) {
                let mut p = v.clone();
                p[k] += DEFAULT_STEP;
                m2.set_vector(&p).unwrap();
                let plus = problem.evaluate(&m2, false).unwrap().total;
                p[k] -= 2.0 * DEFAULT_STEP;
                m2.set_vector(&p).unwrap();
                let minus = problem.evaluate(&m2, false).unwrap().total;
                let numeric = (plus - minus) / (2.0 * DEFAULT_STEP);
                let scale = analytic[k].abs().max(numeric.abs()).max(1e-6);
                assert!((analytic[k] - numeric).abs() / scale < 1e-4, "{name}[{k}]: {} vs {numeric}", analytic[k]);
            }
        }
    }

    #[test]
    fn attention_gradient_at_initialisation_matches_differences() {
        // head weights are zero at initialisation, so the segmentation loss
        // does not depend on the grid and the full chain is exact
        let config = small_config();
        let problem = ToyProblem::new(&config).unwrap();
        let base = ToyModel::new(1, 2, &config.dilations, 1).unwrap();
        let groups = base.groups();
        let attention_end = groups.iter().find(|(n, _)| n == "attention.bias").unwrap().1.end;
        let mut start = base.to_vector();
        for (k, x) in start[..attention_end].iter_mut().enumerate() {
            *x = 0.5 * ((k + 1) as f64).cos();
        }
        let full = start.clone();
        let eval_at = |x: &[f64], grad: bool| {
            let mut v = full.clone();
            v[..attention_end].copy_from_slice(x);
            let mut m = base.clone();
            m.set_vector(&v).unwrap();
            problem.evaluate(&m, grad)
        };
        let f = FnDifferentiable::new(
            |x: &[f64]| Ok(eval_at(x, false)?.total),
            |x: &[f64]| Ok(eval_at(x, true)?.gradient.unwrap()[..attention_end].to_vec()),
        );
        let report = grad_check(&f, &start[..attention_end], DEFAULT_STEP).unwrap();
        assert!(report.max_rel_error() < 1e-4, "{report:?}");
    }

    #[test]
    fn training_is_deterministic_and_writes_history() {
        let config = small_config();
        let a = train_toy(&config).unwrap();
        let b = train_toy(&config).unwrap();
        assert!(a.diverged.is_none());
        assert_eq!(a.history.len(), 4);
        assert_eq!(a.history, b.history);
        let mut buf = Vec::new();
        write_history(&a.history, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,lr,L_seg,L_FM,L_SHF,L_total,aliasing_ratio,boundary_density_ratio\n"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn divergence_keeps_last_finite_state() {
        let mut config = small_config();
        config.base_lr = 1e12;
        config.iterations = 20;
        let out = train_toy(&config).unwrap();
        let d = out.diverged.expect("huge learning rate diverges");
        assert!(out.model.to_vector().iter().all(|v| v.is_finite()));
        assert_eq!(out.history.len(), d.iteration);
    }
}
