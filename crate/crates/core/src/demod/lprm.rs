//! Local pixel relation modules: per-pixel softmax relations over a dilated
//! 3×3 neighbourhood, used as a dynamic convex filter on the prediction.

use crate::error::{config, domain, Result};
use crate::tensor::FeatureMap;

/// Number of relation channels: one per 3×3 neighbour.
pub const RELATIONS: usize = 9;

/// Relation channel of the centre neighbour.
pub const CENTRE: usize = 4;

/// Offset of relation channel `o` at dilation `d`.
#[inline]
fn offset(o: usize, d: usize) -> (isize, isize) {
    let d = d as isize;
    ((o / 3) as isize * d - d, (o % 3) as isize * d - d)
}

#[inline]
fn clamped(i: usize, di: isize, n: usize) -> usize {
    (i as isize + di).clamp(0, n as isize - 1) as usize
}

/// H×W×9 relation weights; each pixel's nine weights are a softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationField {
    map: FeatureMap,
}

impl RelationField {
    /// Wraps nine channels, checking they are non-negative and sum to one
    /// per pixel.
    pub fn new(map: FeatureMap) -> Result<Self> {
        if map.channels() != RELATIONS {
            return domain(format!("relation field needs {RELATIONS} channels, got {}", map.channels()));
        }
        for k in 0..map.plane_len() {
            let mut sum = 0.0;
            for o in 0..RELATIONS {
                let w = map.channel(o)[k];
                if w.is_nan() || w < 0.0 {
                    return domain("relation weights must be non-negative");
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return domain(format!("relation weights sum to {sum} at pixel {k}"));
            }
        }
        Ok(Self { map })
    }

    /// Every pixel takes its own value: weight 1 on the centre.
    pub fn centre(height: usize, width: usize) -> Result<Self> {
        let mut map = FeatureMap::zeros(RELATIONS, height, width)?;
        map.channel_mut(CENTRE).fill(1.0);
        Ok(Self { map })
    }

    pub fn uniform(height: usize, width: usize) -> Result<Self> {
        let n = RELATIONS * height * width;
        Ok(Self {
            map: FeatureMap::new(RELATIONS, height, width, vec![1.0 / RELATIONS as f64; n])?,
        })
    }

    pub fn height(&self) -> usize {
        self.map.height()
    }

    pub fn width(&self) -> usize {
        self.map.width()
    }

    pub fn as_map(&self) -> &FeatureMap {
        &self.map
    }

    pub fn weight(&self, o: usize, i: usize, j: usize) -> f64 {
        self.map.get(o, i, j)
    }
}

/// Dilated 3×3 relation convolution `inputs → 9` with bias.
/// Weights are laid out `[o][c][a][b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LprmStage {
    inputs: usize,
    pub weights: Vec<f64>,
    pub bias: [f64; RELATIONS],
}

impl LprmStage {
    pub fn zeros(inputs: usize) -> Self {
        Self {
            inputs,
            weights: vec![0.0; RELATIONS * inputs * 9],
            bias: [0.0; RELATIONS],
        }
    }

    pub fn new(inputs: usize, weights: Vec<f64>, bias: [f64; RELATIONS]) -> Result<Self> {
        if weights.len() != RELATIONS * inputs * 9 {
            return config(format!(
                "relation conv with {inputs} inputs needs {} weights, got {}",
                RELATIONS * inputs * 9,
                weights.len()
            ));
        }
        Ok(Self { inputs, weights, bias })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    #[inline]
    fn w(&self, o: usize, c: usize, tap: usize) -> f64 {
        self.weights[(o * self.inputs + c) * 9 + tap]
    }
}

/// Gradients of one relation stage.
#[derive(Debug, Clone, PartialEq)]
pub struct LprmStageGrad {
    pub weights: Vec<f64>,
    pub bias: [f64; RELATIONS],
}

/// `R = Softmax(Conv^d_{3×3}(x))`, softmax over the nine channels per pixel.
pub fn lprm_relation(x: &FeatureMap, stage: &LprmStage, dilation: usize) -> Result<RelationField> {
    if x.channels() != stage.inputs {
        return domain(format!("relation conv expects {} channels, got {}", stage.inputs, x.channels()));
    }
    if dilation == 0 {
        return domain("dilation must be >= 1");
    }
    let (h, w) = (x.height(), x.width());
    let mut logits = FeatureMap::zeros(RELATIONS, h, w)?;
    for o in 0..RELATIONS {
        let dst = logits.channel_mut(o);
        dst.fill(stage.bias[o]);
        for c in 0..stage.inputs {
            let src = x.channel(c);
            for tap in 0..9 {
                let wt = stage.w(o, c, tap);
                if wt == 0.0 {
                    continue;
                }
                let (di, dj) = offset(tap, dilation);
                for i in 0..h {
                    let si = clamped(i, di, h);
                    for j in 0..w {
                        dst[i * w + j] += wt * src[si * w + clamped(j, dj, w)];
                    }
                }
            }
        }
    }
    let mut data = logits.into_data();
    let n = h * w;
    for k in 0..n {
        let max = (0..RELATIONS).map(|o| data[o * n + k]).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for o in 0..RELATIONS {
            let e = (data[o * n + k] - max).exp();
            data[o * n + k] = e;
            sum += e;
        }
        for o in 0..RELATIONS {
            data[o * n + k] /= sum;
        }
    }
    Ok(RelationField {
        map: FeatureMap::new(RELATIONS, h, w, data)?,
    })
}

/// Backward pass of [`lprm_relation`]: returns the stage gradients and the
/// gradient with respect to the conv input.
pub fn lprm_relation_vjp(
    x: &FeatureMap,
    stage: &LprmStage,
    dilation: usize,
    rel: &RelationField,
    grad: &FeatureMap,
) -> (LprmStageGrad, FeatureMap) {
    let (h, w) = (x.height(), x.width());
    let n = h * w;
    let r = rel.map.data();
    let g = grad.data();
    let mut g_logit = vec![0.0; RELATIONS * n];
    for k in 0..n {
        let dot: f64 = (0..RELATIONS).map(|o| r[o * n + k] * g[o * n + k]).sum();
        for o in 0..RELATIONS {
            g_logit[o * n + k] = r[o * n + k] * (g[o * n + k] - dot);
        }
    }
    let mut out = LprmStageGrad {
        weights: vec![0.0; stage.weights.len()],
        bias: [0.0; RELATIONS],
    };
    let mut gx = FeatureMap::zeros(x.channels(), h, w).expect("extents come from a valid map");
    for o in 0..RELATIONS {
        let gl = &g_logit[o * n..(o + 1) * n];
        out.bias[o] = gl.iter().sum();
        for c in 0..stage.inputs {
            let src = x.channel(c);
            for tap in 0..9 {
                let (di, dj) = offset(tap, dilation);
                let wt = stage.w(o, c, tap);
                let mut acc = 0.0;
                let dst = gx.channel_mut(c);
                for i in 0..h {
                    let si = clamped(i, di, h);
                    for j in 0..w {
                        let s = si * w + clamped(j, dj, w);
                        let gij = gl[i * w + j];
                        acc += gij * src[s];
                        dst[s] += wt * gij;
                    }
                }
                out.weights[(o * stage.inputs + c) * 9 + tap] = acc;
            }
        }
    }
    (out, gx)
}

/// `Y'_{ij} = Σ_o R^o_{ij} · Y_{(i,j)+offset_o}` with replicate padding.
pub fn lprm_refine(pred: &FeatureMap, rel: &RelationField, dilation: usize) -> Result<FeatureMap> {
    if (pred.height(), pred.width()) != (rel.height(), rel.width()) {
        return domain("relation field and prediction extents differ");
    }
    if dilation == 0 {
        return domain("dilation must be >= 1");
    }
    let (h, w) = (pred.height(), pred.width());
    let mut out = FeatureMap::zeros(pred.channels(), h, w)?;
    for c in 0..pred.channels() {
        let src = pred.channel(c);
        let dst = out.channel_mut(c);
        for o in 0..RELATIONS {
            let (di, dj) = offset(o, dilation);
            let r = rel.map.channel(o);
            for i in 0..h {
                let si = clamped(i, di, h);
                for j in 0..w {
                    dst[i * w + j] += r[i * w + j] * src[si * w + clamped(j, dj, w)];
                }
            }
        }
    }
    Ok(out)
}

/// Backward pass of [`lprm_refine`]: gradients with respect to the
/// prediction and the relation field.
pub fn lprm_refine_vjp(pred: &FeatureMap, rel: &RelationField, dilation: usize, grad: &FeatureMap) -> (FeatureMap, FeatureMap) {
    let (h, w) = (pred.height(), pred.width());
    let mut g_pred = FeatureMap::zeros(pred.channels(), h, w).expect("extents come from a valid map");
    let mut g_rel = FeatureMap::zeros(RELATIONS, h, w).expect("extents come from a valid map");
    for o in 0..RELATIONS {
        let (di, dj) = offset(o, dilation);
        let r = rel.map.channel(o);
        for c in 0..pred.channels() {
            let src = pred.channel(c);
            let g = grad.channel(c);
            for i in 0..h {
                let si = clamped(i, di, h);
                for j in 0..w {
                    let s = si * w + clamped(j, dj, w);
                    let k = i * w + j;
                    g_pred.channel_mut(c)[s] += r[k] * g[k];
                    g_rel.channel_mut(o)[k] += g[k] * src[s];
                }
            }
        }
    }
    (g_pred, g_rel)
}

/// Which prediction each cascade stage refines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefineMode {
    /// Each stage refines the previous stage's output.
    #[default]
    Cascade,
    /// Each stage refines the upsampled prediction; the last stage's output
    /// is returned.
    FromOriginal,
}

/// Default cascade dilations.
pub const DEFAULT_DILATIONS: [usize; 7] = [1, 2, 4, 8, 16, 32, 64];

/// Cascaded relation stages. The first stage reads the compressed feature;
/// every later stage reads the previous relation field.
#[derive(Debug, Clone, PartialEq)]
pub struct LprmCascade {
    pub dilations: Vec<usize>,
    pub stages: Vec<LprmStage>,
    pub mode: RefineMode,
}

#[derive(Debug, Clone)]
struct StageTrace {
    stage: usize,
    input: FeatureMap,
    pred: FeatureMap,
    rel: RelationField,
}

/// Forward state of [`LprmCascade::forward`].
#[derive(Debug, Clone)]
pub struct CascadeForward {
    traces: Vec<StageTrace>,
    output: FeatureMap,
}

/// Gradients of a cascade run.
#[derive(Debug, Clone)]
pub struct CascadeGrad {
    pub stages: Vec<LprmStageGrad>,
    pub pred: FeatureMap,
    pub xcomp: FeatureMap,
}

impl LprmCascade {
    /// Zero-weight stages: every relation is uniform.
    pub fn zeros(xcomp_channels: usize, dilations: &[usize]) -> Result<Self> {
        if dilations.is_empty() || dilations.contains(&0) {
            return config("dilations must be a non-empty list of positive integers");
        }
        let stages = (0..dilations.len())
            .map(|s| LprmStage::zeros(if s == 0 { xcomp_channels } else { RELATIONS }))
            .collect();
        Ok(Self {
            dilations: dilations.to_vec(),
            stages,
            mode: RefineMode::Cascade,
        })
    }

    /// Whether the stage at `dilation` runs on an `h×w` map.
    pub fn stage_active(dilation: usize, h: usize, w: usize) -> bool {
        2 * dilation <= h.min(w)
    }

    pub fn forward(&self, pred: &FeatureMap, xcomp: &FeatureMap) -> Result<CascadeForward> {
        if self.stages.len() != self.dilations.len() {
            return config("cascade needs one stage per dilation");
        }
        if (pred.height(), pred.width()) != (xcomp.height(), xcomp.width()) {
            return domain("prediction and compressed feature extents differ");
        }
        let (h, w) = (pred.height(), pred.width());
        let mut traces = Vec::new();
        let mut input = xcomp.clone();
        let mut current = pred.clone();
        for (s, (&d, stage)) in self.dilations.iter().zip(&self.stages).enumerate() {
            if !Self::stage_active(d, h, w) {
                log::warn!("skipping relation stage with dilation {d} on a {h}x{w} map");
                continue;
            }
            let rel = lprm_relation(&input, stage, d)?;
            let source = match self.mode {
                RefineMode::Cascade => &current,
                RefineMode::FromOriginal => pred,
            };
            let next = lprm_refine(source, &rel, d)?;
            traces.push(StageTrace {
                stage: s,
                input: std::mem::replace(&mut input, rel.map.clone()),
                pred: source.clone(),
                rel,
            });
            current = next;
        }
        Ok(CascadeForward {
            traces,
            output: current,
        })
    }

    pub fn run(&self, pred: &FeatureMap, xcomp: &FeatureMap) -> Result<FeatureMap> {
        Ok(self.forward(pred, xcomp)?.output)
    }

    /// Backward pass given the gradient with respect to the cascade output.
    pub fn vjp(&self, fwd: &CascadeForward, grad: &FeatureMap) -> CascadeGrad {
        let mut stages: Vec<LprmStageGrad> = self
            .stages
            .iter()
            .map(|s| LprmStageGrad {
                weights: vec![0.0; s.weights.len()],
                bias: [0.0; RELATIONS],
            })
            .collect();
        let zeros_like = |m: &FeatureMap| FeatureMap::zeros(m.channels(), m.height(), m.width()).expect("valid extents");
        let first_pred = fwd.traces.first().map(|t| &t.pred).unwrap_or(&fwd.output);
        let mut g_pred_orig = zeros_like(first_pred);
        let mut g_current = grad.clone();
        // gradient flowing into the relation field produced by the stage after
        let mut g_next_input: Option<FeatureMap> = None;
        let mut g_xcomp = None;
        for (t, trace) in fwd.traces.iter().enumerate().rev() {
            let d = self.dilations[trace.stage];
            let g_out = match self.mode {
                RefineMode::Cascade => g_current.clone(),
                RefineMode::FromOriginal if t + 1 == fwd.traces.len() => grad.clone(),
                RefineMode::FromOriginal => zeros_like(grad),
            };
            let (g_pred, mut g_rel) = lprm_refine_vjp(&trace.pred, &trace.rel, d, &g_out);
            match self.mode {
                RefineMode::Cascade => g_current = g_pred,
                RefineMode::FromOriginal => add_into(&mut g_pred_orig, &g_pred),
            }
            if let Some(extra) = g_next_input.take() {
                add_into(&mut g_rel, &extra);
            }
            let (sg, g_in) = lprm_relation_vjp(&trace.input, &self.stages[trace.stage], d, &trace.rel, &g_rel);
            stages[trace.stage] = sg;
            if t == 0 {
                g_xcomp = Some(g_in);
            } else {
                g_next_input = Some(g_in);
            }
        }
        let pred = match self.mode {
            RefineMode::Cascade => g_current,
            RefineMode::FromOriginal => g_pred_orig,
        };
        let xcomp = g_xcomp.unwrap_or_else(|| zeros_like(fwd.traces.first().map(|t| &t.input).unwrap_or(grad)));
        CascadeGrad { stages, pred, xcomp }
    }
}

impl CascadeForward {
    pub fn output(&self) -> &FeatureMap {
        &self.output
    }

    /// Relation fields of the stages that ran, in order.
    pub fn relations(&self) -> Vec<&RelationField> {
        self.traces.iter().map(|t| &t.rel).collect()
    }
}

fn add_into(dst: &mut FeatureMap, src: &FeatureMap) {
    for (a, b) in dst.data_mut().iter_mut().zip(src.data()) {
        *a += b;
    }
}
