//! The five classifier variants: parameters, forward pass, hand-derived
//! backward pass and Adam updates.
//!
//! Every variant shares a two-layer ReLU trunk with inverted dropout and a
//! sigmoid output. They differ in what is fed to the trunk and in the output
//! head:
//!
//! | variant             | trunk input               | head                 |
//! |---------------------|---------------------------|----------------------|
//! | `simple`            | text                      | one unit             |
//! | `multitask`         | text                      | one unit / annotator |
//! | `socio_multihot`    | text ∥ multi-hot          | one unit             |
//! | `socio_embedding`   | text ∥ annotator vector   | one unit             |
//! | `socio_contrastive` | text ∥ projection(multi-hot) | one unit          |
//!
//! The projection is `ReLU(P2 · ReLU(P1 · m))`. Its output `E` is concatenated
//! as-is and, row-normalized by default, also scored by the contrastive loss.

pub mod checkpoint;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::batcher::Batch;
use crate::error::{Error, Result};
use crate::features::{AnnotatorProfile, SocioSchema};
use crate::rng;

const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Simple,
    Multitask,
    SocioMultihot,
    SocioEmbedding,
    SocioContrastive,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Simple,
        Variant::Multitask,
        Variant::SocioMultihot,
        Variant::SocioEmbedding,
        Variant::SocioContrastive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Simple => "simple",
            Variant::Multitask => "multitask",
            Variant::SocioMultihot => "socio_multihot",
            Variant::SocioEmbedding => "socio_embedding",
            Variant::SocioContrastive => "socio_contrastive",
        }
    }

    pub fn uses_multihot(self) -> bool {
        matches!(self, Variant::SocioMultihot | Variant::SocioContrastive)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

/// Hyperparameters shared by all variants; data-dependent widths live in [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_dims: [usize; 2],
    pub projection_dims: [usize; 2],
    pub dropout_rate: f64,
    pub temperature: f64,
    pub contrastive_weight: f64,
    pub normalize_embeddings: bool,
    pub exclude_self_from_softmax: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dims: [512, 256],
            projection_dims: [64, 128],
            dropout_rate: 0.2,
            temperature: 0.1,
            contrastive_weight: 1.0,
            normalize_embeddings: true,
            exclude_self_from_softmax: false,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, variant: Variant, text_dim: usize, socio_width: usize, annotator_count: usize) -> ModelSpec {
        ModelSpec {
            variant,
            text_dim,
            socio_width: if variant == Variant::Simple || variant == Variant::Multitask { 0 } else { socio_width },
            annotator_count: if variant == Variant::Multitask { annotator_count } else { 0 },
            hidden_dims: self.hidden_dims,
            projection_dims: self.projection_dims,
            dropout_rate: self.dropout_rate,
            temperature: self.temperature,
            contrastive_weight: self.contrastive_weight,
            normalize_embeddings: self.normalize_embeddings,
            exclude_self_from_softmax: self.exclude_self_from_softmax,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub variant: Variant,
    pub text_dim: usize,
    pub socio_width: usize,
    pub annotator_count: usize,
    pub hidden_dims: [usize; 2],
    pub projection_dims: [usize; 2],
    pub dropout_rate: f64,
    pub temperature: f64,
    pub contrastive_weight: f64,
    pub normalize_embeddings: bool,
    pub exclude_self_from_softmax: bool,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.text_dim == 0 || self.hidden_dims.contains(&0) || self.projection_dims.contains(&0) {
            return bad("all layer widths must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.temperature > 0.0) {
            return bad(format!("temperature {} must be positive", self.temperature));
        }
        if !(self.contrastive_weight >= 0.0) {
            return bad(format!("contrastive weight {} must be >= 0", self.contrastive_weight));
        }
        let needs_socio = !matches!(self.variant, Variant::Simple | Variant::Multitask);
        if needs_socio && self.socio_width == 0 {
            return bad(format!("variant {} needs a socio input width", self.variant));
        }
        if self.variant == Variant::Multitask && self.annotator_count == 0 {
            return bad("multitask needs at least one annotator head".into());
        }
        Ok(())
    }

    /// Width of the vector fed to the trunk.
    pub fn trunk_input_dim(&self) -> usize {
        self.text_dim
            + match self.variant {
                Variant::Simple | Variant::Multitask => 0,
                Variant::SocioMultihot | Variant::SocioEmbedding => self.socio_width,
                Variant::SocioContrastive => self.projection_dims[1],
            }
    }

    fn head_count(&self) -> usize {
        if self.variant == Variant::Multitask {
            self.annotator_count
        } else {
            1
        }
    }

    fn has_projection(&self) -> bool {
        self.variant == Variant::SocioContrastive
    }

    /// (out, in) shape of every layer, in storage order: projection (if any), trunk, head.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let [h0, h1] = self.hidden_dims;
        let mut shapes = Vec::new();
        if self.has_projection() {
            let [p0, p1] = self.projection_dims;
            shapes.push((p0, self.socio_width));
            shapes.push((p1, p0));
        }
        shapes.push((h0, self.trunk_input_dim()));
        shapes.push((h1, h0));
        shapes.push((self.head_count(), h1));
        shapes
    }

    fn trunk_offset(&self) -> usize {
        if self.has_projection() {
            2
        } else {
            0
        }
    }
}

/// One affine layer, `y = x Wᵀ + b` with `W` shaped (out, in).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weight: Array2::zeros((out, inp)),
            bias: Array1::zeros(out),
        }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.weight.nrows(), self.weight.ncols())
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(self.bias.iter())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<Dense>,
    pub first_moments: Vec<Dense>,
    pub second_moments: Vec<Dense>,
    pub step: u64,
}

impl ModelParams {
    pub fn zeros(spec: &ModelSpec) -> Self {
        let layers: Vec<Dense> = spec.layer_shapes().into_iter().map(|(o, i)| Dense::zeros(o, i)).collect();
        Self {
            first_moments: layers.iter().map(Dense::zeros_like).collect(),
            second_moments: layers.iter().map(Dense::zeros_like).collect(),
            layers,
            step: 0,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.values().all(|x| x.is_finite()))
    }
}

/// Gradients with the same layer layout as [`ModelParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Dense>);

impl Gradients {
    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|l| l.values().all(|&x| x == 0.0))
    }
}

/// Xavier-uniform weights, zero biases and zero optimizer moments.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ModelParams> {
    spec.validate()?;
    let mut params = ModelParams::zeros(spec);
    let mut rng = rng::seeded(seed);
    for layer in &mut params.layers {
        let (out, inp) = layer.weight.dim();
        let bound = xavier_bound(inp, out);
        let dist = Uniform::new_inclusive(-bound, bound).map_err(|e| Error::Numeric(e.to_string()))?;
        layer.weight.iter_mut().for_each(|w| *w = dist.sample(&mut rng));
    }
    Ok(params)
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Intermediate values of one forward pass, enough to run [`backward`] without recomputation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub socio_inputs: Option<Array2<f64>>,
    pub projection_pre: Option<[Array2<f64>; 2]>,
    pub projection_hidden: Option<Array2<f64>>,
    /// Un-normalized projected socio rows `E`.
    pub embeddings: Option<Array2<f64>>,
    /// Rows scored by the contrastive loss (normalized copies of `E` unless disabled).
    pub contrastive_view: Option<Array2<f64>>,
    pub row_norms: Option<Array1<f64>>,
    pub trunk_input: Array2<f64>,
    pub pre: [Array2<f64>; 2],
    /// Inverted-dropout multipliers (0 or 1/(1-p)); absent in eval mode or when p = 0.
    pub masks: [Option<Array2<f64>>; 2],
    pub hidden: [Array2<f64>; 2],
    pub logits: Array1<f64>,
    pub heads: Vec<Option<usize>>,
    pub mode: Mode,
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

fn relu_backward(grad: &Array2<f64>, pre: &Array2<f64>) -> Array2<f64> {
    let mut g = grad.clone();
    g.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0
        }
    });
    g
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut rng::Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn((rows, cols), || if rng.random::<f64>() < rate { 0.0 } else { keep })
}

/// Projects multi-hot rows into the socio representation space.
fn project(params: &ModelParams, socio: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
    let pre0 = params.layers[0].apply(socio);
    let act0 = relu(&pre0);
    let pre1 = params.layers[1].apply(&act0);
    let e = relu(&pre1);
    (pre0, act0, pre1, e)
}

fn normalize_rows(e: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let norms = e.map_axis(Axis(1), |r| r.dot(&r).sqrt().max(NORM_FLOOR));
    let n = e / &norms.view().insert_axis(Axis(1));
    (n, norms)
}

/// Backpropagates through `n = e / max(|e|, floor)` row by row.
fn normalize_rows_backward(grad: &ArrayView2<'_, f64>, normalized: &Array2<f64>, norms: &Array1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(grad.raw_dim());
    for i in 0..grad.nrows() {
        let g = grad.row(i);
        let n = normalized.row(i);
        let norm = norms[i];
        if norm <= NORM_FLOOR {
            out.row_mut(i).assign(&(&g / norm));
        } else {
            let proj = n.dot(&g);
            out.row_mut(i).assign(&((&g - &(&n * proj)) / norm));
        }
    }
    out
}

pub fn forward(spec: &ModelSpec, params: &ModelParams, batch: &Batch, mode: Mode, seed: u64) -> Result<(Array1<f64>, ForwardTrace)> {
    let b = batch.len();
    if batch.text_inputs.ncols() != spec.text_dim {
        return Err(Error::Contract(format!(
            "text width {} does not match spec width {}",
            batch.text_inputs.ncols(),
            spec.text_dim
        )));
    }
    let socio = match spec.variant {
        Variant::Simple | Variant::Multitask => None,
        _ => {
            let s = batch
                .socio_inputs
                .as_ref()
                .ok_or_else(|| Error::Contract(format!("variant {} needs socio inputs", spec.variant)))?;
            if s.ncols() != spec.socio_width {
                return Err(Error::Contract(format!(
                    "socio width {} does not match spec width {}",
                    s.ncols(),
                    spec.socio_width
                )));
            }
            Some(s.clone())
        }
    };

    let mut projection_pre = None;
    let mut projection_hidden = None;
    let mut embeddings = None;
    let mut contrastive_view = None;
    let mut row_norms = None;
    let trunk_input = match spec.variant {
        Variant::Simple | Variant::Multitask => batch.text_inputs.clone(),
        Variant::SocioMultihot | Variant::SocioEmbedding => {
            ndarray::concatenate![Axis(1), batch.text_inputs, socio.as_ref().expect("checked above").view()]
        }
        Variant::SocioContrastive => {
            let (pre0, act0, pre1, e) = project(params, socio.as_ref().expect("checked above"));
            let x = ndarray::concatenate![Axis(1), batch.text_inputs, e];
            if spec.normalize_embeddings {
                let (n, norms) = normalize_rows(&e);
                contrastive_view = Some(n);
                row_norms = Some(norms);
            } else {
                contrastive_view = Some(e.clone());
            }
            projection_pre = Some([pre0, pre1]);
            projection_hidden = Some(act0);
            embeddings = Some(e);
            x
        }
    };

    let t = spec.trunk_offset();
    let use_dropout = mode == Mode::Train && spec.dropout_rate > 0.0;
    let mut drng = rng::seeded(seed);
    let pre0 = params.layers[t].apply(&trunk_input);
    let mut h0 = relu(&pre0);
    let mask0 = use_dropout.then(|| dropout_mask(b, spec.hidden_dims[0], spec.dropout_rate, &mut drng));
    if let Some(m) = &mask0 {
        h0 *= m;
    }
    let pre1 = params.layers[t + 1].apply(&h0);
    let mut h1 = relu(&pre1);
    let mask1 = use_dropout.then(|| dropout_mask(b, spec.hidden_dims[1], spec.dropout_rate, &mut drng));
    if let Some(m) = &mask1 {
        h1 *= m;
    }

    let head = &params.layers[t + 2];
    let logits = if spec.variant == Variant::Multitask {
        let mean_w = head.weight.mean_axis(Axis(0)).expect("at least one head");
        let mean_b = head.bias.mean().expect("at least one head");
        Array1::from_shape_fn(b, |i| match batch.heads[i] {
            Some(a) if a < spec.annotator_count => h1.row(i).dot(&head.weight.row(a)) + head.bias[a],
            _ => h1.row(i).dot(&mean_w) + mean_b,
        })
    } else {
        h1.dot(&head.weight.row(0)) + head.bias[0]
    };
    let probs = logits.mapv(sigmoid);

    Ok((
        probs,
        ForwardTrace {
            socio_inputs: socio,
            projection_pre,
            projection_hidden,
            embeddings,
            contrastive_view,
            row_norms,
            trunk_input,
            pre: [pre0, pre1],
            masks: [mask0, mask1],
            hidden: [h0, h1],
            logits,
            heads: batch.heads.clone(),
            mode,
        },
    ))
}

/// Exact gradients of a scalar loss given its gradients w.r.t. the logits
/// and (for `socio_contrastive`) w.r.t. the contrastive view of `E`.
pub fn backward(
    spec: &ModelSpec,
    params: &ModelParams,
    trace: &ForwardTrace,
    d_logits: &Array1<f64>,
    d_contrastive: Option<ArrayView2<'_, f64>>,
) -> Result<Gradients> {
    let b = trace.logits.len();
    if d_logits.len() != b {
        return Err(Error::Contract(format!("d_logits has {} rows, batch has {b}", d_logits.len())));
    }
    if let Some(d) = &d_contrastive {
        if spec.variant != Variant::SocioContrastive {
            return Err(Error::Contract("contrastive gradient given to a variant without projection".into()));
        }
        if d.dim() != (b, spec.projection_dims[1]) {
            return Err(Error::Contract(format!("contrastive gradient shape {:?}", d.dim())));
        }
    }
    let mut grads: Vec<Dense> = params.layers.iter().map(Dense::zeros_like).collect();
    let t = spec.trunk_offset();
    let head = &params.layers[t + 2];
    let [h0, h1] = &trace.hidden;

    let mut d_h1 = Array2::zeros(h1.raw_dim());
    if spec.variant == Variant::Multitask {
        let g = &mut grads[t + 2];
        let count = spec.annotator_count as f64;
        let mean_w = head.weight.mean_axis(Axis(0)).expect("at least one head");
        for i in 0..b {
            let dl = d_logits[i];
            match trace.heads[i].filter(|&a| a < spec.annotator_count) {
                Some(a) => {
                    g.weight.row_mut(a).scaled_add(dl, &h1.row(i));
                    g.bias[a] += dl;
                    d_h1.row_mut(i).scaled_add(dl, &head.weight.row(a));
                }
                None => {
                    // The mean head spreads the gradient evenly over every head.
                    for mut row in g.weight.rows_mut() {
                        row.scaled_add(dl / count, &h1.row(i));
                    }
                    g.bias += dl / count;
                    d_h1.row_mut(i).scaled_add(dl, &mean_w);
                }
            }
        }
    } else {
        let g = &mut grads[t + 2];
        g.weight.row_mut(0).assign(&d_logits.dot(h1));
        g.bias[0] = d_logits.sum();
        for i in 0..b {
            d_h1.row_mut(i).scaled_add(d_logits[i], &head.weight.row(0));
        }
    }

    if let Some(m) = &trace.masks[1] {
        d_h1 *= m;
    }
    let d_pre1 = relu_backward(&d_h1, &trace.pre[1]);
    grads[t + 1].weight = d_pre1.t().dot(h0);
    grads[t + 1].bias = d_pre1.sum_axis(Axis(0));
    let mut d_h0 = d_pre1.dot(&params.layers[t + 1].weight);

    if let Some(m) = &trace.masks[0] {
        d_h0 *= m;
    }
    let d_pre0 = relu_backward(&d_h0, &trace.pre[0]);
    grads[t].weight = d_pre0.t().dot(&trace.trunk_input);
    grads[t].bias = d_pre0.sum_axis(Axis(0));

    if spec.variant == Variant::SocioContrastive {
        let d_input = d_pre0.dot(&params.layers[t].weight);
        let mut d_e = d_input.slice(s![.., spec.text_dim..]).to_owned();
        if let Some(dc) = d_contrastive {
            match (&trace.contrastive_view, &trace.row_norms) {
                (Some(n), Some(norms)) => d_e += &normalize_rows_backward(&dc, n, norms),
                _ => d_e += &dc,
            }
        }
        let [pre0, pre1] = trace.projection_pre.as_ref().expect("projection trace present");
        let act0 = trace.projection_hidden.as_ref().expect("projection trace present");
        let socio = trace.socio_inputs.as_ref().expect("socio inputs present");
        let d_p1 = relu_backward(&d_e, pre1);
        grads[1].weight = d_p1.t().dot(act0);
        grads[1].bias = d_p1.sum_axis(Axis(0));
        let d_act0 = d_p1.dot(&params.layers[1].weight);
        let d_p0 = relu_backward(&d_act0, pre0);
        grads[0].weight = d_p0.t().dot(socio);
        grads[0].bias = d_p0.sum_axis(Axis(0));
    }
    Ok(Gradients(grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. Refuses (and leaves params untouched) on non-finite gradients.
pub fn adam_step(params: &mut ModelParams, grads: &Gradients, lr: f64, adam: AdamConfig) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::Config(format!("learning rate {lr} must be positive")));
    }
    if grads.0.len() != params.layers.len() {
        return Err(Error::Contract("gradient layout does not match parameters".into()));
    }
    for (li, (g, p)) in grads.0.iter().zip(&params.layers).enumerate() {
        if g.weight.dim() != p.weight.dim() || g.bias.len() != p.bias.len() {
            return Err(Error::Contract(format!("gradient shape mismatch at layer {li}")));
        }
        if g.values().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient in layer {li}; update refused")));
        }
    }
    params.step += 1;
    let t = params.step as i32;
    let c1 = 1.0 - adam.beta1.powi(t);
    let c2 = 1.0 - adam.beta2.powi(t);
    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = adam.beta1 * *m + (1.0 - adam.beta1) * g;
        *v = adam.beta2 * *v + (1.0 - adam.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + adam.epsilon);
    };
    for (li, g) in grads.0.iter().enumerate() {
        let p = &mut params.layers[li];
        let m = &mut params.first_moments[li];
        let v = &mut params.second_moments[li];
        ndarray::Zip::from(&mut p.weight)
            .and(&mut m.weight)
            .and(&mut v.weight)
            .and(&g.weight)
            .for_each(|p, m, v, &g| update(p, m, v, g));
        ndarray::Zip::from(&mut p.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .and(&g.bias)
            .for_each(|p, m, v, &g| update(p, m, v, g));
    }
    if !params.all_finite() {
        return Err(Error::Numeric(format!("parameters became non-finite at step {}", params.step)));
    }
    Ok(())
}

/// Eval-mode projection of every annotator's multi-hot vector.
pub fn extract_socio_reps(
    spec: &ModelSpec,
    params: &ModelParams,
    profiles: &BTreeMap<String, AnnotatorProfile>,
    schema: &SocioSchema,
) -> Result<BTreeMap<String, Vec<f64>>> {
    if spec.variant != Variant::SocioContrastive {
        return Err(Error::UnsupportedVariant(spec.variant.to_string()));
    }
    if schema.total_width() != spec.socio_width {
        return Err(Error::Contract(format!(
            "schema width {} does not match spec width {}",
            schema.total_width(),
            spec.socio_width
        )));
    }
    let ids: Vec<&String> = profiles.keys().collect();
    let mut m = Array2::zeros((ids.len(), schema.total_width()));
    for (row, id) in ids.iter().enumerate() {
        let v = schema.encode(&profiles[*id], false)?;
        m.row_mut(row).assign(&Array1::from(v));
    }
    let (_, _, _, e) = project(params, &m);
    Ok(ids.into_iter().cloned().zip(e.outer_iter().map(|r| r.to_vec())).collect())
}
