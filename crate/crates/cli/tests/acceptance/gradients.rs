//! Richardson-extrapolated central differences against the analytic backward pass.

use std::time::Instant;

use ndarray::{Array1, Array2};
use perspectives_core::batcher::Batch;
use perspectives_core::model::{self, Mode, ModelConfig, ModelParams, ModelSpec, Variant};
use perspectives_core::objectives::{bce_loss, combined_loss, contrastive_loss, ContrastiveOutput};
use perspectives_core::rng;
use rand::{Rng, RngCore};

use crate::{ensure, within, Outcome};

const H: f64 = 1e-5;
/// Instances with a pre-activation this close to the ReLU kink are redrawn.
const KINK_MARGIN: f64 = 1e-3;
const TOL: f64 = 1e-4;
const PER_VARIANT: usize = 12;

type LayerGrad = (Array2<f64>, Array1<f64>);

struct Instance {
    spec: ModelSpec,
    params: ModelParams,
    batch: Batch,
    mode: Mode,
    dropout_seed: u64,
}

fn draw(variant: Variant, r: &mut rng::Rng) -> Instance {
    let text_dim = r.random_range(2..=5usize);
    let socio_width = r.random_range(3..=6usize);
    let annotators = 4;
    let cfg = ModelConfig {
        hidden_dims: [r.random_range(3..=7), r.random_range(2..=6)],
        projection_dims: [r.random_range(2..=5), r.random_range(2..=5)],
        temperature: [0.1, 0.5, 1.0][r.random_range(0..3usize)],
        contrastive_weight: [1.0, 0.5, 2.0][r.random_range(0..3usize)],
        normalize_embeddings: r.next_u64() & 1 == 0,
        exclude_self_from_softmax: r.next_u64() & 1 == 0,
        ..ModelConfig::default()
    };
    let spec = cfg.spec(variant, text_dim, socio_width, annotators);
    let mut params = model::init_params(&spec, r.next_u64()).unwrap();
    for layer in &mut params.layers {
        layer.bias.mapv_inplace(|_| r.random_range(-0.2..0.2));
    }
    let b = r.random_range(2..=8usize);
    // Few texts so that the contrastive masks are usually non-empty.
    let texts = r.random_range(1..=2usize);
    let socio = matches!(variant, Variant::SocioMultihot | Variant::SocioEmbedding | Variant::SocioContrastive).then(|| {
        Array2::from_shape_fn((b, socio_width), |_| {
            if variant == Variant::SocioEmbedding {
                r.random_range(-1.0..1.0)
            } else {
                (r.next_u64() & 1) as f64
            }
        })
    });
    let heads = (0..b)
        .map(|_| {
            let h = r.random_range(0..=annotators);
            (variant == Variant::Multitask && h < annotators).then_some(h)
        })
        .collect();
    let batch = Batch {
        text_inputs: Array2::from_shape_fn((b, text_dim), |_| r.random_range(-1.0..1.0)),
        socio_inputs: socio,
        labels: (0..b).map(|_| (r.next_u64() & 1) as u8).collect(),
        text_ids: (0..b).map(|_| format!("t{}", r.random_range(0..texts))).collect(),
        annotator_ids: (0..b).map(|i| format!("a{i}")).collect(),
        heads,
    };
    Instance {
        spec,
        params,
        batch,
        mode: if r.next_u64() & 1 == 0 { Mode::Train } else { Mode::Eval },
        dropout_seed: r.next_u64(),
    }
}

fn smooth(variant: Variant, r: &mut rng::Rng) -> Instance {
    loop {
        let inst = draw(variant, r);
        let (_, trace) = model::forward(&inst.spec, &inst.params, &inst.batch, inst.mode, inst.dropout_seed).unwrap();
        let near = trace
            .pre
            .iter()
            .chain(trace.projection_pre.iter().flatten())
            .any(|m| m.iter().any(|&x| x.abs() < KINK_MARGIN));
        if !near {
            return inst;
        }
    }
}

fn contrastive(inst: &Instance, trace: &model::ForwardTrace) -> Option<ContrastiveOutput> {
    trace.contrastive_view.as_ref().map(|v| {
        contrastive_loss(v.view(), &inst.batch.labels, &inst.batch.text_ids, inst.spec.temperature, inst.spec.exclude_self_from_softmax)
    })
}

fn loss(inst: &Instance, params: &ModelParams) -> f64 {
    let (probs, trace) = model::forward(&inst.spec, params, &inst.batch, inst.mode, inst.dropout_seed).unwrap();
    let bce = bce_loss(probs.as_slice().unwrap(), &inst.batch.labels);
    combined_loss(bce, contrastive(inst, &trace), inst.spec.contrastive_weight).unwrap().0.total
}

/// Analytic gradients per layer, and whether the contrastive term had any pairs.
fn analytic(inst: &Instance) -> (Vec<LayerGrad>, bool) {
    let (probs, trace) = model::forward(&inst.spec, &inst.params, &inst.batch, inst.mode, inst.dropout_seed).unwrap();
    let bce = bce_loss(probs.as_slice().unwrap(), &inst.batch.labels);
    let c = contrastive(inst, &trace);
    let active = c.as_ref().is_some_and(|c| c.pos_pairs + c.neg_pairs > 0);
    let (_, g) = combined_loss(bce, c, inst.spec.contrastive_weight).unwrap();
    let grads = model::backward(&inst.spec, &inst.params, &trace, &g.d_logits, g.d_embeddings.as_ref().map(|d| d.view())).unwrap();
    (grads.0.into_iter().map(|d| (d.weight, d.bias)).collect(), active)
}

fn numeric(inst: &Instance, nudge: impl Fn(&mut ModelParams, f64)) -> f64 {
    let central = |h: f64| {
        let mut up = inst.params.clone();
        nudge(&mut up, h);
        let mut down = inst.params.clone();
        nudge(&mut down, -h);
        (loss(inst, &up) - loss(inst, &down)) / (2.0 * h)
    };
    (4.0 * central(H / 2.0) - central(H)) / 3.0
}

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
}

/// Worst relative error over every parameter coordinate, and whether the contrastive term was active.
fn check(inst: &Instance) -> (f64, usize, bool) {
    let (grads, active) = analytic(inst);
    let mut worst: f64 = 0.0;
    let mut coords = 0;
    for (l, (gw, gb)) in grads.iter().enumerate() {
        for ((i, j), &a) in gw.indexed_iter() {
            worst = worst.max(rel(a, numeric(inst, |p, h| p.layers[l].weight[[i, j]] += h)));
            coords += 1;
        }
        for (i, &a) in gb.iter().enumerate() {
            worst = worst.max(rel(a, numeric(inst, |p, h| p.layers[l].bias[i] += h)));
            coords += 1;
        }
    }
    (worst, coords, active)
}

pub fn check_all() -> Outcome {
    let start = Instant::now();
    let mut r = rng::seeded(2025);
    let mut instances = 0;
    let mut coords = 0;
    let mut contrastive_active = 0;
    let mut worst: f64 = 0.0;
    for variant in Variant::ALL {
        for k in 0..PER_VARIANT {
            let inst = smooth(variant, &mut r);
            let (w, n, active) = check(&inst);
            ensure!(w < TOL, "{variant} instance {k}: relative error {w:.2e}");
            worst = worst.max(w);
            coords += n;
            instances += 1;
            if variant == Variant::SocioContrastive && active {
                contrastive_active += 1;
            }
        }
    }
    ensure!(contrastive_active > 0, "no socio_contrastive instance exercised the contrastive term");
    let secs = within(start, 60.0)?;
    Ok(format!(
        "{instances} instances over 5 variants, {coords} coordinates, worst relative error {worst:.2e}, \
         contrastive term active in {contrastive_active}/{PER_VARIANT} socio_contrastive instances, {secs:.1} s"
    ))
}
