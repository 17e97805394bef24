//! Finite-difference gradient checking against the analytic backward pass.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sapa_core::model::{backward, loss_total, Batch, ModelConfig, ModelParams, TripletInput, UtteranceInput};

pub const H: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;
/// Hinge arguments closer than this to zero would straddle the kink under a
/// finite-difference step, so such triplets are redrawn.
const KINK_CLEARANCE: f64 = 0.05;

pub fn small_config() -> ModelConfig {
    ModelConfig {
        d_c: 5,
        d_s: 4,
        d_proj: 3,
        d_model: 8,
        n_heads: 2,
        n_layers: 1,
        d_ff: 6,
        fc_widths: [6, 5, 5, 4],
        ..ModelConfig::default()
    }
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn perturbed_params(cfg: &ModelConfig, seed: u64) -> ModelParams {
    let mut params = ModelParams::init(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    for (_, t) in params.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    params
}

pub fn hinge_arg(params: &ModelParams, t: &TripletInput, content: bool) -> f64 {
    let (proj, margin) = if content {
        (params.proj_content.as_ref(), params.config.alpha)
    } else {
        (params.proj_speaker.as_ref(), params.config.beta)
    };
    let f = |x: &[f64]| proj.map_or(x.to_vec(), |p| p.forward_vec(x));
    let (a, p, n) = (f(&t.anchor), f(&t.positive), f(&t.negative));
    let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
    d(&a, &p) - d(&a, &n) + margin
}

/// Draws triplets until the batch has both active and inactive hinges in each
/// space, all clear of the kink.
pub fn triplets(params: &ModelParams, rng: &mut ChaCha8Rng, dim: usize, content: bool) -> Vec<TripletInput> {
    let mut out = Vec::new();
    let (mut active, mut inactive) = (0, 0);
    while active < 2 || inactive < 2 {
        let anchor = random_vec(rng, dim, 1.0);
        let spread = rng.random_range(0.1..3.0);
        let t = TripletInput {
            positive: anchor.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect(),
            negative: anchor.iter().map(|v| v + rng.random_range(-spread..spread)).collect(),
            anchor,
        };
        let arg = hinge_arg(params, &t, content);
        if arg.abs() < KINK_CLEARANCE {
            continue;
        }
        if arg > 0.0 && active < 2 {
            active += 1;
            out.push(t);
        } else if arg < 0.0 && inactive < 2 {
            inactive += 1;
            out.push(t);
        }
    }
    out
}

pub fn batch(params: &ModelParams, seed: u64) -> Batch {
    let cfg = &params.config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let utterances = (0..4)
        .map(|i| UtteranceInput {
            segments: (0..1 + i % 3).map(|_| random_vec(&mut rng, cfg.d_c, 1.0)).collect(),
            speaker: random_vec(&mut rng, cfg.d_s, 1.0),
        })
        .collect();
    Batch {
        utterances,
        labels: vec![0, 1, 2, 3],
        phoneme_triplets: triplets(params, &mut rng, cfg.d_c, true),
        speaker_triplets: triplets(params, &mut rng, cfg.d_s, false),
    }
}

/// The floor sits far above finite-difference roundoff (~1e-12 at this loss
/// scale) so gradients that vanish by symmetry, such as attention key biases,
/// compare as absolute differences.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Largest relative error over every parameter, with the name of the tensor.
pub fn max_param_error(params: &ModelParams, batch: &Batch) -> (f64, String) {
    let grads = backward(params, batch).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grads
        .params
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.clone()))
        .collect();
    let mut work = params.clone();
    let mut worst = (0.0, String::new());
    for (ti, (name, g)) in analytic.iter().enumerate() {
        for i in 0..g.len() {
            let original = work.tensors()[ti].1[i];
            work.tensors_mut()[ti].1[i] = original + H;
            let plus = loss_total(&work, batch).unwrap().total;
            work.tensors_mut()[ti].1[i] = original - H;
            let minus = loss_total(&work, batch).unwrap().total;
            work.tensors_mut()[ti].1[i] = original;
            let numeric = (plus - minus) / (2.0 * H);
            let err = relative_error(g[i], numeric);
            if err > worst.0 {
                worst = (err, format!("{name}[{i}] analytic={} numeric={numeric}", g[i]));
            }
        }
    }
    worst
}
