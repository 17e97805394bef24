//! Emotion classifier over fused content/speaker sequences with triplet
//! anchoring losses and hand-written backpropagation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embstore::N_EMOTIONS;
use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};

const LN_EPS: f64 = 1e-5;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    /// tanh approximation
    #[default]
    Gelu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Gelu => {
                let u = GELU_C * (x + 0.044715 * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            }
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Gelu => {
                let u = GELU_C * (x + 0.044715 * x * x * x);
                let t = u.tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
            }
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Which embedding halves reach the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    #[default]
    Fused,
    ContentOnly,
    SpeakerOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceMode {
    /// one fused row per content segment
    #[default]
    Segments,
    /// a single row holding the pooled content vector
    Utterance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_c: usize,
    pub d_s: usize,
    pub d_proj: usize,
    pub use_projection: bool,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub fc_widths: [usize; 4],
    pub activation: Activation,
    pub input_mode: InputMode,
    pub sequence_mode: SequenceMode,
    pub positional_encoding: bool,
    pub alpha: f64,
    pub beta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub phoneme_anchoring: bool,
    pub speaker_anchoring: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_c: 64,
            d_s: 64,
            d_proj: 32,
            use_projection: true,
            d_model: 32,
            n_heads: 4,
            n_layers: 1,
            d_ff: 64,
            fc_widths: [64, 32, 16, N_EMOTIONS],
            activation: Activation::Gelu,
            input_mode: InputMode::Fused,
            sequence_mode: SequenceMode::Segments,
            positional_encoding: false,
            alpha: 0.4,
            beta: 0.6,
            lambda1: 0.5,
            lambda2: 0.5,
            phoneme_anchoring: true,
            speaker_anchoring: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d_c == 0 || self.d_s == 0 || self.d_model == 0 || self.d_ff == 0 {
            return fail("model dimensions must be positive".into());
        }
        if self.use_projection && self.d_proj == 0 {
            return fail("d_proj must be positive when projections are enabled".into());
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.fc_widths[3] != N_EMOTIONS {
            return fail(format!("last fc width must be {N_EMOTIONS}, got {}", self.fc_widths[3]));
        }
        if self.fc_widths.iter().any(|&w| w == 0) {
            return fail("fc widths must be positive".into());
        }
        for (name, m) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(m > 0.0 && m.is_finite()) {
                return fail(format!("margin {name} must be positive, got {m}"));
            }
        }
        for (name, l) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(l >= 0.0 && l.is_finite()) {
                return fail(format!("{name} must be non-negative, got {l}"));
            }
        }
        Ok(())
    }

    pub fn content_width(&self) -> usize {
        if self.use_projection {
            self.d_proj
        } else {
            self.d_c
        }
    }

    pub fn speaker_width(&self) -> usize {
        if self.use_projection {
            self.d_proj
        } else {
            self.d_s
        }
    }

    pub fn fused_width(&self) -> usize {
        self.content_width() + self.speaker_width()
    }

    fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Affine map `y = x·W + b` with `W` stored as (in × out).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Linear {
            weight: Matrix::zeros(n_in, n_out),
            bias: vec![0.0; n_out],
        }
    }

    fn xavier(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let data = (0..n_in * n_out)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Linear {
            weight: Matrix::from_vec(n_in, n_out, data),
            bias: vec![0.0; n_out],
        }
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = x.matmul(&self.weight);
        for r in 0..y.rows {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        y
    }

    pub fn forward_vec(&self, x: &[f64]) -> Vec<f64> {
        self.forward(&Matrix::row_vector(x)).data
    }

    /// Accumulates parameter gradients into `grad` and returns dL/dx.
    fn backward(&self, x: &Matrix, dy: &Matrix, grad: &mut Linear) -> Matrix {
        grad.weight.add_assign(&x.t_matmul(dy));
        for (g, s) in grad.bias.iter_mut().zip(dy.column_sums()) {
            *g += s;
        }
        dy.matmul_t(&self.weight)
    }

    fn accumulate_only(x: &Matrix, dy: &Matrix, grad: &mut Linear) {
        grad.weight.add_assign(&x.t_matmul(dy));
        for (g, s) in grad.bias.iter_mut().zip(dy.column_sums()) {
            *g += s;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub shift: Vec<f64>,
}

struct NormCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    fn identity(d: usize) -> Self {
        LayerNorm {
            gain: vec![1.0; d],
            shift: vec![0.0; d],
        }
    }

    fn zeros(d: usize) -> Self {
        LayerNorm {
            gain: vec![0.0; d],
            shift: vec![0.0; d],
        }
    }

    fn forward(&self, x: &Matrix) -> (Matrix, NormCache) {
        let d = x.cols as f64;
        let mut xhat = Matrix::zeros(x.rows, x.cols);
        let mut y = Matrix::zeros(x.rows, x.cols);
        let mut inv_std = Vec::with_capacity(x.rows);
        for r in 0..x.rows {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(inv);
            for c in 0..x.cols {
                let h = (row[c] - mean) * inv;
                *xhat.at_mut(r, c) = h;
                *y.at_mut(r, c) = self.gain[c] * h + self.shift[c];
            }
        }
        (y, NormCache { xhat, inv_std })
    }

    fn backward(&self, cache: &NormCache, dy: &Matrix, grad: &mut LayerNorm) -> Matrix {
        let (rows, cols) = (dy.rows, dy.cols);
        let d = cols as f64;
        let mut dx = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let xhat = cache.xhat.row(r);
            let dyr = dy.row(r);
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for c in 0..cols {
                grad.gain[c] += dyr[c] * xhat[c];
                grad.shift[c] += dyr[c];
                let g = dyr[c] * self.gain[c];
                sum_dxhat += g;
                sum_dxhat_xhat += g * xhat[c];
            }
            let inv = cache.inv_std[r];
            for c in 0..cols {
                let g = dyr[c] * self.gain[c];
                *dx.at_mut(r, c) = inv / d * (d * g - sum_dxhat - xhat[c] * sum_dxhat_xhat);
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub norm1: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub norm2: LayerNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub proj_content: Option<Linear>,
    pub proj_speaker: Option<Linear>,
    pub input: Linear,
    pub encoder: Vec<EncoderLayer>,
    pub head: Vec<Linear>,
}

impl ModelParams {
    /// Xavier-uniform weights, zero biases, identity layer norms.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let proj_content = config
            .use_projection
            .then(|| Linear::xavier(config.d_c, config.d_proj, &mut rng));
        let proj_speaker = config
            .use_projection
            .then(|| Linear::xavier(config.d_s, config.d_proj, &mut rng));
        let input = Linear::xavier(config.fused_width(), d, &mut rng);
        let encoder = (0..config.n_layers)
            .map(|_| EncoderLayer {
                query: Linear::xavier(d, d, &mut rng),
                key: Linear::xavier(d, d, &mut rng),
                value: Linear::xavier(d, d, &mut rng),
                output: Linear::xavier(d, d, &mut rng),
                norm1: LayerNorm::identity(d),
                ff_in: Linear::xavier(d, config.d_ff, &mut rng),
                ff_out: Linear::xavier(config.d_ff, d, &mut rng),
                norm2: LayerNorm::identity(d),
            })
            .collect();
        let mut head = Vec::with_capacity(4);
        let mut width = d;
        for &w in &config.fc_widths {
            head.push(Linear::xavier(width, w, &mut rng));
            width = w;
        }
        Ok(ModelParams {
            config: config.clone(),
            proj_content,
            proj_speaker,
            input,
            encoder,
            head,
        })
    }

    /// Every tensor zero, layer-norm gains included.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let mut head = Vec::with_capacity(4);
        let mut width = d;
        for &w in &config.fc_widths {
            head.push(Linear::zeros(width, w));
            width = w;
        }
        Ok(ModelParams {
            config: config.clone(),
            proj_content: config
                .use_projection
                .then(|| Linear::zeros(config.d_c, config.d_proj)),
            proj_speaker: config
                .use_projection
                .then(|| Linear::zeros(config.d_s, config.d_proj)),
            input: Linear::zeros(config.fused_width(), d),
            encoder: (0..config.n_layers)
                .map(|_| EncoderLayer {
                    query: Linear::zeros(d, d),
                    key: Linear::zeros(d, d),
                    value: Linear::zeros(d, d),
                    output: Linear::zeros(d, d),
                    norm1: LayerNorm::zeros(d),
                    ff_in: Linear::zeros(d, config.d_ff),
                    ff_out: Linear::zeros(config.d_ff, d),
                    norm2: LayerNorm::zeros(d),
                })
                .collect(),
            head,
        })
    }

    pub fn tensors(&self) -> Vec<(String, &Vec<f64>)> {
        fn linear<'a>(name: &str, l: &'a Linear, out: &mut Vec<(String, &'a Vec<f64>)>) {
            out.push((format!("{name}.weight"), &l.weight.data));
            out.push((format!("{name}.bias"), &l.bias));
        }
        let mut out = Vec::new();
        if let Some(p) = &self.proj_content {
            linear("proj_content", p, &mut out);
        }
        if let Some(p) = &self.proj_speaker {
            linear("proj_speaker", p, &mut out);
        }
        linear("input", &self.input, &mut out);
        for (i, layer) in self.encoder.iter().enumerate() {
            linear(&format!("encoder.{i}.query"), &layer.query, &mut out);
            linear(&format!("encoder.{i}.key"), &layer.key, &mut out);
            linear(&format!("encoder.{i}.value"), &layer.value, &mut out);
            linear(&format!("encoder.{i}.output"), &layer.output, &mut out);
            out.push((format!("encoder.{i}.norm1.gain"), &layer.norm1.gain));
            out.push((format!("encoder.{i}.norm1.shift"), &layer.norm1.shift));
            linear(&format!("encoder.{i}.ff_in"), &layer.ff_in, &mut out);
            linear(&format!("encoder.{i}.ff_out"), &layer.ff_out, &mut out);
            out.push((format!("encoder.{i}.norm2.gain"), &layer.norm2.gain));
            out.push((format!("encoder.{i}.norm2.shift"), &layer.norm2.shift));
        }
        for (i, l) in self.head.iter().enumerate() {
            linear(&format!("fc.{i}"), l, &mut out);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        fn linear<'a>(name: &str, l: &'a mut Linear, out: &mut Vec<(String, &'a mut Vec<f64>)>) {
            out.push((format!("{name}.weight"), &mut l.weight.data));
            out.push((format!("{name}.bias"), &mut l.bias));
        }
        let mut out = Vec::new();
        if let Some(p) = &mut self.proj_content {
            linear("proj_content", p, &mut out);
        }
        if let Some(p) = &mut self.proj_speaker {
            linear("proj_speaker", p, &mut out);
        }
        linear("input", &mut self.input, &mut out);
        for (i, layer) in self.encoder.iter_mut().enumerate() {
            linear(&format!("encoder.{i}.query"), &mut layer.query, &mut out);
            linear(&format!("encoder.{i}.key"), &mut layer.key, &mut out);
            linear(&format!("encoder.{i}.value"), &mut layer.value, &mut out);
            linear(&format!("encoder.{i}.output"), &mut layer.output, &mut out);
            out.push((format!("encoder.{i}.norm1.gain"), &mut layer.norm1.gain));
            out.push((format!("encoder.{i}.norm1.shift"), &mut layer.norm1.shift));
            linear(&format!("encoder.{i}.ff_in"), &mut layer.ff_in, &mut out);
            linear(&format!("encoder.{i}.ff_out"), &mut layer.ff_out, &mut out);
            out.push((format!("encoder.{i}.norm2.gain"), &mut layer.norm2.gain));
            out.push((format!("encoder.{i}.norm2.shift"), &mut layer.norm2.shift));
        }
        for (i, l) in self.head.iter_mut().enumerate() {
            linear(&format!("fc.{i}"), l, &mut out);
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .into_iter()
            .flat_map(|(_, t)| t.iter().copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Checks every tensor against the shapes implied by `self.config`.
    pub fn check_shapes(&self) -> Result<()> {
        let reference = ModelParams::zeros(&self.config)?;
        let ours = self.tensors();
        let theirs = reference.tensors();
        if ours.len() != theirs.len() {
            return Err(Error::Schema(format!(
                "expected {} tensors, found {}",
                theirs.len(),
                ours.len()
            )));
        }
        for ((name, t), (ref_name, r)) in ours.iter().zip(&theirs) {
            if name != ref_name || t.len() != r.len() {
                return Err(Error::Schema(format!(
                    "tensor {name} has {} values, expected {ref_name} with {}",
                    t.len(),
                    r.len()
                )));
            }
        }
        let linears = self
            .proj_content
            .iter()
            .chain(&self.proj_speaker)
            .chain(std::iter::once(&self.input))
            .chain(self.encoder.iter().flat_map(|l| {
                [&l.query, &l.key, &l.value, &l.output, &l.ff_in, &l.ff_out]
            }))
            .chain(&self.head);
        for l in linears {
            if l.weight.data.len() != l.weight.rows * l.weight.cols || l.bias.len() != l.weight.cols
            {
                return Err(Error::Schema("inconsistent linear layer shape".into()));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let ckpt = CheckpointRef {
            version: CHECKPOINT_VERSION,
            params: self,
        };
        serde_json::to_writer(&mut w, &ckpt).map_err(|e| Error::Schema(e.to_string()))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        ckpt.params.config.validate()?;
        ckpt.params.check_shapes()?;
        Ok(ckpt.params)
    }
}

#[derive(Serialize)]
struct CheckpointRef<'a> {
    version: u32,
    params: &'a ModelParams,
}

#[derive(Deserialize)]
struct Checkpoint {
    version: u32,
    params: ModelParams,
}

/// Content segments and the utterance-level speaker vector.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceInput {
    pub segments: Vec<Vec<f64>>,
    pub speaker: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletInput {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub utterances: Vec<UtteranceInput>,
    /// emotion indices
    pub labels: Vec<usize>,
    /// content-space triplets
    pub phoneme_triplets: Vec<TripletInput>,
    /// speaker-space triplets
    pub speaker_triplets: Vec<TripletInput>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fused {
    /// `[mean(segments) ‖ speaker]`
    pub utterance: Vec<f64>,
    /// `[segment ‖ speaker]` per segment
    pub sequence: Vec<Vec<f64>>,
}

pub fn fuse(segments: &[Vec<f64>], speaker: &[f64]) -> Result<Fused> {
    let first = segments
        .first()
        .ok_or_else(|| Error::Domain("cannot fuse an utterance without content segments".into()))?;
    let d = first.len();
    if let Some(bad) = segments.iter().find(|s| s.len() != d) {
        return Err(Error::Domain(format!(
            "content segments disagree in dimension: {d} vs {}",
            bad.len()
        )));
    }
    let n = segments.len() as f64;
    let mut utterance = vec![0.0; d];
    for s in segments {
        for (u, v) in utterance.iter_mut().zip(s) {
            *u += v / n;
        }
    }
    utterance.extend_from_slice(speaker);
    let sequence = segments
        .iter()
        .map(|s| {
            let mut row = s.clone();
            row.extend_from_slice(speaker);
            row
        })
        .collect();
    Ok(Fused { utterance, sequence })
}

pub fn triplet_loss(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> f64 {
    (squared_distance(a, p) - squared_distance(a, n) + margin).max(0.0)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub ser: f64,
    pub phoneme: f64,
    pub speaker: f64,
}

struct LayerCache {
    x: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    attn: Vec<Matrix>,
    heads: Matrix,
    norm1: NormCache,
    y1: Matrix,
    ff_pre: Matrix,
    ff_act: Matrix,
    norm2: NormCache,
}

struct UtteranceCache {
    segments: Matrix,
    speaker: Matrix,
    seq_in: Matrix,
    layers: Vec<LayerCache>,
    n_rows: usize,
    head_in: Vec<Matrix>,
    head_pre: Vec<Matrix>,
}

pub struct ForwardPass {
    pub logits: Vec<[f64; N_EMOTIONS]>,
    caches: Vec<UtteranceCache>,
}

fn finite_or(m: &Matrix, layer: impl FnOnce() -> String) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric { layer: layer() })
    }
}

fn positional_encoding(t: usize, d: usize) -> Matrix {
    let mut pe = Matrix::zeros(t, d);
    for pos in 0..t {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
            *pe.at_mut(pos, i) = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

fn check_batch(params: &ModelParams, batch: &Batch) -> Result<()> {
    let cfg = &params.config;
    if batch.labels.len() != batch.utterances.len() {
        return Err(Error::Domain(format!(
            "{} labels for {} utterances",
            batch.labels.len(),
            batch.utterances.len()
        )));
    }
    if let Some(l) = batch.labels.iter().find(|&&l| l >= N_EMOTIONS) {
        return Err(Error::Domain(format!("label index {l} out of range")));
    }
    for (i, u) in batch.utterances.iter().enumerate() {
        if u.segments.is_empty() {
            return Err(Error::Domain(format!("utterance {i} has no content segments")));
        }
        if u.segments.iter().any(|s| s.len() != cfg.d_c) || u.speaker.len() != cfg.d_s {
            return Err(Error::Domain(format!(
                "utterance {i} does not match d_c={} / d_s={}",
                cfg.d_c, cfg.d_s
            )));
        }
    }
    for (list, d, name) in [
        (&batch.phoneme_triplets, cfg.d_c, "phoneme"),
        (&batch.speaker_triplets, cfg.d_s, "speaker"),
    ] {
        for (i, t) in list.iter().enumerate() {
            if t.anchor.len() != d || t.positive.len() != d || t.negative.len() != d {
                return Err(Error::Domain(format!(
                    "{name} triplet {i} does not have dimension {d}"
                )));
            }
        }
    }
    Ok(())
}

fn forward_utterance(params: &ModelParams, u: &UtteranceInput) -> Result<UtteranceCache> {
    let cfg = &params.config;
    let segments = Matrix::from_rows(&u.segments);
    let speaker = Matrix::row_vector(&u.speaker);
    let (cw, sw) = (cfg.content_width(), cfg.speaker_width());

    let content = match cfg.input_mode {
        InputMode::SpeakerOnly => None,
        _ => Some(match &params.proj_content {
            Some(p) => p.forward(&segments),
            None => segments.clone(),
        }),
    };
    if let Some(c) = &content {
        finite_or(c, || "proj_content".into())?;
    }
    let spk = match cfg.input_mode {
        InputMode::ContentOnly => None,
        _ => Some(match &params.proj_speaker {
            Some(p) => p.forward(&speaker),
            None => speaker.clone(),
        }),
    };
    if let Some(s) = &spk {
        finite_or(s, || "proj_speaker".into())?;
    }

    let n_rows = match cfg.sequence_mode {
        SequenceMode::Segments => segments.rows,
        SequenceMode::Utterance => 1,
    };
    let mut seq_in = Matrix::zeros(n_rows, cw + sw);
    if let Some(c) = &content {
        match cfg.sequence_mode {
            SequenceMode::Segments => {
                for t in 0..n_rows {
                    seq_in.row_mut(t)[..cw].copy_from_slice(c.row(t));
                }
            }
            SequenceMode::Utterance => {
                seq_in.row_mut(0)[..cw].copy_from_slice(&c.column_means());
            }
        }
    }
    if let Some(s) = &spk {
        for t in 0..n_rows {
            seq_in.row_mut(t)[cw..].copy_from_slice(s.row(0));
        }
    }

    let mut h = params.input.forward(&seq_in);
    if cfg.positional_encoding {
        h.add_assign(&positional_encoding(n_rows, cfg.d_model));
    }
    finite_or(&h, || "input".into())?;

    let mut layers = Vec::with_capacity(params.encoder.len());
    for (li, layer) in params.encoder.iter().enumerate() {
        let (cache, out) = forward_layer(cfg, layer, h, li)?;
        layers.push(cache);
        h = out;
    }

    let pooled = Matrix::row_vector(&h.column_means());
    let mut head_in = Vec::with_capacity(4);
    let mut head_pre = Vec::with_capacity(4);
    let mut x = pooled;
    let last = params.head.len() - 1;
    for (i, fc) in params.head.iter().enumerate() {
        let pre = fc.forward(&x);
        finite_or(&pre, || format!("fc.{i}"))?;
        head_in.push(x);
        x = if i < last {
            let mut a = pre.clone();
            a.data.iter_mut().for_each(|v| *v = cfg.activation.apply(*v));
            a
        } else {
            pre.clone()
        };
        head_pre.push(pre);
    }
    Ok(UtteranceCache {
        segments,
        speaker,
        seq_in,
        layers,
        n_rows,
        head_in,
        head_pre,
    })
}

fn forward_layer(
    cfg: &ModelConfig,
    layer: &EncoderLayer,
    x: Matrix,
    li: usize,
) -> Result<(LayerCache, Matrix)> {
    let t = x.rows;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let q = layer.query.forward(&x);
    let k = layer.key.forward(&x);
    let v = layer.value.forward(&x);
    let mut heads = Matrix::zeros(t, cfg.d_model);
    let mut attn = Vec::with_capacity(cfg.n_heads);
    for hi in 0..cfg.n_heads {
        let off = hi * dh;
        let mut a = Matrix::zeros(t, t);
        for i in 0..t {
            let qi = &q.row(i)[off..off + dh];
            let scores: Vec<f64> = (0..t)
                .map(|j| crate::linalg::dot(qi, &k.row(j)[off..off + dh]) * scale)
                .collect();
            a.row_mut(i).copy_from_slice(&softmax(&scores));
        }
        for i in 0..t {
            for j in 0..t {
                let w = a.at(i, j);
                let vj = &v.row(j)[off..off + dh];
                for (o, &vv) in heads.row_mut(i)[off..off + dh].iter_mut().zip(vj) {
                    *o += w * vv;
                }
            }
        }
        attn.push(a);
    }
    let mut r1 = layer.output.forward(&heads);
    r1.add_assign(&x);
    finite_or(&r1, || format!("encoder.{li}.attention"))?;
    let (y1, norm1) = layer.norm1.forward(&r1);
    let ff_pre = layer.ff_in.forward(&y1);
    let mut ff_act = ff_pre.clone();
    ff_act
        .data
        .iter_mut()
        .for_each(|v| *v = cfg.activation.apply(*v));
    let mut r2 = layer.ff_out.forward(&ff_act);
    r2.add_assign(&y1);
    finite_or(&r2, || format!("encoder.{li}.feed_forward"))?;
    let (y2, norm2) = layer.norm2.forward(&r2);
    finite_or(&y2, || format!("encoder.{li}.norm"))?;
    Ok((
        LayerCache {
            x,
            q,
            k,
            v,
            attn,
            heads,
            norm1,
            y1,
            ff_pre,
            ff_act,
            norm2,
        },
        y2,
    ))
}

pub fn forward(params: &ModelParams, batch: &Batch) -> Result<ForwardPass> {
    check_batch(params, batch)?;
    let mut caches = Vec::with_capacity(batch.utterances.len());
    let mut logits = Vec::with_capacity(batch.utterances.len());
    for u in &batch.utterances {
        let cache = forward_utterance(params, u)?;
        let out = cache.head_pre.last().expect("four fc layers");
        let mut row = [0.0; N_EMOTIONS];
        row.copy_from_slice(out.row(0));
        logits.push(row);
        caches.push(cache);
    }
    Ok(ForwardPass { logits, caches })
}

/// Logits only, for inference over utterances without labels.
pub fn predict_logits(params: &ModelParams, utterances: &[UtteranceInput]) -> Result<Vec<[f64; N_EMOTIONS]>> {
    let batch = Batch {
        labels: vec![0; utterances.len()],
        utterances: utterances.to_vec(),
        ..Batch::default()
    };
    Ok(forward(params, &batch)?.logits)
}

pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = i;
        }
    }
    best
}

fn project(proj: Option<&Linear>, x: &[f64]) -> Vec<f64> {
    match proj {
        Some(p) => p.forward_vec(x),
        None => x.to_vec(),
    }
}

fn space_loss(proj: Option<&Linear>, triplets: &[TripletInput], margin: f64, layer: &str) -> Result<f64> {
    if triplets.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for t in triplets {
        let a = project(proj, &t.anchor);
        let p = project(proj, &t.positive);
        let n = project(proj, &t.negative);
        total += triplet_loss(&a, &p, &n, margin);
    }
    let mean = total / triplets.len() as f64;
    if mean.is_finite() {
        Ok(mean)
    } else {
        Err(Error::Numeric { layer: layer.into() })
    }
}

fn losses_from(params: &ModelParams, batch: &Batch, pass: &ForwardPass) -> Result<LossBreakdown> {
    let cfg = &params.config;
    let ser = if batch.labels.is_empty() {
        0.0
    } else {
        pass.logits
            .iter()
            .zip(&batch.labels)
            .map(|(z, &y)| cross_entropy(z, y))
            .sum::<f64>()
            / batch.labels.len() as f64
    };
    if !ser.is_finite() {
        return Err(Error::Numeric { layer: "softmax".into() });
    }
    let phoneme = if cfg.phoneme_anchoring {
        space_loss(params.proj_content.as_ref(), &batch.phoneme_triplets, cfg.alpha, "proj_content")?
    } else {
        0.0
    };
    let speaker = if cfg.speaker_anchoring {
        space_loss(params.proj_speaker.as_ref(), &batch.speaker_triplets, cfg.beta, "proj_speaker")?
    } else {
        0.0
    };
    Ok(LossBreakdown {
        total: ser + cfg.lambda1 * phoneme + cfg.lambda2 * speaker,
        ser,
        phoneme,
        speaker,
    })
}

pub fn loss_total(params: &ModelParams, batch: &Batch) -> Result<LossBreakdown> {
    let pass = forward(params, batch)?;
    losses_from(params, batch, &pass)
}

/// dL/d(raw input) for each member of one triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrad {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

pub struct Gradients {
    pub params: ModelParams,
    pub loss: LossBreakdown,
    pub phoneme_inputs: Vec<TripletGrad>,
    pub speaker_inputs: Vec<TripletGrad>,
}

pub fn backward(params: &ModelParams, batch: &Batch) -> Result<Gradients> {
    let pass = forward(params, batch)?;
    backward_from(params, batch, &pass)
}

pub fn backward_from(params: &ModelParams, batch: &Batch, pass: &ForwardPass) -> Result<Gradients> {
    let cfg = &params.config;
    let loss = losses_from(params, batch, pass)?;
    let mut grad = ModelParams::zeros(cfg)?;
    let n_utt = batch.utterances.len().max(1) as f64;

    for ((cache, z), &y) in pass.caches.iter().zip(&pass.logits).zip(&batch.labels) {
        let mut d = softmax(z);
        d[y] -= 1.0;
        d.iter_mut().for_each(|v| *v /= n_utt);
        backward_utterance(params, cache, Matrix::row_vector(&d), &mut grad);
    }

    let phoneme_inputs = if cfg.phoneme_anchoring {
        space_backward(
            params.proj_content.as_ref(),
            grad.proj_content.as_mut(),
            &batch.phoneme_triplets,
            cfg.alpha,
            cfg.lambda1,
        )
    } else {
        zero_triplet_grads(&batch.phoneme_triplets)
    };
    let speaker_inputs = if cfg.speaker_anchoring {
        space_backward(
            params.proj_speaker.as_ref(),
            grad.proj_speaker.as_mut(),
            &batch.speaker_triplets,
            cfg.beta,
            cfg.lambda2,
        )
    } else {
        zero_triplet_grads(&batch.speaker_triplets)
    };

    if !grad.is_finite() {
        return Err(Error::Numeric { layer: "backward".into() });
    }
    Ok(Gradients {
        params: grad,
        loss,
        phoneme_inputs,
        speaker_inputs,
    })
}

fn zero_triplet_grads(triplets: &[TripletInput]) -> Vec<TripletGrad> {
    triplets
        .iter()
        .map(|t| TripletGrad {
            anchor: vec![0.0; t.anchor.len()],
            positive: vec![0.0; t.positive.len()],
            negative: vec![0.0; t.negative.len()],
        })
        .collect()
}

fn space_backward(
    proj: Option<&Linear>,
    mut grad: Option<&mut Linear>,
    triplets: &[TripletInput],
    margin: f64,
    weight: f64,
) -> Vec<TripletGrad> {
    let scale = if triplets.is_empty() {
        0.0
    } else {
        weight / triplets.len() as f64
    };
    let mut out = Vec::with_capacity(triplets.len());
    for t in triplets {
        let a = project(proj, &t.anchor);
        let p = project(proj, &t.positive);
        let n = project(proj, &t.negative);
        let arg = squared_distance(&a, &p) - squared_distance(&a, &n) + margin;
        if arg <= 0.0 {
            out.push(TripletGrad {
                anchor: vec![0.0; t.anchor.len()],
                positive: vec![0.0; t.positive.len()],
                negative: vec![0.0; t.negative.len()],
            });
            continue;
        }
        let da: Vec<f64> = p.iter().zip(&n).map(|(pv, nv)| 2.0 * scale * (nv - pv)).collect();
        let dp: Vec<f64> = a.iter().zip(&p).map(|(av, pv)| 2.0 * scale * (pv - av)).collect();
        let dn: Vec<f64> = a.iter().zip(&n).map(|(av, nv)| 2.0 * scale * (av - nv)).collect();
        match proj {
            Some(layer) => {
                let g = grad.as_deref_mut().expect("projection gradient present");
                let mut raw = Vec::with_capacity(3);
                for (x, dz) in [(&t.anchor, &da), (&t.positive, &dp), (&t.negative, &dn)] {
                    let dz = Matrix::row_vector(dz);
                    raw.push(layer.backward(&Matrix::row_vector(x), &dz, g).data);
                }
                let negative = raw.pop().expect("three members");
                let positive = raw.pop().expect("three members");
                let anchor = raw.pop().expect("three members");
                out.push(TripletGrad {
                    anchor,
                    positive,
                    negative,
                });
            }
            None => out.push(TripletGrad {
                anchor: da,
                positive: dp,
                negative: dn,
            }),
        }
    }
    out
}

fn backward_utterance(params: &ModelParams, cache: &UtteranceCache, dlogits: Matrix, grad: &mut ModelParams) {
    let cfg = &params.config;
    let last = params.head.len() - 1;
    let mut d = dlogits;
    for i in (0..params.head.len()).rev() {
        if i < last {
            for (g, &pre) in d.data.iter_mut().zip(&cache.head_pre[i].data) {
                *g *= cfg.activation.derivative(pre);
            }
        }
        d = params.head[i].backward(&cache.head_in[i], &d, &mut grad.head[i]);
    }

    let t = cache.n_rows;
    let mut dh = Matrix::zeros(t, cfg.d_model);
    for r in 0..t {
        for (o, &g) in dh.row_mut(r).iter_mut().zip(&d.data) {
            *o = g / t as f64;
        }
    }
    for li in (0..params.encoder.len()).rev() {
        dh = backward_layer(cfg, &params.encoder[li], &cache.layers[li], dh, &mut grad.encoder[li]);
    }

    let dseq = params.input.backward(&cache.seq_in, &dh, &mut grad.input);
    let cw = cfg.content_width();
    if cfg.input_mode != InputMode::SpeakerOnly {
        if let Some(g) = grad.proj_content.as_mut() {
            let n_seg = cache.segments.rows;
            let mut dc = Matrix::zeros(n_seg, cw);
            match cfg.sequence_mode {
                SequenceMode::Segments => {
                    for r in 0..n_seg {
                        dc.row_mut(r).copy_from_slice(&dseq.row(r)[..cw]);
                    }
                }
                SequenceMode::Utterance => {
                    for r in 0..n_seg {
                        for (o, &v) in dc.row_mut(r).iter_mut().zip(&dseq.row(0)[..cw]) {
                            *o = v / n_seg as f64;
                        }
                    }
                }
            }
            Linear::accumulate_only(&cache.segments, &dc, g);
        }
    }
    if cfg.input_mode != InputMode::ContentOnly {
        if let Some(g) = grad.proj_speaker.as_mut() {
            let sw = cfg.speaker_width();
            let mut ds = Matrix::zeros(1, sw);
            for r in 0..dseq.rows {
                for (o, &v) in ds.row_mut(0).iter_mut().zip(&dseq.row(r)[cw..]) {
                    *o += v;
                }
            }
            Linear::accumulate_only(&cache.speaker, &ds, g);
        }
    }
}

fn backward_layer(
    cfg: &ModelConfig,
    layer: &EncoderLayer,
    cache: &LayerCache,
    dy2: Matrix,
    grad: &mut EncoderLayer,
) -> Matrix {
    let t = cache.x.rows;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    let dr2 = layer.norm2.backward(&cache.norm2, &dy2, &mut grad.norm2);
    let mut dy1 = dr2.clone();
    let mut dff = layer.ff_out.backward(&cache.ff_act, &dr2, &mut grad.ff_out);
    for (g, &pre) in dff.data.iter_mut().zip(&cache.ff_pre.data) {
        *g *= cfg.activation.derivative(pre);
    }
    dy1.add_assign(&layer.ff_in.backward(&cache.y1, &dff, &mut grad.ff_in));

    let dr1 = layer.norm1.backward(&cache.norm1, &dy1, &mut grad.norm1);
    let mut dx = dr1.clone();
    let dheads = layer.output.backward(&cache.heads, &dr1, &mut grad.output);

    let mut dq = Matrix::zeros(t, cfg.d_model);
    let mut dk = Matrix::zeros(t, cfg.d_model);
    let mut dv = Matrix::zeros(t, cfg.d_model);
    for hi in 0..cfg.n_heads {
        let off = hi * dh;
        let a = &cache.attn[hi];
        for i in 0..t {
            let doi = &dheads.row(i)[off..off + dh];
            // dA[i, j] = dO_i · V_j
            let da: Vec<f64> = (0..t)
                .map(|j| crate::linalg::dot(doi, &cache.v.row(j)[off..off + dh]))
                .collect();
            let weighted: f64 = (0..t).map(|j| a.at(i, j) * da[j]).sum();
            for j in 0..t {
                let aij = a.at(i, j);
                for (o, &g) in dv.row_mut(j)[off..off + dh].iter_mut().zip(doi) {
                    *o += aij * g;
                }
                let ds = aij * (da[j] - weighted) * scale;
                if ds == 0.0 {
                    continue;
                }
                for c in 0..dh {
                    *dq.at_mut(i, off + c) += ds * cache.k.at(j, off + c);
                    *dk.at_mut(j, off + c) += ds * cache.q.at(i, off + c);
                }
            }
        }
    }
    dx.add_assign(&layer.query.backward(&cache.x, &dq, &mut grad.query));
    dx.add_assign(&layer.key.backward(&cache.x, &dk, &mut grad.key));
    dx.add_assign(&layer.value.backward(&cache.x, &dv, &mut grad.value));
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            d_c: 3,
            d_s: 2,
            d_proj: 2,
            d_model: 4,
            n_heads: 2,
            d_ff: 5,
            fc_widths: [4, 3, 3, 4],
            ..ModelConfig::default()
        }
    }

    fn tiny_batch(seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let utterances: Vec<UtteranceInput> = (0..3)
            .map(|i| UtteranceInput {
                segments: (0..i + 1).map(|_| v(3)).collect(),
                speaker: v(2),
            })
            .collect();
        let phoneme_triplets = vec![TripletInput {
            anchor: v(3),
            positive: v(3),
            negative: v(3),
        }];
        let speaker_triplets = vec![TripletInput {
            anchor: v(2),
            positive: v(2),
            negative: v(2),
        }];
        Batch {
            utterances,
            labels: vec![0, 2, 3],
            phoneme_triplets,
            speaker_triplets,
        }
    }

    #[test]
    fn fuse_means_segments() {
        let f = fuse(&[vec![1.0, 1.0], vec![3.0, 3.0]], &[5.0]).unwrap();
        assert_eq!(f.utterance, vec![2.0, 2.0, 5.0]);
        assert_eq!(f.sequence[1], vec![3.0, 3.0, 5.0]);
        let one = fuse(&[vec![0.5]], &[1.0, 2.0]).unwrap();
        assert_eq!(one.utterance, vec![0.5, 1.0, 2.0]);
        assert!(fuse(&[], &[1.0]).is_err());
        assert!(fuse(&[vec![1.0], vec![1.0, 2.0]], &[1.0]).is_err());
    }

    #[test]
    fn hinge_examples() {
        let a = [0.0, 0.0];
        assert_eq!(triplet_loss(&a, &[1.0, 0.0], &[0.0, 2.0], 0.4), 0.0);
        assert!((triplet_loss(&a, &[1.0, 0.0], &[0.0, 1.0], 0.4) - 0.4).abs() < 1e-15);
        assert_eq!(triplet_loss(&a, &a, &[1.0, 0.0], 0.4), 0.0);
        assert_eq!(triplet_loss(&a, &a, &a, 0.6), 0.6);
    }

    #[test]
    fn zero_model_is_uniform() {
        let cfg = tiny_config();
        let params = ModelParams::zeros(&cfg).unwrap();
        let batch = tiny_batch(1);
        let pass = forward(&params, &batch).unwrap();
        for z in &pass.logits {
            for p in softmax(z) {
                assert!((p - 0.25).abs() < 1e-15);
            }
        }
        let loss = losses_from(&params, &batch, &pass).unwrap();
        assert!((loss.ser - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_segment_attention_is_value_path() {
        let cfg = tiny_config();
        let params = ModelParams::init(&cfg, 3).unwrap();
        let x = Matrix::from_rows(&[vec![0.3, -0.2, 0.7, 0.1]]);
        let (cache, _) = forward_layer(&cfg, &params.encoder[0], x.clone(), 0).unwrap();
        let v = params.encoder[0].value.forward(&x);
        assert_eq!(cache.heads, v);
        assert!(cache.attn.iter().all(|a| a.data == vec![1.0]));
    }

    #[test]
    fn total_combines_components() {
        let cfg = tiny_config();
        let params = ModelParams::init(&cfg, 5).unwrap();
        let l = loss_total(&params, &tiny_batch(2)).unwrap();
        assert!((l.total - (l.ser + 0.5 * l.phoneme + 0.5 * l.speaker)).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip_and_shape_check() {
        let cfg = tiny_config();
        let params = ModelParams::init(&cfg, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        params.save(&path).unwrap();
        assert_eq!(ModelParams::load(&path).unwrap(), params);

        let mut broken = params.clone();
        broken.head[1].bias.pop();
        broken.save(&path).unwrap();
        assert!(matches!(ModelParams::load(&path), Err(Error::Schema(_))));
    }

    #[test]
    fn non_finite_input_names_layer() {
        let cfg = tiny_config();
        let params = ModelParams::init(&cfg, 1).unwrap();
        let mut batch = tiny_batch(1);
        batch.utterances[0].segments[0][0] = f64::NAN;
        match forward(&params, &batch) {
            Err(Error::Numeric { layer }) => assert_eq!(layer, "proj_content"),
            other => panic!("expected numeric error, got {:?}", other.map(|p| p.logits)),
        }
    }

    #[test]
    fn content_only_ignores_speaker_vectors() {
        let cfg = ModelConfig {
            input_mode: InputMode::ContentOnly,
            ..tiny_config()
        };
        let params = ModelParams::init(&cfg, 4).unwrap();
        let batch = tiny_batch(7);
        let mut perturbed = batch.clone();
        for u in &mut perturbed.utterances {
            u.speaker.iter_mut().for_each(|v| *v += 3.0);
        }
        let a = forward(&params, &batch).unwrap().logits;
        let b = forward(&params, &perturbed).unwrap().logits;
        assert_eq!(a, b);
    }

    #[test]
    fn inactive_hinge_has_zero_gradient() {
        let cfg = ModelConfig {
            use_projection: false,
            ..tiny_config()
        };
        let params = ModelParams::init(&cfg, 2).unwrap();
        let mut batch = tiny_batch(3);
        batch.phoneme_triplets = vec![TripletInput {
            anchor: vec![0.0; 3],
            positive: vec![0.0; 3],
            negative: vec![5.0, 0.0, 0.0],
        }];
        batch.speaker_triplets = vec![TripletInput {
            anchor: vec![1.0, 1.0],
            positive: vec![1.0, 1.0],
            negative: vec![1.0, 1.0],
        }];
        let g = backward(&params, &batch).unwrap();
        assert!(g.phoneme_inputs[0].anchor.iter().all(|&v| v == 0.0));
        // a = p = n: active hinge, but the anchor gradient 2(n - p) cancels
        assert!(g.speaker_inputs[0].anchor.iter().all(|&v| v == 0.0));
        assert!(g.speaker_inputs[0].negative.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = ModelConfig {
            d_model: 6,
            n_heads: 4,
            ..ModelConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = ModelConfig {
            fc_widths: [8, 8, 8, 3],
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
