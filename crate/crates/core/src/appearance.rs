//! Texture codes, frequency encoding, the MLP decoder with hand-written
//! backpropagation, and the Adam training loop.
//!
//! Batches are processed in fixed-size chunks. Each chunk owns its gradient
//! buffer and the buffers are summed in chunk order, so parallel and
//! sequential execution produce identical results.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::FrameSequence;
use crate::par;
use crate::representation::Representation;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("non-finite loss {loss} at step {step}; batch sample indices {batch:?}")]
    NonFiniteLoss { step: usize, loss: f64, batch: Vec<usize> },
    #[error("no training samples: every pixel lies outside all layers")]
    NoSamples,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

/// Per-node texture codes of one layer (`g × dim`, row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct TextureCodes {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl TextureCodes {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self { dim, data: vec![0.0; rows * dim] }
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 { 0 } else { self.data.len() / self.dim }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    /// Texture code dimension `c`.
    pub code_dim: usize,
    pub hidden: usize,
    /// Number of linear layers.
    pub layers: usize,
    pub n_freq: usize,
    pub include_raw: bool,
    /// Feed `(t, x, y)` to the decoder.
    pub position_input: bool,
    /// Apply the sin/cos encoding; when off only the raw input is used.
    pub freq_encoding: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self { code_dim: 32, hidden: 128, layers: 6, n_freq: 6, include_raw: true, position_input: true, freq_encoding: true }
    }
}

impl DecoderConfig {
    /// Reference-scale decoder: `c = 128`, 8 layers of width 256, 9 frequencies.
    pub fn reference() -> Self {
        Self { code_dim: 128, hidden: 256, layers: 8, n_freq: 9, ..Self::default() }
    }

    /// Width of the unencoded decoder input.
    pub fn raw_width(&self) -> usize {
        self.code_dim + if self.position_input { 3 } else { 0 }
    }

    pub fn input_width(&self) -> usize {
        let d = self.raw_width();
        if !self.freq_encoding {
            return d;
        }
        d * 2 * self.n_freq + if self.include_raw { d } else { 0 }
    }

    /// `[input, hidden, ..., hidden, 3]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_width()];
        for _ in 1..self.layers.max(1) {
            d.push(self.hidden);
        }
        d.push(3);
        d
    }

    pub fn param_count(&self) -> usize {
        self.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Decoder weights stored flat: per layer, the `out × in` row-major weight
/// matrix followed by the bias vector.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    pub config: DecoderConfig,
    pub params: Vec<f64>,
}

/// Offsets of one linear layer inside [`DecoderParams::params`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinearLayout {
    pub w: usize,
    pub b: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

pub fn layout(config: &DecoderConfig) -> Vec<LinearLayout> {
    let dims = config.dims();
    let mut off = 0;
    dims.windows(2)
        .map(|w| {
            let l = LinearLayout { w: off, b: off + w[0] * w[1], fan_in: w[0], fan_out: w[1] };
            off += w[0] * w[1] + w[1];
            l
        })
        .collect()
}

impl DecoderParams {
    pub fn zeros(config: DecoderConfig) -> Self {
        let n = config.param_count();
        Self { config, params: vec![0.0; n] }
    }

    /// He-uniform weights, zero biases.
    pub fn init(config: DecoderConfig, rng: &mut impl Rng) -> Self {
        let mut d = Self::zeros(config);
        for l in layout(&d.config) {
            let a = (6.0 / l.fan_in as f64).sqrt();
            for w in &mut d.params[l.w..l.b] {
                *w = rng.gen_range(-a..a);
            }
        }
        d
    }

    pub fn layout(&self) -> Vec<LinearLayout> {
        layout(&self.config)
    }
}

/// Componentwise encoding: optional raw copy of `v`, then for each component
/// `u` the pairs `sin(2^k π u), cos(2^k π u)` for `k = 0..n_freq`.
pub fn freq_encode(v: &[f64], n_freq: usize, include_raw: bool) -> Vec<f64> {
    let mut out = vec![0.0; v.len() * 2 * n_freq + if include_raw { v.len() } else { 0 }];
    encode_into(v, n_freq, include_raw, true, &mut out);
    out
}

#[inline]
fn encode_into(v: &[f64], n_freq: usize, include_raw: bool, freq: bool, out: &mut [f64]) {
    if !freq {
        out[..v.len()].copy_from_slice(v);
        return;
    }
    let mut o = 0;
    if include_raw {
        out[..v.len()].copy_from_slice(v);
        o = v.len();
    }
    for &u in v {
        let mut w = PI;
        for _ in 0..n_freq {
            let (s, c) = (w * u).sin_cos();
            out[o] = s;
            out[o + 1] = c;
            o += 2;
            w *= 2.0;
        }
    }
}

/// `f = Σ λ_k F[node_k]`.
pub fn interpolate_feature(codes: &TextureCodes, nodes: [usize; 3], weights: [f64; 3]) -> Vec<f64> {
    let mut f = vec![0.0; codes.dim];
    for k in 0..3 {
        for (a, b) in f.iter_mut().zip(codes.row(nodes[k])) {
            *a += weights[k] * b;
        }
    }
    f
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Single-sample forward pass; `t`, `x`, `y` are normalized to `[-1, 1]`.
pub fn decode(f: &[f64], t: f64, x: f64, y: f64, params: &DecoderParams) -> [f64; 3] {
    let cfg = &params.config;
    let mut v = f.to_vec();
    if cfg.position_input {
        v.extend_from_slice(&[t, x, y]);
    }
    let mut a = if cfg.freq_encoding { freq_encode(&v, cfg.n_freq, cfg.include_raw) } else { v };
    let lay = params.layout();
    for (li, l) in lay.iter().enumerate() {
        let mut z = params.params[l.b..l.b + l.fan_out].to_vec();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &params.params[l.w + o * l.fan_in..l.w + (o + 1) * l.fan_in];
            *zo += row.iter().zip(&a).map(|(w, x)| w * x).sum::<f64>();
        }
        if li + 1 < lay.len() {
            for zo in &mut z {
                *zo = zo.max(0.0);
            }
        } else {
            for zo in &mut z {
                *zo = sigmoid(*zo);
            }
        }
        a = z;
    }
    [a[0], a[1], a[2]]
}

/// One pixel sample: interpolation support inside a layer, normalized
/// coordinates and (for training) the target colour.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    /// Index into the representation's layer list.
    pub layer: u32,
    pub nodes: [u32; 3],
    pub weights: [f64; 3],
    /// Normalized `(t, x, y)`.
    pub coords: [f64; 3],
    pub target: [f64; 3],
}

/// Normalizes a pixel coordinate to `[-1, 1]` as `2 p / dim - 1`.
#[inline]
pub fn norm_xy(p: f64, dim: usize) -> f64 {
    2.0 * (p / dim as f64) - 1.0
}

/// Normalizes a frame time over `[0, n_frames - 1]`; a single frame maps to 0.
#[inline]
pub fn norm_t(t: f64, n_frames: usize) -> f64 {
    if n_frames <= 1 { 0.0 } else { 2.0 * t / (n_frames - 1) as f64 - 1.0 }
}

/// Borrowed parameters: decoder plus all codes flattened in layer order.
#[derive(Clone, Copy)]
pub struct Model<'a> {
    pub config: &'a DecoderConfig,
    pub layout: &'a [LinearLayout],
    pub decoder: &'a [f64],
    pub codes: &'a [f64],
    /// Start of each layer's code block in `codes`.
    pub code_offsets: &'a [usize],
}

/// Gradients in the same flat layout as [`Model`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub decoder: Vec<f64>,
    pub codes: Vec<f64>,
}

const CHUNK: usize = 256;

struct ChunkWork {
    acts: Vec<Vec<f64>>,
    dz: Vec<f64>,
    da: Vec<f64>,
    dec_grad: Vec<f64>,
    /// Gradient w.r.t. the interpolated code of each sample (`n × c`).
    dv: Vec<f64>,
    loss: f64,
    n: usize,
}

impl ChunkWork {
    fn new(config: &DecoderConfig, dec_len: usize) -> Self {
        let dims = config.dims();
        let widest = *dims.iter().max().unwrap();
        Self {
            acts: dims.iter().map(|&d| vec![0.0; CHUNK * d]).collect(),
            dz: vec![0.0; CHUNK * widest],
            da: vec![0.0; CHUNK * widest],
            dec_grad: vec![0.0; dec_len],
            dv: vec![0.0; CHUNK * config.code_dim],
            loss: 0.0,
            n: 0,
        }
    }
}

/// `c (m × n) = a (m × k) · b (k × n)` with explicit strides.
#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: isize, csa: isize, b: &[f64], rsb: isize, csb: isize, c: &mut [f64], rsc: isize) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= (m - 1) * rsc as usize + n);
    // SAFETY: the strides describe sub-matrices within the slices, checked by
    // the callers' buffer sizing and the assertion above.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, 0.0, c.as_mut_ptr(), rsc, 1);
    }
}

impl<'a> Model<'a> {
    fn fill_inputs(&self, samples: &[&Sample], x0: &mut [f64]) {
        let c = self.config.code_dim;
        let d = self.config.raw_width();
        let w = self.config.input_width();
        let mut v = vec![0.0; d];
        for (i, s) in samples.iter().enumerate() {
            v.iter_mut().for_each(|e| *e = 0.0);
            let base = self.code_offsets[s.layer as usize];
            for k in 0..3 {
                let lam = s.weights[k];
                if lam == 0.0 {
                    continue;
                }
                let row = &self.codes[base + s.nodes[k] as usize * c..base + (s.nodes[k] as usize + 1) * c];
                for (a, b) in v[..c].iter_mut().zip(row) {
                    *a += lam * b;
                }
            }
            if self.config.position_input {
                v[c..c + 3].copy_from_slice(&s.coords);
            }
            encode_into(&v, self.config.n_freq, self.config.include_raw, self.config.freq_encoding, &mut x0[i * w..(i + 1) * w]);
        }
    }

    fn forward(&self, ws: &mut ChunkWork, n: usize) {
        let nl = self.layout.len();
        for (li, l) in self.layout.iter().enumerate() {
            let (lo, hi) = ws.acts.split_at_mut(li + 1);
            let x = &lo[li];
            let z = &mut hi[0];
            let wt = &self.decoder[l.w..l.b];
            gemm(n, l.fan_in, l.fan_out, x, l.fan_in as isize, 1, wt, 1, l.fan_in as isize, z, l.fan_out as isize);
            let bias = &self.decoder[l.b..l.b + l.fan_out];
            for row in z[..n * l.fan_out].chunks_exact_mut(l.fan_out) {
                for (zo, b) in row.iter_mut().zip(bias) {
                    *zo += b;
                }
                if li + 1 < nl {
                    for zo in row.iter_mut() {
                        *zo = zo.max(0.0);
                    }
                } else {
                    for zo in row.iter_mut() {
                        *zo = sigmoid(*zo);
                    }
                }
            }
        }
    }

    /// Loss contribution and gradients of one chunk; `scale` is `1 / batch`.
    fn chunk_grads(&self, samples: &[&Sample], ws: &mut ChunkWork, scale: f64, want_codes: bool) {
        let n = samples.len();
        ws.n = n;
        self.fill_inputs(samples, &mut ws.acts[0]);
        self.forward(ws, n);
        let nl = self.layout.len();
        let out = &ws.acts[nl];
        let mut loss = 0.0;
        for (i, s) in samples.iter().enumerate() {
            for ch in 0..3 {
                let y = out[i * 3 + ch];
                let diff = y - s.target[ch];
                loss += diff * diff;
                ws.dz[i * 3 + ch] = 2.0 * diff * scale * y * (1.0 - y);
            }
        }
        ws.loss = loss;
        for li in (0..nl).rev() {
            let l = self.layout[li];
            let x = &ws.acts[li];
            gemm(
                l.fan_out,
                n,
                l.fan_in,
                &ws.dz,
                1,
                l.fan_out as isize,
                x,
                l.fan_in as isize,
                1,
                &mut ws.dec_grad[l.w..l.b],
                l.fan_in as isize,
            );
            let gb = &mut ws.dec_grad[l.b..l.b + l.fan_out];
            gb.iter_mut().for_each(|g| *g = 0.0);
            for row in ws.dz[..n * l.fan_out].chunks_exact(l.fan_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if li == 0 && !want_codes {
                break;
            }
            let wmat = &self.decoder[l.w..l.b];
            gemm(n, l.fan_out, l.fan_in, &ws.dz, l.fan_out as isize, 1, wmat, l.fan_in as isize, 1, &mut ws.da, l.fan_in as isize);
            if li > 0 {
                for i in 0..n * l.fan_in {
                    ws.dz[i] = if x[i] > 0.0 { ws.da[i] } else { 0.0 };
                }
            }
        }
        if want_codes {
            self.input_grad_to_codes(ws, n);
        }
    }

    /// Chain rule through the encoding for the code part of the raw input.
    fn input_grad_to_codes(&self, ws: &mut ChunkWork, n: usize) {
        let cfg = self.config;
        let c = cfg.code_dim;
        let d = cfg.raw_width();
        let w = cfg.input_width();
        let x0 = &ws.acts[0];
        for i in 0..n {
            let dx = &ws.da[i * w..(i + 1) * w];
            let xr = &x0[i * w..(i + 1) * w];
            let dv = &mut ws.dv[i * c..(i + 1) * c];
            if !cfg.freq_encoding {
                dv.copy_from_slice(&dx[..c]);
                continue;
            }
            let raw = if cfg.include_raw { d } else { 0 };
            for j in 0..c {
                let mut g = if cfg.include_raw { dx[j] } else { 0.0 };
                let mut om = PI;
                let o = raw + j * 2 * cfg.n_freq;
                for k in 0..cfg.n_freq {
                    let (s, co) = (xr[o + 2 * k], xr[o + 2 * k + 1]);
                    g += om * (dx[o + 2 * k] * co - dx[o + 2 * k + 1] * s);
                    om *= 2.0;
                }
                dv[j] = g;
            }
        }
    }
}

/// Chunked batch evaluator with reusable per-chunk buffers.
pub struct Engine {
    work: Vec<ChunkWork>,
    config: DecoderConfig,
}

impl Engine {
    pub fn new(config: &DecoderConfig) -> Self {
        Self { work: Vec::new(), config: config.clone() }
    }

    fn ensure(&mut self, chunks: usize, dec_len: usize) {
        while self.work.len() < chunks {
            self.work.push(ChunkWork::new(&self.config, dec_len));
        }
    }

    /// Mean loss over the batch and its gradients. Code gradients are only
    /// produced when `want_codes` is set.
    pub fn loss_and_grads(&mut self, model: &Model, batch: &[&Sample], want_codes: bool, grads: &mut Gradients) -> f64 {
        let chunks = batch.len().div_ceil(CHUNK);
        self.ensure(chunks, model.decoder.len());
        let scale = 1.0 / batch.len().max(1) as f64;
        par::for_each_chunk_mut(&mut self.work[..chunks], 1, |ci, ws| {
            let lo = ci * CHUNK;
            let hi = (lo + CHUNK).min(batch.len());
            model.chunk_grads(&batch[lo..hi], &mut ws[0], scale, want_codes);
        });
        grads.decoder.iter_mut().for_each(|g| *g = 0.0);
        grads.codes.iter_mut().for_each(|g| *g = 0.0);
        let c = model.config.code_dim;
        let mut loss = 0.0;
        for (ci, ws) in self.work[..chunks].iter().enumerate() {
            loss += ws.loss;
            for (g, w) in grads.decoder.iter_mut().zip(&ws.dec_grad) {
                *g += w;
            }
            if want_codes {
                for i in 0..ws.n {
                    let s = batch[ci * CHUNK + i];
                    let base = model.code_offsets[s.layer as usize];
                    let dv = &ws.dv[i * c..(i + 1) * c];
                    for k in 0..3 {
                        let lam = s.weights[k];
                        if lam == 0.0 {
                            continue;
                        }
                        let row = base + s.nodes[k] as usize * c;
                        for (g, d) in grads.codes[row..row + c].iter_mut().zip(dv) {
                            *g += lam * d;
                        }
                    }
                }
            }
        }
        loss * scale
    }

    /// Decoded colours for every sample, in order.
    pub fn decode(&mut self, model: &Model, samples: &[Sample]) -> Vec<[f64; 3]> {
        let nl = model.layout.len();
        let refs: Vec<&Sample> = samples.iter().collect();
        let mut out = vec![[0.0; 3]; samples.len()];
        let per_pass = CHUNK * 64;
        for (pi, pass) in refs.chunks(per_pass).enumerate() {
            let chunks = pass.len().div_ceil(CHUNK);
            self.ensure(chunks, model.decoder.len());
            par::for_each_chunk_mut(&mut self.work[..chunks], 1, |ci, ws| {
                let lo = ci * CHUNK;
                let hi = (lo + CHUNK).min(pass.len());
                model.fill_inputs(&pass[lo..hi], &mut ws[0].acts[0]);
                model.forward(&mut ws[0], hi - lo);
                ws[0].n = hi - lo;
            });
            for (ci, ws) in self.work[..chunks].iter().enumerate() {
                for i in 0..ws.n {
                    let o = &ws.acts[nl][i * 3..i * 3 + 3];
                    out[pi * per_pass + ci * CHUNK + i] = [o[0], o[1], o[2]];
                }
            }
        }
        out
    }
}

/// Flattened trainable state of a representation.
pub struct FlatParams {
    pub config: DecoderConfig,
    pub layout: Vec<LinearLayout>,
    pub decoder: Vec<f64>,
    pub codes: Vec<f64>,
    pub code_offsets: Vec<usize>,
}

impl FlatParams {
    pub fn from_rep(rep: &Representation) -> Self {
        let mut codes = Vec::new();
        let mut code_offsets = Vec::new();
        for l in &rep.layers {
            code_offsets.push(codes.len());
            codes.extend_from_slice(&l.codes.data);
        }
        Self {
            config: rep.decoder.config.clone(),
            layout: rep.decoder.layout(),
            decoder: rep.decoder.params.clone(),
            codes,
            code_offsets,
        }
    }

    pub fn model(&self) -> Model<'_> {
        Model {
            config: &self.config,
            layout: &self.layout,
            decoder: &self.decoder,
            codes: &self.codes,
            code_offsets: &self.code_offsets,
        }
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients { decoder: vec![0.0; self.decoder.len()], codes: vec![0.0; self.codes.len()] }
    }

    /// Writes the state back, rounding through `f32` so the result is
    /// exactly representable on disk.
    pub fn write_back(&self, rep: &mut Representation) {
        rep.decoder.params = self.decoder.iter().map(|&v| v as f32 as f64).collect();
        for (i, l) in rep.layers.iter_mut().enumerate() {
            let lo = self.code_offsets[i];
            let n = l.codes.data.len();
            l.codes.data = self.codes[lo..lo + n].iter().map(|&v| v as f32 as f64).collect();
        }
    }
}

/// Mean loss and gradients for a batch (convenience wrapper around [`Engine`]).
pub fn loss_and_grads(rep: &Representation, batch: &[Sample]) -> (f64, Gradients) {
    let flat = FlatParams::from_rep(rep);
    let mut g = flat.zero_grads();
    let refs: Vec<&Sample> = batch.iter().collect();
    let loss = Engine::new(&flat.config).loss_and_grads(&flat.model(), &refs, true, &mut g);
    (loss, g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam state for one flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, n: usize) -> Self {
        Self { config, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let AdamConfig { learning_rate: lr, beta1: b1, beta2: b2, eps } = self.config;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.len() {
            self.update(i, params, grads[i], lr, b1, b2, eps, c1, c2);
        }
    }

    /// Updates only the listed indices; the others keep their moments.
    pub fn step_indices(&mut self, params: &mut [f64], grads: &[f64], indices: &[usize]) {
        self.t += 1;
        let AdamConfig { learning_rate: lr, beta1: b1, beta2: b2, eps } = self.config;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for &i in indices {
            self.update(i, params, grads[i], lr, b1, b2, eps, c1, c2);
        }
    }

    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn update(&mut self, i: usize, params: &mut [f64], g: f64, lr: f64, b1: f64, b2: f64, eps: f64, c1: f64, c2: f64) {
        self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
        self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
        let mh = self.m[i] / c1;
        let vh = self.v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + eps);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Remove `(t, x, y)` from the decoder input.
    pub disable_position_input: bool,
    /// Feed the raw input without sin/cos encoding.
    pub disable_freq_encoding: bool,
    /// Treat the whole frame as one layer.
    pub disable_layering: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch_size: 4096,
            adam: AdamConfig::default(),
            seed: 0,
            disable_position_input: false,
            disable_freq_encoding: false,
            disable_layering: false,
        }
    }
}

impl TrainConfig {
    /// Decoder config with this run's ablation switches applied.
    pub fn apply_ablation(&self, decoder: &DecoderConfig) -> DecoderConfig {
        DecoderConfig {
            position_input: decoder.position_input && !self.disable_position_input,
            freq_encoding: decoder.freq_encoding && !self.disable_freq_encoding,
            ..decoder.clone()
        }
    }

    fn validate(&self) -> Result<(), FitError> {
        if self.batch_size == 0 {
            return Err(FitError::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(FitError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub loss: f64,
    pub psnr: f64,
}

/// PSNR implied by a summed-over-channels squared error.
pub fn psnr_estimate(loss: f64) -> f64 {
    10.0 * (3.0 / loss).log10()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub loss_curve: Vec<LossPoint>,
    pub seconds: f64,
}

impl FitReport {
    pub fn final_loss(&self) -> f64 {
        self.loss_curve.last().map_or(f64::NAN, |p| p.loss)
    }

    /// Mean loss over the last `n` recorded steps.
    pub fn tail_loss(&self, n: usize) -> f64 {
        let k = self.loss_curve.len().min(n).max(1);
        self.loss_curve[self.loss_curve.len() - k..].iter().map(|p| p.loss).sum::<f64>() / k as f64
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "step,loss,psnr_estimate")?;
        for p in &self.loss_curve {
            writeln!(w, "{},{:.9e},{:.6}", p.step, p.loss, p.psnr)?;
        }
        Ok(())
    }
}

/// One training sample per masked pixel of every frame, each assigned to the
/// front-most layer whose mask covers it.
pub fn training_samples(rep: &Representation, video: &FrameSequence) -> Vec<Sample> {
    let mut all = Vec::new();
    for t in 0..video.len() {
        let mut s = crate::renderer::frame_samples(rep, t as f64, &crate::renderer::LayerSelect::Reconstruct, 1.0);
        let frame = &video.frames[t];
        for (i, smp) in s.iter_mut().enumerate() {
            smp.target = frame.get(i % video.width, i / video.width);
        }
        all.extend(s.into_iter().filter(|s| s.layer != u32::MAX));
    }
    all
}

/// Samples `batch` indices uniformly with replacement.
pub fn draw_batch(rng: &mut ChaCha8Rng, n: usize, batch: usize) -> Vec<usize> {
    (0..batch).map(|_| rng.gen_range(0..n)).collect()
}

/// Fits codes and decoder of `rep` to `video` in place.
pub fn fit(rep: &mut Representation, video: &FrameSequence, cfg: &TrainConfig) -> Result<FitReport, FitError> {
    cfg.validate()?;
    let samples = training_samples(rep, video);
    fit_samples(rep, &samples, cfg, None)
}

/// Optimizes on a fixed sample set. With `trainable_rows` set, the decoder is
/// frozen and only the listed `(layer, node)` code rows change; otherwise
/// everything trains.
pub fn fit_samples(
    rep: &mut Representation,
    samples: &[Sample],
    cfg: &TrainConfig,
    trainable_rows: Option<&[(usize, usize)]>,
) -> Result<FitReport, FitError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(FitError::NoSamples);
    }
    let start = std::time::Instant::now();
    let mut flat = FlatParams::from_rep(rep);
    let mut engine = Engine::new(&flat.config);
    let mut grads = flat.zero_grads();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_dec = flat.decoder.len();
    let mut adam = Adam::new(cfg.adam.clone(), n_dec + flat.codes.len());
    let code_indices: Option<Vec<usize>> = trainable_rows.map(|rows| {
        let c = flat.config.code_dim;
        let mut idx: Vec<usize> = rows
            .iter()
            .flat_map(|&(l, r)| {
                let base = flat.code_offsets[l] + r * c;
                (base..base + c).map(move |i| i + n_dec)
            })
            .collect();
        idx.sort_unstable();
        idx.dedup();
        idx
    });
    let full_batch = samples.len() <= cfg.batch_size && trainable_rows.is_some();
    let mut state = vec![0.0; n_dec + flat.codes.len()];
    let mut grad_flat = vec![0.0; state.len()];
    let mut report = FitReport::default();
    for step in 0..cfg.steps {
        let idx: Vec<usize> = if full_batch { (0..samples.len()).collect() } else { draw_batch(&mut rng, samples.len(), cfg.batch_size) };
        let batch: Vec<&Sample> = idx.iter().map(|&i| &samples[i]).collect();
        let loss = engine.loss_and_grads(&flat.model(), &batch, true, &mut grads);
        if !loss.is_finite() {
            return Err(FitError::NonFiniteLoss { step, loss, batch: idx });
        }
        state[..n_dec].copy_from_slice(&flat.decoder);
        state[n_dec..].copy_from_slice(&flat.codes);
        grad_flat[..n_dec].copy_from_slice(&grads.decoder);
        grad_flat[n_dec..].copy_from_slice(&grads.codes);
        match &code_indices {
            Some(ix) => adam.step_indices(&mut state, &grad_flat, ix),
            None => adam.step(&mut state, &grad_flat),
        }
        flat.decoder.copy_from_slice(&state[..n_dec]);
        flat.codes.copy_from_slice(&state[n_dec..]);
        report.loss_curve.push(LossPoint { step, loss, psnr: psnr_estimate(loss) });
    }
    flat.write_back(rep);
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Initial codes: uniform in `[-1e-2, 1e-2]`.
pub fn init_codes(rows: usize, dim: usize, rng: &mut impl Rng) -> TextureCodes {
    TextureCodes { dim, data: (0..rows * dim).map(|_| rng.gen_range(-1e-2..1e-2)).collect() }
}
