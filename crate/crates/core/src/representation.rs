//! The fitted artifact: proxy layers with their codes and masks, the shared
//! decoder and video metadata.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::appearance::{init_codes, DecoderConfig, DecoderParams, TextureCodes};
use crate::image::LayerMaskTrack;
use crate::propagation::ProxyLayer;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub eps_d: f64,
    pub format_version: u32,
    /// Snapshot of the configuration that produced the artifact.
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub proxy: ProxyLayer,
    pub codes: TextureCodes,
    pub masks: LayerMaskTrack,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Representation {
    pub meta: Meta,
    /// Back to front; index 0 is the background.
    pub layers: Vec<Layer>,
    pub decoder: DecoderParams,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Violation {
    #[error("layer {layer}: code row-count mismatch ({rows} rows for {nodes} nodes)")]
    RowCountMismatch { layer: usize, rows: usize, nodes: usize },
    #[error("layer {layer}: code dimension {found} differs from decoder code dimension {expected}")]
    CodeDim { layer: usize, found: usize, expected: usize },
    #[error("layer {layer}: non-finite position for node {node} at frame {frame}")]
    NonFinitePosition { layer: usize, node: usize, frame: usize },
    #[error("layer {layer}: non-finite texture code in row {row}")]
    NonFiniteCode { layer: usize, row: usize },
    #[error("decoder: non-finite parameter at index {0}")]
    NonFiniteDecoder(usize),
    #[error("decoder: {found} parameters but the config implies {expected}")]
    DecoderSize { found: usize, expected: usize },
    #[error("layer {layer}: position array has {found} entries, expected {expected}")]
    PositionLength { layer: usize, found: usize, expected: usize },
    #[error("layer {layer}: lifetime [{t_start}, {t_end}] outside video of {n_frames} frames")]
    Lifetime { layer: usize, t_start: usize, t_end: usize, n_frames: usize },
    #[error("background layer must span all {n_frames} frames, spans [{t_start}, {t_end}]")]
    BackgroundSpan { t_start: usize, t_end: usize, n_frames: usize },
    #[error("layer {layer}: mask track does not match the layer lifetime or video size")]
    MaskMismatch { layer: usize },
    #[error("layer {layer}: per-node metadata length mismatch")]
    NodeMetadata { layer: usize },
    #[error("representation has no layers")]
    NoLayers,
}

impl Representation {
    /// Fresh representation with He-uniform decoder weights and small random
    /// codes, seeded by `seed`.
    pub fn init(meta: Meta, layers: Vec<(ProxyLayer, LayerMaskTrack)>, decoder: DecoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dec = DecoderParams::init(decoder, &mut rng);
        let c = dec.config.code_dim;
        let layers = layers
            .into_iter()
            .map(|(proxy, masks)| {
                let codes = init_codes(proxy.node_count(), c, &mut rng);
                Layer { proxy, codes, masks }
            })
            .collect();
        let mut rep = Self { meta, layers, decoder: dec };
        rep.quantize();
        rep
    }

    /// Rounds codes and decoder parameters through `f32`.
    pub fn quantize(&mut self) {
        for v in &mut self.decoder.params {
            *v = *v as f32 as f64;
        }
        for l in &mut self.layers {
            for v in &mut l.codes.data {
                *v = *v as f32 as f64;
            }
            l.proxy.quantize();
        }
    }

    pub fn layer_index(&self, layer_id: u32) -> Option<usize> {
        self.layers.iter().position(|l| l.proxy.layer_id == layer_id)
    }

    /// Optimized parameters: all texture codes plus the decoder.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.proxy.node_count() * self.decoder.config.code_dim).sum::<usize>() + self.decoder.params.len()
    }

    /// Scalars stored for node trajectories (not optimized, reported apart).
    pub fn trajectory_storage(&self) -> usize {
        self.layers.iter().map(|l| l.proxy.node_count() * l.proxy.n_frames() * 2).sum()
    }

    pub fn node_count(&self) -> usize {
        self.layers.iter().map(|l| l.proxy.node_count()).sum()
    }

    /// Checks every structural invariant and returns all violations.
    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut v = Vec::new();
        let n = self.meta.n_frames;
        let c = self.decoder.config.code_dim;
        if self.decoder.params.len() != self.decoder.config.param_count() {
            v.push(Violation::DecoderSize { found: self.decoder.params.len(), expected: self.decoder.config.param_count() });
        }
        if let Some(i) = self.decoder.params.iter().position(|p| !p.is_finite()) {
            v.push(Violation::NonFiniteDecoder(i));
        }
        if self.layers.is_empty() {
            v.push(Violation::NoLayers);
        }
        for (li, l) in self.layers.iter().enumerate() {
            let p = &l.proxy;
            let g = p.node_count();
            if p.t_start > p.t_end || p.t_end >= n {
                v.push(Violation::Lifetime { layer: li, t_start: p.t_start, t_end: p.t_end, n_frames: n });
                continue;
            }
            if li == 0 && (p.t_start != 0 || p.t_end + 1 != n) {
                v.push(Violation::BackgroundSpan { t_start: p.t_start, t_end: p.t_end, n_frames: n });
            }
            if l.codes.dim != c {
                v.push(Violation::CodeDim { layer: li, found: l.codes.dim, expected: c });
            }
            if l.codes.rows() != g || l.codes.data.len() != l.codes.rows() * l.codes.dim {
                v.push(Violation::RowCountMismatch { layer: li, rows: l.codes.rows(), nodes: g });
            }
            if let Some(i) = l.codes.data.iter().position(|x| !x.is_finite()) {
                v.push(Violation::NonFiniteCode { layer: li, row: i / l.codes.dim.max(1) });
            }
            if p.source_frame.len() != g || p.confidence.len() != p.positions.len() {
                v.push(Violation::NodeMetadata { layer: li });
            }
            let nf = p.n_frames();
            if p.positions.len() != g * nf {
                v.push(Violation::PositionLength { layer: li, found: p.positions.len(), expected: g * nf });
            } else if let Some(i) = p.positions.iter().position(|q| !q.is_finite()) {
                v.push(Violation::NonFinitePosition { layer: li, node: i / nf, frame: p.t_start + i % nf });
            }
            let m = &l.masks;
            let dims_ok = m.masks.iter().all(|k| k.width == self.meta.width && k.height == self.meta.height);
            if m.layer_id != p.layer_id || m.t_start != p.t_start || m.t_end != p.t_end || m.masks.len() != nf || !dims_ok {
                v.push(Violation::MaskMismatch { layer: li });
            }
        }
        if v.is_empty() { Ok(()) } else { Err(v) }
    }
}
