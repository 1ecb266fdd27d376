//! Layer-drop inpainting and keyframe edit propagation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::appearance::{fit_samples, AdamConfig, FitError, FitReport, TrainConfig};
use crate::image::{Mask, RgbImage};
use crate::renderer::{frame_samples, render_frame, LayerSelect, RenderError};
use crate::representation::Representation;

#[derive(Debug, Error)]
pub enum EditError {
    #[error("the background layer (id 0) cannot be dropped")]
    DropBackground,
    #[error("unknown layer id {0}")]
    UnknownLayer(u32),
    #[error("edited image is {0}x{1}, video is {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("edit region is empty")]
    EmptyRegion,
    #[error("edit region lies outside all layers")]
    RegionOutsideLayers,
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Renders every frame with the given foreground layers removed.
pub fn inpaint(rep: &Representation, drop_layers: &[u32]) -> Result<Vec<RgbImage>, EditError> {
    if drop_layers.contains(&0) {
        return Err(EditError::DropBackground);
    }
    if let Some(&id) = drop_layers.iter().find(|&&id| rep.layer_index(id).is_none()) {
        return Err(EditError::UnknownLayer(id));
    }
    let keep: Vec<u32> = rep.layers.iter().map(|l| l.proxy.layer_id).filter(|id| !drop_layers.contains(id)).collect();
    let select = LayerSelect::Composite(keep);
    (0..rep.meta.n_frames).map(|t| render_frame(rep, t, &select).map_err(EditError::from)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EditConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Region pixels per step; the whole region is used when it fits.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for EditConfig {
    fn default() -> Self {
        Self { steps: 500, learning_rate: 5e-3, batch_size: 16384, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EditReport {
    /// `(layer index, node)` rows that were optimized.
    pub trainable: Vec<(usize, usize)>,
    pub region_pixels: usize,
    pub fit: FitReport,
}

/// Re-optimizes the codes supporting `region` at `frame` so that the render
/// matches `edited` there. The decoder and all other codes stay fixed; the
/// original representation is left untouched.
pub fn edit_keyframe(
    rep: &Representation,
    frame: usize,
    edited: &RgbImage,
    region: &Mask,
    opts: &EditConfig,
) -> Result<(Representation, EditReport), EditError> {
    let (w, h) = (rep.meta.width, rep.meta.height);
    if (edited.width, edited.height) != (w, h) || (region.width, region.height) != (w, h) {
        return Err(EditError::SizeMismatch(edited.width, edited.height, w, h));
    }
    if frame >= rep.meta.n_frames {
        return Err(RenderError::FrameOutOfRange { frame, n_frames: rep.meta.n_frames }.into());
    }
    if region.is_empty() {
        return Err(EditError::EmptyRegion);
    }
    let all = frame_samples(rep, frame as f64, &LayerSelect::Reconstruct, 1.0);
    let mut samples = Vec::new();
    let mut rows = BTreeSet::new();
    for (x, y) in region.pixels() {
        let mut s = all[y * w + x];
        if s.layer == u32::MAX {
            continue;
        }
        s.target = edited.get(x, y);
        for k in 0..3 {
            rows.insert((s.layer as usize, s.nodes[k] as usize));
        }
        samples.push(s);
    }
    if samples.is_empty() {
        return Err(EditError::RegionOutsideLayers);
    }
    let trainable: Vec<(usize, usize)> = rows.into_iter().collect();
    let cfg = TrainConfig {
        steps: opts.steps,
        batch_size: opts.batch_size,
        adam: AdamConfig { learning_rate: opts.learning_rate, ..Default::default() },
        seed: opts.seed,
        ..Default::default()
    };
    let mut out = rep.clone();
    let fit = fit_samples(&mut out, &samples, &cfg, Some(&trainable))?;
    Ok((out, EditReport { trainable, region_pixels: samples.len(), fit }))
}

/// Pixels of `frame` whose interpolation support includes any of `rows`
/// (the only pixels an edit of those rows can change).
pub fn affected_pixels(rep: &Representation, frame: usize, rows: &[(usize, usize)]) -> Mask {
    let (w, h) = (rep.meta.width, rep.meta.height);
    let samples = frame_samples(rep, frame as f64, &LayerSelect::Reconstruct, 1.0);
    let set: BTreeSet<(usize, usize)> = rows.iter().copied().collect();
    Mask {
        width: w,
        height: h,
        data: samples
            .iter()
            .map(|s| s.layer != u32::MAX && (0..3).any(|k| set.contains(&(s.layer as usize, s.nodes[k] as usize))))
            .collect(),
    }
}
