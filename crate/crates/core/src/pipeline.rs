//! End-to-end construction: masks and frames in, fitted representation out.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::appearance::{fit, FitError, FitReport};
use crate::config::{PipelineConfig, TrackerConfig};
use crate::image::{FrameSequence, LayerMaskTrack, Mask};
use crate::propagation::{build_layer, supplement, LayerDiagnostics, PropagationError, ProxyLayer};
use crate::representation::{Meta, Representation, FORMAT_VERSION};
use crate::synth::MotionModel;
use crate::tracking::{LkTracker, OracleTracker, Tracker};
use crate::vectorizer::{vectorize_layer, SeedNodes, VectorizeError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("video has no frames")]
    EmptyVideo,
    #[error("no mask tracks supplied")]
    NoTracks,
    #[error("layer {layer_id}: mask size or lifetime does not match the video")]
    TrackMismatch { layer_id: u32 },
    #[error("the oracle tracker needs a synthetic scene with known motion")]
    OracleUnavailable,
    #[error("layer {layer_id}: {source}")]
    Vectorize { layer_id: u32, source: VectorizeError },
    #[error("no seeds supplied for layer {0}")]
    MissingSeeds(u32),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Builds the configured tracker. `scene` supplies ground-truth motion and
/// the masks the oracle uses for visibility.
pub fn make_tracker(cfg: &PipelineConfig, scene: Option<(&MotionModel, &[LayerMaskTrack])>) -> Result<Box<dyn Tracker>, PipelineError> {
    match cfg.tracker {
        TrackerConfig::Lk => Ok(Box::new(LkTracker::new(cfg.lk.clone()))),
        TrackerConfig::Oracle => {
            let (motion, masks) = scene.ok_or(PipelineError::OracleUnavailable)?;
            Ok(Box::new(OracleTracker::new(motion.clone(), masks.to_vec())))
        }
    }
}

/// One layer covering every pixel of every frame.
pub fn single_layer(width: usize, height: usize, n_frames: usize) -> LayerMaskTrack {
    LayerMaskTrack { layer_id: 0, t_start: 0, t_end: n_frames - 1, masks: vec![Mask::full(width, height); n_frames] }
}

fn check_inputs(video: &FrameSequence, tracks: &[LayerMaskTrack]) -> Result<(), PipelineError> {
    let f0 = video.frames.first().ok_or(PipelineError::EmptyVideo)?;
    if tracks.is_empty() {
        return Err(PipelineError::NoTracks);
    }
    for tr in tracks {
        let ok = tr.t_end < video.len()
            && tr.t_start <= tr.t_end
            && tr.masks.len() == tr.t_end + 1 - tr.t_start
            && tr.masks.iter().all(|m| m.width == f0.width && m.height == f0.height);
        if !ok {
            return Err(PipelineError::TrackMismatch { layer_id: tr.layer_id });
        }
    }
    Ok(())
}

fn seeds_for(video: &FrameSequence, track: &LayerMaskTrack, cfg: &PipelineConfig) -> Result<SeedNodes, PipelineError> {
    let t = track.t_start;
    let mask = &track.masks[0];
    let mut seeds = vectorize_layer(&video.frames[t], mask, t, &cfg.vectorize)
        .map_err(|source| PipelineError::Vectorize { layer_id: track.layer_id, source })?;
    if seeds.is_empty() && !mask.is_empty() {
        // Components below the vectorizer's area threshold still need nodes.
        seeds.interior_points = supplement(mask, &[], cfg.propagation.eps_d, cfg.propagation.max_nodes);
    }
    Ok(seeds)
}

/// Seed nodes of one layer, as exchanged between `vectorize` and `build`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSeeds {
    pub layer_id: u32,
    pub seeds: SeedNodes,
}

/// The tracks the pipeline actually builds: the input tracks, or a single
/// full-frame layer 0 when layering is disabled.
pub fn effective_tracks(video: &FrameSequence, tracks: &[LayerMaskTrack], cfg: &PipelineConfig) -> Result<Vec<LayerMaskTrack>, PipelineError> {
    check_inputs(video, tracks)?;
    if cfg.train.disable_layering {
        let f0 = &video.frames[0];
        Ok(vec![single_layer(f0.width, f0.height, video.len())])
    } else {
        Ok(tracks.to_vec())
    }
}

/// Seeds for every effective track at its first frame.
pub fn seed_layers(video: &FrameSequence, tracks: &[LayerMaskTrack], cfg: &PipelineConfig) -> Result<Vec<LayerSeeds>, PipelineError> {
    effective_tracks(video, tracks, cfg)?
        .iter()
        .map(|t| Ok(LayerSeeds { layer_id: t.layer_id, seeds: seeds_for(video, t, cfg)? }))
        .collect()
}

/// Proxy trajectories for every track. With layering disabled all tracks are
/// merged into a single full-frame layer 0. `seeds` overrides the vectorizer.
pub fn build_proxies_with(
    video: &FrameSequence,
    tracks: &[LayerMaskTrack],
    seeds: Option<&[LayerSeeds]>,
    tracker: &dyn Tracker,
    cfg: &PipelineConfig,
) -> Result<(Vec<(ProxyLayer, LayerMaskTrack)>, Vec<LayerDiagnostics>), PipelineError> {
    let tracks = effective_tracks(video, tracks, cfg)?;
    let mut layers = Vec::new();
    let mut diags = Vec::new();
    for track in &tracks {
        let s = match seeds {
            Some(all) => all
                .iter()
                .find(|s| s.layer_id == track.layer_id)
                .map(|s| s.seeds.clone())
                .ok_or(PipelineError::MissingSeeds(track.layer_id))?,
            None => seeds_for(video, track, cfg)?,
        };
        let query_layer = if cfg.train.disable_layering { None } else { Some(track.layer_id) };
        let (proxy, diag) = build_layer(&s, track, tracker, video, &cfg.propagation, query_layer)?;
        layers.push((proxy, track.clone()));
        diags.push(diag);
    }
    Ok((layers, diags))
}

pub fn build_proxies(
    video: &FrameSequence,
    tracks: &[LayerMaskTrack],
    tracker: &dyn Tracker,
    cfg: &PipelineConfig,
) -> Result<(Vec<(ProxyLayer, LayerMaskTrack)>, Vec<LayerDiagnostics>), PipelineError> {
    build_proxies_with(video, tracks, None, tracker, cfg)
}

/// Wraps proxy layers into a freshly initialized representation.
pub fn init_representation(video: &FrameSequence, layers: Vec<(ProxyLayer, LayerMaskTrack)>, cfg: &PipelineConfig) -> Representation {
    let f0 = &video.frames[0];
    let meta = Meta {
        width: f0.width,
        height: f0.height,
        n_frames: video.len(),
        eps_d: cfg.propagation.eps_d,
        format_version: FORMAT_VERSION,
        config: cfg.to_json(),
    };
    let decoder = cfg.train.apply_ablation(&cfg.decoder);
    Representation::init(meta, layers, decoder, cfg.seed)
}

/// Initialized (unfitted) representation.
pub fn build_representation(
    video: &FrameSequence,
    tracks: &[LayerMaskTrack],
    tracker: &dyn Tracker,
    cfg: &PipelineConfig,
) -> Result<(Representation, Vec<LayerDiagnostics>), PipelineError> {
    let (layers, diags) = build_proxies(video, tracks, tracker, cfg)?;
    Ok((init_representation(video, layers, cfg), diags))
}

pub struct PipelineOutput {
    pub rep: Representation,
    pub diagnostics: Vec<LayerDiagnostics>,
    pub fit: FitReport,
}

/// Builds and fits a representation.
pub fn run(
    video: &FrameSequence,
    tracks: &[LayerMaskTrack],
    tracker: &dyn Tracker,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    let (mut rep, diagnostics) = build_representation(video, tracks, tracker, cfg)?;
    let fit = fit(&mut rep, video, &cfg.train)?;
    Ok(PipelineOutput { rep, diagnostics, fit })
}
