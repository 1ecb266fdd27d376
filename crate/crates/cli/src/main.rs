use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use proxynode::appearance::{fit, FitReport};
use proxynode::config::{ConfigError, PipelineConfig, TrackerConfig};
use proxynode::editing::{edit_keyframe, inpaint, EditError};
use proxynode::image::{background_track, FrameSequence, LayerMaskTrack, Mask};
use proxynode::io::{self, IoError};
use proxynode::par;
use proxynode::pipeline::{self, LayerSeeds, PipelineError};
use proxynode::renderer::{mse, psnr_from_mse, render_view, ssim, LayerSelect, RenderError};
use proxynode::synth::{generate, suite_scene, MotionModel, SceneSpec, SynthError};
use proxynode::tracking::{Tracker, TrajectoryTracker};
use proxynode::Representation;

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Fit(#[from] proxynode::appearance::FitError),
    #[error("{0}")]
    Usage(String),
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "proxynode", version, about = "Layered proxy-node video representation")]
struct Cli {
    /// Seed for every random choice (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for data-parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML or JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Single-threaded, bit-reproducible execution.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset from a scene spec (JSON) or a suite scene name.
    Synth {
        #[arg(long, conflicts_with = "scene")]
        spec: Option<PathBuf>,
        #[arg(long)]
        scene: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seed nodes for every layer of a dataset.
    Vectorize {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Propagate seeds into full trajectories (.pvt per layer plus diagnostics).
    Build {
        #[arg(long)]
        data: PathBuf,
        /// Seeds from `vectorize`; computed on the fly when omitted.
        #[arg(long)]
        seeds: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build and fit a representation (.pvr).
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// Directory of .pvt files to replay instead of running a tracker.
        #[arg(long)]
        trajectories: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Write the loss curve as CSV.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Render frames from a representation.
    Render {
        #[arg(long)]
        rep: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        view: ViewArgs,
    },
    /// Render every frame with the given foreground layers removed.
    Inpaint {
        #[arg(long)]
        rep: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        drop_layers: Vec<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Propagate a keyframe edit by re-optimizing the supporting node codes.
    Edit {
        #[arg(long)]
        rep: PathBuf,
        #[arg(long)]
        keyframe: usize,
        /// Edited keyframe (PNG or PPM).
        #[arg(long)]
        edited: PathBuf,
        /// Region mask (PNG, non-zero = edited).
        #[arg(long)]
        region: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR/SSIM of renders against reference frames (JSON lines on stdout).
    Eval {
        #[arg(long)]
        rep: PathBuf,
        /// Directory of reference `frame_%05d.png`.
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, value_delimiter = ',')]
        drop_layers: Vec<u32>,
        /// Restrict PSNR to the masks of these layers (from the representation).
        #[arg(long, value_delimiter = ',')]
        region_layers: Vec<u32>,
    },
    /// Run the ablation matrix on a dataset and report final losses.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        /// JSON-lines report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ViewArgs {
    /// Single frame to render (all frames when neither --frame nor --time is set).
    #[arg(long, conflicts_with = "time")]
    frame: Option<usize>,
    /// Continuous time to render.
    #[arg(long)]
    time: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, value_delimiter = ',')]
    drop_layers: Vec<u32>,
}

struct Dataset {
    frames: FrameSequence,
    tracks: Vec<LayerMaskTrack>,
    scene: Option<SceneSpec>,
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    let frames = io::read_frames(dir)?;
    if frames.is_empty() {
        return Err(CliError::Usage(format!("no frame_*.png files in {}", dir.display())));
    }
    let f0 = &frames.frames[0];
    let mut tracks: Vec<LayerMaskTrack> = io::read_masks(dir)?.into_iter().filter(|t| t.t_end < frames.len()).collect();
    if tracks.first().is_none_or(|t| t.layer_id != 0) {
        let bg = background_track(f0.width, f0.height, frames.len(), &tracks);
        tracks.insert(0, bg);
    }
    let spec_path = dir.join("scene.json");
    let scene = if spec_path.exists() {
        let text = fs::read_to_string(&spec_path).map_err(|source| IoError::Io { path: spec_path.clone(), source })?;
        Some(serde_json::from_str(&text).map_err(IoError::from)?)
    } else {
        None
    };
    Ok(Dataset { frames, tracks, scene })
}

fn tracker_for(cfg: &PipelineConfig, data: &Dataset) -> Result<Box<dyn Tracker>> {
    let motion = data.scene.as_ref().map(MotionModel::from_spec);
    if cfg.tracker == TrackerConfig::Oracle && motion.is_none() {
        return Err(CliError::Usage("the oracle tracker needs scene.json next to the frames".into()));
    }
    Ok(pipeline::make_tracker(cfg, motion.as_ref().map(|m| (m, data.tracks.as_slice())))?)
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(IoError::from)?;
    fs::write(path, text).map_err(|source| IoError::Io { path: path.to_path_buf(), source }.into())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io(IoError::Io { path: dir.to_path_buf(), source }))
}

fn select_for(rep: &Representation, drop: &[u32]) -> Result<LayerSelect> {
    if drop.is_empty() {
        return Ok(LayerSelect::Reconstruct);
    }
    if drop.contains(&0) {
        return Err(EditError::DropBackground.into());
    }
    if let Some(&id) = drop.iter().find(|&&id| rep.layer_index(id).is_none()) {
        return Err(EditError::UnknownLayer(id).into());
    }
    Ok(LayerSelect::Composite(rep.layers.iter().map(|l| l.proxy.layer_id).filter(|id| !drop.contains(id)).collect()))
}

fn report_fit(fit: &FitReport) {
    eprintln!(
        "fit: {} steps in {:.1}s, final loss {:.4e} (~{:.2} dB)",
        fit.loss_curve.len(),
        fit.seconds,
        fit.final_loss(),
        proxynode::appearance::psnr_estimate(fit.final_loss())
    );
}

fn run(cli: Cli) -> Result<()> {
    if cli.deterministic {
        par::set_sequential(true);
        par::init_threads(1);
    } else if let Some(n) = cli.threads {
        par::init_threads(n.max(1));
    }
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }

    match cli.command {
        Command::Synth { spec, scene, out } => {
            let spec = match (spec, scene) {
                (Some(p), _) => {
                    let text = fs::read_to_string(&p).map_err(|source| IoError::Io { path: p.clone(), source })?;
                    serde_json::from_str::<SceneSpec>(&text).map_err(IoError::from)?
                }
                (None, Some(name)) => suite_scene(&name).ok_or_else(|| CliError::Usage(format!("unknown suite scene {name}")))?,
                (None, None) => return Err(CliError::Usage("pass --spec or --scene".into())),
            };
            let s = generate(&spec)?;
            io::write_frames(&out, &s.frames.frames)?;
            io::write_masks(&out, &s.tracks, spec.width, spec.height, spec.n_frames)?;
            io::write_frames(&out.join("clean"), &s.clean_background.frames)?;
            write_json(&out.join("scene.json"), &spec)?;
            eprintln!("wrote {} frames and {} layers to {}", spec.n_frames, s.tracks.len(), out.display());
        }
        Command::Vectorize { data, out } => {
            let d = load_dataset(&data)?;
            let seeds = pipeline::seed_layers(&d.frames, &d.tracks, &cfg)?;
            for s in &seeds {
                eprintln!("layer {}: {} edge + {} interior seeds", s.layer_id, s.seeds.edge_points.len(), s.seeds.interior_points.len());
            }
            write_json(&out, &seeds)?;
        }
        Command::Build { data, seeds, out } => {
            let d = load_dataset(&data)?;
            let seeds: Option<Vec<LayerSeeds>> = match seeds {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|source| IoError::Io { path: p.clone(), source })?;
                    Some(serde_json::from_str(&text).map_err(IoError::from)?)
                }
                None => None,
            };
            let tracker = tracker_for(&cfg, &d)?;
            let (layers, diags) = pipeline::build_proxies_with(&d.frames, &d.tracks, seeds.as_deref(), tracker.as_ref(), &cfg)?;
            create_dir(&out)?;
            for (proxy, _) in &layers {
                io::save_pvt(&out.join(format!("layer_{:02}.pvt", proxy.layer_id)), &proxy.to_trajectories())?;
            }
            io::write_jsonl(&out.join("diagnostics.jsonl"), &diags)?;
            for dg in &diags {
                eprintln!(
                    "layer {}: {} seeds, {} rounds, max coverage distance {:.2}",
                    dg.layer_id,
                    dg.seed_nodes,
                    dg.rounds.len(),
                    dg.coverage.iter().cloned().fold(0.0, f64::max)
                );
            }
        }
        Command::Fit { data, trajectories, out, loss_csv } => {
            let d = load_dataset(&data)?;
            let tracker: Box<dyn Tracker> = match trajectories {
                Some(dir) => {
                    let mut sets = Vec::new();
                    for t in &d.tracks {
                        sets.push(io::load_pvt(&dir.join(format!("layer_{:02}.pvt", t.layer_id)))?);
                    }
                    Box::new(TrajectoryTracker::new(sets))
                }
                None => tracker_for(&cfg, &d)?,
            };
            let (mut rep, _) = pipeline::build_representation(&d.frames, &d.tracks, tracker.as_ref(), &cfg)?;
            let report = fit(&mut rep, &d.frames, &cfg.train)?;
            report_fit(&report);
            if let Some(p) = loss_csv {
                let f = fs::File::create(&p).map_err(|source| IoError::Io { path: p.clone(), source })?;
                report.write_csv(std::io::BufWriter::new(f)).map_err(|source| IoError::Io { path: p.clone(), source })?;
            }
            io::save_pvr(&out, &rep)?;
        }
        Command::Render { rep, out, view } => {
            let rep = io::load_pvr(&rep)?;
            let select = select_for(&rep, &view.drop_layers)?;
            create_dir(&out)?;
            let times: Vec<(f64, String)> = match (view.frame, view.time) {
                (Some(f), _) => vec![(f as f64, io::frame_name(f))],
                (None, Some(t)) => vec![(t, format!("time_{t:.3}.png"))],
                (None, None) => (0..rep.meta.n_frames).map(|f| (f as f64, io::frame_name(f))).collect(),
            };
            for (t, name) in times {
                if view.frame.is_some() && t as usize >= rep.meta.n_frames {
                    return Err(RenderError::FrameOutOfRange { frame: t as usize, n_frames: rep.meta.n_frames }.into());
                }
                io::write_png(&out.join(name), &render_view(&rep, t, &select, view.scale)?)?;
            }
        }
        Command::Inpaint { rep, drop_layers, out } => {
            let rep = io::load_pvr(&rep)?;
            let frames = inpaint(&rep, &drop_layers)?;
            io::write_frames(&out, &frames)?;
        }
        Command::Edit { rep, keyframe, edited, region, out } => {
            let rep = io::load_pvr(&rep)?;
            let edited = match edited.extension().and_then(|e| e.to_str()) {
                Some("ppm") => io::read_ppm(&edited)?,
                _ => io::read_png(&edited)?,
            };
            let region: Mask = io::read_mask_png(&region)?;
            let (new_rep, report) = edit_keyframe(&rep, keyframe, &edited, &region, &cfg.edit)?;
            eprintln!("edit: {} region pixels, {} trainable node rows", report.region_pixels, report.trainable.len());
            report_fit(&report.fit);
            io::save_pvr(&out, &new_rep)?;
        }
        Command::Eval { rep, reference, drop_layers, region_layers } => {
            let rep = io::load_pvr(&rep)?;
            let refs = io::read_frames(&reference)?;
            let select = select_for(&rep, &drop_layers)?;
            let mut total = 0.0;
            let mut ssim_total = 0.0;
            let mut used = 0usize;
            for (t, want) in refs.frames.iter().enumerate().take(rep.meta.n_frames) {
                let got = render_view(&rep, t as f64, &select, 1.0)?;
                let region = (!region_layers.is_empty()).then(|| {
                    let mut m = Mask::new(rep.meta.width, rep.meta.height);
                    for l in rep.layers.iter().filter(|l| region_layers.contains(&l.proxy.layer_id)) {
                        if let Some(mt) = l.masks.at(t) {
                            m.union_with(mt);
                        }
                    }
                    m
                });
                if region.as_ref().is_some_and(|m| m.is_empty()) {
                    continue;
                }
                let e = mse(&got, want, region.as_ref())?;
                let s = ssim(&got, want)?;
                total += e;
                ssim_total += s;
                used += 1;
                println!("{}", serde_json::json!({ "frame": t, "psnr": psnr_from_mse(e), "ssim": s }));
            }
            let n = used.max(1) as f64;
            println!("{}", serde_json::json!({ "summary": true, "psnr": psnr_from_mse(total / n), "ssim": ssim_total / n }));
        }
        Command::Ablate { data, out } => {
            let d = load_dataset(&data)?;
            let mut rows = Vec::new();
            for (name, pos, freq, layer) in
                [("full", false, false, false), ("w/o-pos", true, false, false), ("w/o-U", false, true, false), ("w/o-layer", false, false, true)]
            {
                let mut c = cfg.clone();
                c.train.disable_position_input = pos;
                c.train.disable_freq_encoding = freq;
                c.train.disable_layering = layer;
                let tracker = tracker_for(&c, &d)?;
                let o = pipeline::run(&d.frames, &d.tracks, tracker.as_ref(), &c)?;
                let loss = o.fit.tail_loss(50);
                eprintln!("{name:>10}: tail loss {loss:.4e} (~{:.2} dB)", proxynode::appearance::psnr_estimate(loss));
                rows.push(serde_json::json!({
                    "variant": name,
                    "final_loss": o.fit.final_loss(),
                    "tail_loss": loss,
                    "params": o.rep.param_count(),
                    "seconds": o.fit.seconds,
                }));
            }
            match out {
                Some(p) => io::write_jsonl(&p, &rows)?,
                None => {
                    for r in &rows {
                        println!("{r}");
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
