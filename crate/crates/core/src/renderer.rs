//! Frame decoding from a fitted representation, plus PSNR / SSIM.

use thiserror::Error;

use crate::appearance::{norm_t, norm_xy, Engine, FlatParams, Sample};
use crate::geometry::{NodeMesh, Point2};
use crate::image::{Mask, RgbImage};
use crate::par;
use crate::representation::Representation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("frame {frame} out of range (video has {n_frames} frames)")]
    FrameOutOfRange { frame: usize, n_frames: usize },
    #[error("time {t} outside [0, {t_max}]")]
    TimeOutOfRange { t: f64, t_max: f64 },
    #[error("scale must be a finite value >= 1, got {0}")]
    InvalidScale(f64),
    #[error("image sizes differ: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("image {0}x{1} is smaller than the 11x11 SSIM window")]
    TooSmall(usize, usize),
}

/// Which layers a render may use.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerSelect {
    /// Every pixel through the layer its mask assigns.
    Reconstruct,
    /// Front-most included layer (by id) covering the pixel, else the
    /// background.
    Composite(Vec<u32>),
}

/// Interpolation samples for every output pixel at continuous time `t` on a
/// grid `scale` times denser than the video. Pixels with no usable layer get
/// `layer == u32::MAX`.
pub fn frame_samples(rep: &Representation, t: f64, select: &LayerSelect, scale: f64) -> Vec<Sample> {
    let (w, h, n) = (rep.meta.width, rep.meta.height, rep.meta.n_frames);
    let (ow, oh) = ((scale * w as f64).ceil() as usize, (scale * h as f64).ceil() as usize);
    let tm = (t.round() as usize).min(n.saturating_sub(1));
    let included: Vec<bool> = rep
        .layers
        .iter()
        .map(|l| match select {
            LayerSelect::Reconstruct => true,
            LayerSelect::Composite(ids) => ids.contains(&l.proxy.layer_id),
        })
        .collect();
    let meshes: Vec<Option<NodeMesh>> = rep
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let needed = (i == 0 || included[i]) && l.masks.at(tm).is_some();
            needed.then(|| NodeMesh::build(&l.proxy.positions_at_time(t)))
        })
        .collect();
    let tn = norm_t(t, n);
    let rows = par::map_range(oh, |j| {
        let y = if scale == 1.0 { j as f64 } else { (j as f64 + 0.5) / scale - 0.5 };
        let my = (y.round().max(0.0) as usize).min(h - 1);
        (0..ow)
            .map(|i| {
                let x = if scale == 1.0 { i as f64 } else { (i as f64 + 0.5) / scale - 0.5 };
                let mx = (x.round().max(0.0) as usize).min(w - 1);
                let li = (1..rep.layers.len())
                    .rev()
                    .find(|&li| included[li] && rep.layers[li].masks.covers(tm, mx, my))
                    .unwrap_or(0);
                let weights = meshes.get(li).and_then(|m| m.as_ref()).and_then(|m| m.weights(&Point2::new(x, y)));
                match weights {
                    Some((nodes, lam)) => Sample {
                        layer: li as u32,
                        nodes: nodes.map(|v| v as u32),
                        weights: lam,
                        coords: [tn, norm_xy(x, w), norm_xy(y, h)],
                        target: [0.0; 3],
                    },
                    None => Sample { layer: u32::MAX, nodes: [0; 3], weights: [0.0; 3], coords: [tn, 0.0, 0.0], target: [0.0; 3] },
                }
            })
            .collect::<Vec<_>>()
    });
    rows.concat()
}

fn render(rep: &Representation, t: f64, select: &LayerSelect, scale: f64) -> RgbImage {
    let (ow, oh) = ((scale * rep.meta.width as f64).ceil() as usize, (scale * rep.meta.height as f64).ceil() as usize);
    let samples = frame_samples(rep, t, select, scale);
    let valid: Vec<Sample> = samples.iter().copied().filter(|s| s.layer != u32::MAX).collect();
    let flat = FlatParams::from_rep(rep);
    let colours = Engine::new(&flat.config).decode(&flat.model(), &valid);
    let mut img = RgbImage::new(ow, oh);
    let mut k = 0;
    for (i, s) in samples.iter().enumerate() {
        if s.layer != u32::MAX {
            img.set(i % ow, i / ow, colours[k]);
            k += 1;
        }
    }
    img
}

pub fn render_frame(rep: &Representation, frame: usize, select: &LayerSelect) -> Result<RgbImage, RenderError> {
    if frame >= rep.meta.n_frames {
        return Err(RenderError::FrameOutOfRange { frame, n_frames: rep.meta.n_frames });
    }
    Ok(render(rep, frame as f64, select, 1.0))
}

/// Renders frame `frame` on a `⌈s·h⌉ × ⌈s·w⌉` grid.
pub fn render_superres(rep: &Representation, frame: usize, scale: f64) -> Result<RgbImage, RenderError> {
    if frame >= rep.meta.n_frames {
        return Err(RenderError::FrameOutOfRange { frame, n_frames: rep.meta.n_frames });
    }
    if !scale.is_finite() || scale < 1.0 {
        return Err(RenderError::InvalidScale(scale));
    }
    Ok(render(rep, frame as f64, &LayerSelect::Reconstruct, scale))
}

/// Renders continuous time `t` with linearly interpolated node positions and
/// nearest-frame masks.
pub fn render_time(rep: &Representation, t: f64) -> Result<RgbImage, RenderError> {
    let t_max = rep.meta.n_frames.saturating_sub(1) as f64;
    if !(0.0..=t_max).contains(&t) {
        return Err(RenderError::TimeOutOfRange { t, t_max });
    }
    Ok(render(rep, t, &LayerSelect::Reconstruct, 1.0))
}

/// General entry point: any time in range, any layer selection, any scale >= 1.
pub fn render_view(rep: &Representation, t: f64, select: &LayerSelect, scale: f64) -> Result<RgbImage, RenderError> {
    let t_max = rep.meta.n_frames.saturating_sub(1) as f64;
    if !(0.0..=t_max).contains(&t) {
        return Err(RenderError::TimeOutOfRange { t, t_max });
    }
    if !scale.is_finite() || scale < 1.0 {
        return Err(RenderError::InvalidScale(scale));
    }
    Ok(render(rep, t, select, scale))
}

fn check_size(a: &RgbImage, b: &RgbImage) -> Result<(), RenderError> {
    if !a.same_size(b) {
        return Err(RenderError::SizeMismatch(a.width, a.height, b.width, b.height));
    }
    Ok(())
}

/// Mean squared error over the pixels of `mask` (all pixels when `None`).
pub fn mse(a: &RgbImage, b: &RgbImage, mask: Option<&Mask>) -> Result<f64, RenderError> {
    check_size(a, b)?;
    let (mut s, mut n) = (0.0, 0usize);
    for i in 0..a.width * a.height {
        if mask.is_some_and(|m| !m.data[i]) {
            continue;
        }
        for c in 0..3 {
            let d = a.data[3 * i + c] - b.data[3 * i + c];
            s += d * d;
        }
        n += 3;
    }
    Ok(if n == 0 { 0.0 } else { s / n as f64 })
}

/// Largest reported PSNR; identical images map here.
pub const PSNR_CAP: f64 = 99.0;

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 { PSNR_CAP } else { (10.0 * (1.0 / mse).log10()).min(PSNR_CAP) }
}

pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64, RenderError> {
    mse(a, b, None).map(psnr_from_mse)
}

pub fn psnr_masked(a: &RgbImage, b: &RgbImage, mask: &Mask) -> Result<f64, RenderError> {
    mse(a, b, Some(mask)).map(psnr_from_mse)
}

fn gaussian_window() -> [f64; 11] {
    let mut g = [0.0; 11];
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - 5.0;
        *v = (-d * d / (2.0 * 1.5 * 1.5)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Mean SSIM over valid 11×11 Gaussian windows (σ = 1.5), averaged over
/// channels, with `C1 = 0.01²`, `C2 = 0.03²`.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64, RenderError> {
    check_size(a, b)?;
    let (w, h) = (a.width, a.height);
    if w < 11 || h < 11 {
        return Err(RenderError::TooSmall(w, h));
    }
    let g = gaussian_window();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (ow, oh) = (w - 10, h - 10);
    let mut total = 0.0;
    for ch in 0..3 {
        let per_row = par::map_range(oh, |y| {
            let mut acc = 0.0;
            for x in 0..ow {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (j, gy) in g.iter().enumerate() {
                    for (i, gx) in g.iter().enumerate() {
                        let k = ((y + j) * w + x + i) * 3 + ch;
                        let wt = gx * gy;
                        let (va, vb) = (a.data[k], b.data[k]);
                        ma += wt * va;
                        mb += wt * vb;
                        saa += wt * va * va;
                        sbb += wt * vb * vb;
                        sab += wt * va * vb;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
            acc
        });
        total += per_row.iter().sum::<f64>() / (ow * oh) as f64;
    }
    Ok(total / 3.0)
}

/// Box filter by an integer factor (used to compare super-resolved renders).
pub fn box_downsample(img: &RgbImage, factor: usize) -> RgbImage {
    let (w, h) = (img.width / factor, img.height / factor);
    let mut out = RgbImage::new(w, h);
    let inv = 1.0 / (factor * factor) as f64;
    for y in 0..h {
        for x in 0..w {
            let mut c = [0.0; 3];
            for j in 0..factor {
                for i in 0..factor {
                    let p = img.get(x * factor + i, y * factor + j);
                    for k in 0..3 {
                        c[k] += p[k];
                    }
                }
            }
            out.set(x, y, c.map(|v| v * inv));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::representation::tests::tiny_rep;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RgbImage { width: w, height: h, data: (0..w * h * 3).map(|_| rng.gen::<f64>()).collect() }
    }

    #[test]
    fn psnr_identical_and_offset() {
        let a = RgbImage::filled(8, 8, [0.3, 0.4, 0.5]);
        assert_eq!(psnr(&a, &a).unwrap(), 99.0);
        let b = RgbImage::filled(8, 8, [0.4, 0.5, 0.6]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&a, &RgbImage::new(4, 4)).is_err());
    }

    /// Straightforward SSIM: builds the full 2-D kernel and explicit local
    /// statistics with the textbook covariance formula.
    fn reference_ssim(a: &RgbImage, b: &RgbImage) -> f64 {
        let mut k = [[0.0; 11]; 11];
        let mut s = 0.0;
        for (j, row) in k.iter_mut().enumerate() {
            for (i, v) in row.iter_mut().enumerate() {
                let r2 = (i as f64 - 5.0).powi(2) + (j as f64 - 5.0).powi(2);
                *v = (-r2 / 4.5).exp();
                s += *v;
            }
        }
        let mut total = 0.0;
        for ch in 0..3 {
            let mut sum = 0.0;
            let mut cnt = 0.0;
            for y in 0..a.height - 10 {
                for x in 0..a.width - 10 {
                    let px = |img: &RgbImage, i: usize, j: usize| img.data[((y + j) * img.width + x + i) * 3 + ch];
                    let (mut ma, mut mb) = (0.0, 0.0);
                    for j in 0..11 {
                        for i in 0..11 {
                            ma += k[j][i] / s * px(a, i, j);
                            mb += k[j][i] / s * px(b, i, j);
                        }
                    }
                    let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
                    for j in 0..11 {
                        for i in 0..11 {
                            let wt = k[j][i] / s;
                            va += wt * (px(a, i, j) - ma).powi(2);
                            vb += wt * (px(b, i, j) - mb).powi(2);
                            cab += wt * (px(a, i, j) - ma) * (px(b, i, j) - mb);
                        }
                    }
                    let (c1, c2) = (1e-4, 9e-4);
                    sum += (2.0 * ma * mb + c1) * (2.0 * cab + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    cnt += 1.0;
                }
            }
            total += sum / cnt;
        }
        total / 3.0
    }

    #[test]
    fn ssim_identity_and_reference() {
        let a = random_image(24, 20, 1);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let mut b = random_image(24, 20, 2);
        for (x, y) in b.data.iter_mut().zip(&a.data) {
            *x = 0.7 * *y + 0.3 * *x;
        }
        let s = ssim(&a, &b).unwrap();
        assert!((s - reference_ssim(&a, &b)).abs() < 1e-4);
        assert!(s > 0.0 && s < 1.0);
        assert!(ssim(&RgbImage::new(8, 8), &RgbImage::new(8, 8)).is_err());
    }

    #[test]
    fn composite_all_equals_reconstruct() {
        let rep = tiny_rep(3);
        let a = render_frame(&rep, 1, &LayerSelect::Reconstruct).unwrap();
        let b = render_frame(&rep, 1, &LayerSelect::Composite(vec![0, 1])).unwrap();
        assert_eq!(a, b);
        assert!(a.data.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }

    #[test]
    fn integer_time_equals_frame() {
        let rep = tiny_rep(3);
        for f in 0..3 {
            assert_eq!(render_time(&rep, f as f64).unwrap(), render_frame(&rep, f, &LayerSelect::Reconstruct).unwrap());
        }
        assert!(render_time(&rep, 2.5).is_err());
        assert!(render_frame(&rep, 3, &LayerSelect::Reconstruct).is_err());
    }

    #[test]
    fn scale_one_matches_frame() {
        let rep = tiny_rep(2);
        assert_eq!(render_superres(&rep, 0, 1.0).unwrap(), render_frame(&rep, 0, &LayerSelect::Reconstruct).unwrap());
        let big = render_superres(&rep, 0, 2.5).unwrap();
        assert_eq!((big.width, big.height), (60, 50));
        assert!(render_superres(&rep, 0, 0.5).is_err());
    }

    #[test]
    fn node_positions_continuous_in_time() {
        let rep = tiny_rep(3);
        let p = &rep.layers[1].proxy;
        let mut prev = p.positions_at_time(0.0);
        let mut t: f64 = 0.0;
        while t < 2.0 {
            t += 0.01;
            let cur = p.positions_at_time(t.min(2.0));
            for (a, b) in prev.iter().zip(&cur) {
                assert!(a.dist(b) <= 1.0 * 0.011);
            }
            prev = cur;
        }
    }

    #[test]
    fn dropping_foreground_uses_background() {
        let rep = tiny_rep(2);
        let s = frame_samples(&rep, 0.0, &LayerSelect::Composite(vec![0]), 1.0);
        assert!(s.iter().all(|s| s.layer == 0));
        let s = frame_samples(&rep, 0.0, &LayerSelect::Reconstruct, 1.0);
        assert!(s.iter().any(|s| s.layer == 1));
    }

    #[test]
    fn box_downsample_averages() {
        let mut img = RgbImage::new(4, 2);
        img.set(0, 0, [1.0, 0.0, 0.0]);
        img.set(1, 1, [0.0, 1.0, 0.0]);
        let d = box_downsample(&img, 2);
        assert_eq!(d.get(0, 0), [0.25, 0.25, 0.0]);
        assert_eq!(d.get(1, 0), [0.0; 3]);
    }
}
