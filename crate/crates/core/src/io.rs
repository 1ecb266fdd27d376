//! File formats: PNG/PPM frames, `.pvm` mask tracks, `.pvt` trajectories and
//! the `.pvr` representation container.
//!
//! All binary formats are little-endian. Parsers report the section and byte
//! offset of the first problem they hit.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::appearance::{DecoderConfig, DecoderParams, TextureCodes};
use crate::geometry::Point2;
use crate::image::{FrameSequence, LayerMaskTrack, Mask, RgbImage};
use crate::propagation::ProxyLayer;
use crate::representation::{Layer, Meta, Representation, FORMAT_VERSION};
use crate::tracking::TrajectorySet;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("bad magic in {section}: expected {expected:?}, found {found:?}")]
    BadMagic { section: String, expected: String, found: String },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("unexpected EOF at section {section} (offset {offset}, needed {needed} more bytes)")]
    UnexpectedEof { section: String, offset: usize, needed: usize },
    #[error("invalid data in section {section} at offset {offset}: {message}")]
    Invalid { section: String, offset: usize, message: String },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn invalid(section: &str, offset: usize, message: impl Into<String>) -> IoError {
    IoError::Invalid { section: section.to_string(), offset, message: message.into() }
}

/// Bounds-checked little-endian cursor.
struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn take(&mut self, n: usize, section: &str) -> Result<&'a [u8], IoError> {
        let avail = self.data.len().saturating_sub(self.pos);
        if n > avail {
            return Err(IoError::UnexpectedEof { section: section.to_string(), offset: self.pos, needed: n - avail });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, expected: &[u8; 4], section: &str) -> Result<(), IoError> {
        let m = self.take(4, section)?;
        if m != expected {
            return Err(IoError::BadMagic {
                section: section.to_string(),
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(m).into_owned(),
            });
        }
        Ok(())
    }

    fn u32(&mut self, section: &str) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().unwrap()))
    }

    fn u64(&mut self, section: &str) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take(8, section)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, section: &str) -> Result<Vec<f32>, IoError> {
        let bytes = n.checked_mul(4).ok_or_else(|| invalid(section, self.pos, "length overflow"))?;
        let raw = self.take(bytes, section)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, v: impl IntoIterator<Item = f32>) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn to_u32(v: usize, section: &str) -> u32 {
    u32::try_from(v).unwrap_or_else(|_| panic!("{section}: value {v} does not fit in u32"))
}

// ---------------------------------------------------------------- images

fn quantize8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<(), IoError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut enc = png::Encoder::new(BufWriter::new(f), img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let bytes: Vec<u8> = img.data.iter().map(|&v| quantize8(v)).collect();
    let to_err = |e: png::EncodingError| IoError::Image { path: path.to_path_buf(), message: e.to_string() };
    let mut w = enc.write_header().map_err(to_err)?;
    w.write_image_data(&bytes).map_err(to_err)?;
    w.finish().map_err(to_err)
}

fn read_png_raw(path: &Path) -> Result<(usize, usize, usize, Vec<u8>), IoError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut dec = png::Decoder::new(BufReader::new(f));
    dec.set_transformations(png::Transformations::normalize_to_color8());
    let to_err = |e: png::DecodingError| IoError::Image { path: path.to_path_buf(), message: e.to_string() };
    let mut reader = dec.read_info().map_err(to_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| IoError::Image { path: path.to_path_buf(), message: "image too large".into() })?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(to_err)?;
    let ch = info.color_type.samples();
    buf.truncate(info.line_size * info.height as usize);
    let (w, h) = (info.width as usize, info.height as usize);
    let packed: Vec<u8> = buf.chunks(info.line_size).flat_map(|row| row[..w * ch].to_vec()).collect();
    Ok((w, h, ch, packed))
}

/// Reads an 8-bit PNG (grey, grey+alpha, RGB or RGBA) as RGB in `[0, 1]`.
pub fn read_png(path: &Path) -> Result<RgbImage, IoError> {
    let (w, h, ch, data) = read_png_raw(path)?;
    let mut img = RgbImage::new(w, h);
    for (i, px) in data.chunks_exact(ch).enumerate() {
        let rgb = if ch >= 3 { [px[0], px[1], px[2]] } else { [px[0]; 3] };
        img.set(i % w, i / w, rgb.map(|v| v as f64 / 255.0));
    }
    Ok(img)
}

pub fn write_mask_png(path: &Path, m: &Mask) -> Result<(), IoError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut enc = png::Encoder::new(BufWriter::new(f), m.width as u32, m.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let bytes: Vec<u8> = m.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let to_err = |e: png::EncodingError| IoError::Image { path: path.to_path_buf(), message: e.to_string() };
    let mut w = enc.write_header().map_err(to_err)?;
    w.write_image_data(&bytes).map_err(to_err)?;
    w.finish().map_err(to_err)
}

/// Reads a mask PNG; any non-zero first channel counts as set.
pub fn read_mask_png(path: &Path) -> Result<Mask, IoError> {
    let (w, h, ch, data) = read_png_raw(path)?;
    Ok(Mask { width: w, height: h, data: data.chunks_exact(ch).map(|p| p[0] >= 128).collect() })
}

/// Binary PPM (P6, 8-bit).
pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<(), IoError> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|&v| quantize8(v)));
    fs::write(path, out).map_err(io_err(path))
}

pub fn parse_ppm(data: &[u8]) -> Result<RgbImage, IoError> {
    let mut pos = 0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
            if data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(IoError::UnexpectedEof { section: "ppm header".into(), offset: pos, needed: 1 });
        }
        fields.push((start, String::from_utf8_lossy(&data[start..pos]).into_owned()));
    }
    if fields[0].1 != "P6" {
        return Err(IoError::BadMagic { section: "ppm header".into(), expected: "P6".into(), found: fields[0].1.clone() });
    }
    let num = |i: usize| fields[i].1.parse::<usize>().map_err(|_| invalid("ppm header", fields[i].0, "expected an integer"));
    let (w, h, max) = (num(1)?, num(2)?, num(3)?);
    if max != 255 {
        return Err(invalid("ppm header", fields[3].0, "only 8-bit PPM is supported"));
    }
    pos += 1;
    let mut c = Cursor { data, pos };
    let px = c.take(w * h * 3, "ppm pixels")?;
    Ok(RgbImage { width: w, height: h, data: px.iter().map(|&v| v as f64 / 255.0).collect() })
}

pub fn read_ppm(path: &Path) -> Result<RgbImage, IoError> {
    parse_ppm(&fs::read(path).map_err(io_err(path))?)
}

// ---------------------------------------------------------------- .pvm

/// Upper bound on decoded frame area; larger headers are treated as corrupt.
const MAX_PIXELS: usize = 1 << 26;

/// Run-length mask track: magic `PVM1`; u32 layer_id, width, height,
/// t_start, n_frames; then per frame a u32 run count followed by that many
/// u32 run lengths alternating unset/set, starting with unset.
pub fn encode_pvm(track: &LayerMaskTrack) -> Vec<u8> {
    let (w, h) = track.masks.first().map_or((0, 0), |m| (m.width, m.height));
    let mut out = b"PVM1".to_vec();
    for v in [track.layer_id as usize, w, h, track.t_start, track.masks.len()] {
        put_u32(&mut out, to_u32(v, "pvm header"));
    }
    for m in &track.masks {
        let mut runs = Vec::new();
        let mut cur = false;
        let mut len = 0u32;
        for &b in &m.data {
            if b == cur {
                len += 1;
            } else {
                runs.push(len);
                cur = b;
                len = 1;
            }
        }
        runs.push(len);
        put_u32(&mut out, runs.len() as u32);
        for r in runs {
            put_u32(&mut out, r);
        }
    }
    out
}

pub fn decode_pvm(data: &[u8]) -> Result<LayerMaskTrack, IoError> {
    let mut c = Cursor::new(data);
    c.magic(b"PVM1", "pvm header")?;
    let layer_id = c.u32("pvm header")?;
    let w = c.u32("pvm header")? as usize;
    let h = c.u32("pvm header")? as usize;
    let t_start = c.u32("pvm header")? as usize;
    let n = c.u32("pvm header")? as usize;
    if n == 0 {
        return Err(invalid("pvm header", 20, "track has no frames"));
    }
    let area = w.checked_mul(h).filter(|&a| a <= MAX_PIXELS).ok_or_else(|| invalid("pvm header", 8, format!("frame size {w}x{h} is too large")))?;
    // every frame needs at least its run count
    if n > (data.len() - c.pos) / 4 {
        return Err(IoError::UnexpectedEof { section: "pvm frames".into(), offset: c.pos, needed: n * 4 - (data.len() - c.pos) });
    }
    let mut masks = Vec::with_capacity(n);
    for f in 0..n {
        let section = format!("pvm frame {f}");
        let start = c.pos;
        let runs = c.u32(&section)? as usize;
        let mut data = Vec::with_capacity(area);
        let mut cur = false;
        for _ in 0..runs {
            let r = c.u32(&section)? as usize;
            if data.len() + r > area {
                return Err(invalid(&section, c.pos - 4, "runs exceed frame size"));
            }
            data.extend(std::iter::repeat_n(cur, r));
            cur = !cur;
        }
        if data.len() != area {
            return Err(invalid(&section, start, format!("runs cover {} of {area} pixels", data.len())));
        }
        masks.push(Mask { width: w, height: h, data });
    }
    if c.pos != data.len() {
        return Err(invalid("pvm trailer", c.pos, "trailing bytes"));
    }
    Ok(LayerMaskTrack { layer_id, t_start, t_end: t_start + n - 1, masks })
}

// ---------------------------------------------------------------- .pvt

pub fn encode_pvt(set: &TrajectorySet) -> Vec<u8> {
    let g = set.node_count();
    let mut out = b"PVT1".to_vec();
    for v in [set.layer_id as usize, g, set.n_frames, set.t_start] {
        put_u32(&mut out, to_u32(v, "pvt header"));
    }
    put_f32s(&mut out, set.positions.iter().flat_map(|p| [p[0], p[1]]));
    put_f32s(&mut out, set.confidence.iter().copied());
    out
}

pub fn decode_pvt(data: &[u8]) -> Result<TrajectorySet, IoError> {
    let mut c = Cursor::new(data);
    c.magic(b"PVT1", "pvt header")?;
    let layer_id = c.u32("pvt header")?;
    let g = c.u32("pvt header")? as usize;
    let n_frames = c.u32("pvt header")? as usize;
    let t_start = c.u32("pvt header")? as usize;
    if n_frames == 0 {
        return Err(invalid("pvt header", 12, "trajectory set has no frames"));
    }
    let count = g.checked_mul(n_frames).ok_or_else(|| invalid("pvt header", 8, "size overflow"))?;
    let pos_at = c.pos;
    let pos = c.f32s(count.checked_mul(2).ok_or_else(|| invalid("pvt header", 8, "size overflow"))?, "pvt positions")?;
    let conf_at = c.pos;
    let confidence = c.f32s(count, "pvt confidences")?;
    if c.pos != data.len() {
        return Err(invalid("pvt trailer", c.pos, "trailing bytes"));
    }
    if let Some(i) = pos.iter().position(|v| !v.is_finite()) {
        return Err(invalid("pvt positions", pos_at + 4 * i, "non-finite position"));
    }
    if let Some(i) = confidence.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(invalid("pvt confidences", conf_at + 4 * i, "confidence outside [0, 1]"));
    }
    Ok(TrajectorySet { layer_id, t_start, n_frames, positions: pos.chunks_exact(2).map(|p| [p[0], p[1]]).collect(), confidence })
}

// ---------------------------------------------------------------- .pvr

const ALIGN: usize = 64;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
struct Section {
    /// Byte offset relative to the start of the (64-byte aligned) data region.
    offset: usize,
    length: usize,
    crc32: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct LayerEntry {
    layer_id: u32,
    t_start: usize,
    t_end: usize,
    nodes: usize,
    code_dim: usize,
    round_tag: Vec<u32>,
    source_frame: Vec<usize>,
    positions: Section,
    confidence: Section,
    codes: Section,
    masks: Section,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PvrHeader {
    meta: Meta,
    decoder_config: DecoderConfig,
    decoder: Section,
    layers: Vec<LayerEntry>,
}

fn pad_to(out: &mut Vec<u8>, align: usize) {
    while out.len() % align != 0 {
        out.push(0);
    }
}

pub fn encode_pvr(rep: &Representation) -> Vec<u8> {
    let mut data = Vec::new();
    let section = |data: &mut Vec<u8>, bytes: Vec<u8>| {
        pad_to(data, ALIGN);
        let s = Section { offset: data.len(), length: bytes.len(), crc32: crc32fast::hash(&bytes) };
        data.extend_from_slice(&bytes);
        s
    };
    let f32_bytes = |v: &mut dyn Iterator<Item = f64>| -> Vec<u8> { v.flat_map(|x| (x as f32).to_le_bytes()).collect() };
    let mut layers = Vec::new();
    for l in &rep.layers {
        let p = &l.proxy;
        let positions = section(&mut data, f32_bytes(&mut p.positions.iter().flat_map(|q| [q.x, q.y])));
        let confidence = section(&mut data, f32_bytes(&mut p.confidence.iter().copied()));
        let codes = section(&mut data, f32_bytes(&mut l.codes.data.iter().copied()));
        let masks = section(&mut data, encode_pvm(&l.masks));
        layers.push(LayerEntry {
            layer_id: p.layer_id,
            t_start: p.t_start,
            t_end: p.t_end,
            nodes: p.node_count(),
            code_dim: l.codes.dim,
            round_tag: p.round_tag.clone(),
            source_frame: p.source_frame.clone(),
            positions,
            confidence,
            codes,
            masks,
        });
    }
    let decoder = section(&mut data, f32_bytes(&mut rep.decoder.params.iter().copied()));
    let header = PvrHeader { meta: rep.meta.clone(), decoder_config: rep.decoder.config.clone(), decoder, layers };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = b"PVXR".to_vec();
    put_u32(&mut out, FORMAT_VERSION);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    put_u32(&mut out, crc32fast::hash(&json));
    pad_to(&mut out, ALIGN);
    out.extend_from_slice(&data);
    out
}

fn read_section<'a>(data: &'a [u8], base: usize, s: &Section, name: &str) -> Result<&'a [u8], IoError> {
    if s.offset % ALIGN != 0 {
        return Err(invalid(name, base.saturating_add(s.offset), "section is not 64-byte aligned"));
    }
    let start = base.checked_add(s.offset).ok_or_else(|| invalid(name, base, "offset overflow"))?;
    if start > data.len() {
        return Err(IoError::UnexpectedEof { section: name.to_string(), offset: data.len(), needed: (start - data.len()).saturating_add(s.length) });
    }
    let mut c = Cursor { data, pos: start };
    let bytes = c.take(s.length, name)?;
    if crc32fast::hash(bytes) != s.crc32 {
        return Err(invalid(name, start, "checksum mismatch"));
    }
    Ok(bytes)
}

fn f32_vec(bytes: &[u8], expected: usize, name: &str, offset: usize) -> Result<Vec<f64>, IoError> {
    if Some(bytes.len()) != expected.checked_mul(4) {
        return Err(invalid(name, offset, format!("expected {expected} floats, section holds {} bytes", bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect())
}

/// Size limits applied before any allocation driven by header values.
const MAX_DIM: usize = 1 << 16;
const MAX_LAYERS: usize = 64;

fn check_decoder_config(cfg: &DecoderConfig, at: usize) -> Result<(), IoError> {
    let ok = (1..=MAX_DIM).contains(&cfg.code_dim)
        && (1..=MAX_DIM).contains(&cfg.hidden)
        && (2..=MAX_LAYERS).contains(&cfg.layers)
        && cfg.n_freq <= 64;
    if !ok {
        return Err(invalid("pvr metadata", at, "decoder configuration out of range"));
    }
    Ok(())
}

pub fn decode_pvr(data: &[u8]) -> Result<Representation, IoError> {
    let mut c = Cursor::new(data);
    c.magic(b"PVXR", "pvr header")?;
    let version = c.u32("pvr header")?;
    if version != FORMAT_VERSION {
        return Err(IoError::UnsupportedVersion(version));
    }
    let json_len = c.u64("pvr header")?;
    let json_len = usize::try_from(json_len).map_err(|_| invalid("pvr header", 8, "metadata length overflow"))?;
    let json_at = c.pos;
    let json = c.take(json_len, "pvr metadata")?;
    if c.u32("pvr metadata checksum")? != crc32fast::hash(json) {
        return Err(invalid("pvr metadata", json_at, "checksum mismatch"));
    }
    let header: PvrHeader =
        serde_json::from_slice(json).map_err(|e| invalid("pvr metadata", json_at, format!("malformed JSON: {e}")))?;
    let base = c.pos.div_ceil(ALIGN) * ALIGN;
    if let Some(i) = data[c.pos..base.min(data.len())].iter().position(|&b| b != 0) {
        return Err(invalid("pvr padding", c.pos + i, "non-zero padding byte"));
    }
    check_decoder_config(&header.decoder_config, json_at)?;
    if header.layers.len() > MAX_LAYERS {
        return Err(invalid("pvr metadata", json_at, "too many layers"));
    }
    let dec_bytes = read_section(data, base, &header.decoder, "decoder")?;
    let expected = header.decoder_config.param_count();
    let params = f32_vec(dec_bytes, expected, "decoder", base + header.decoder.offset)?;
    let mut layers = Vec::new();
    let mut sections = vec![&header.decoder];
    for (i, e) in header.layers.iter().enumerate() {
        let name = |s: &str| format!("layer {i} {s}");
        sections.extend([&e.positions, &e.confidence, &e.codes, &e.masks]);
        if e.t_end < e.t_start || e.t_end >= u32::MAX as usize || e.round_tag.len() != e.nodes || e.source_frame.len() != e.nodes {
            return Err(invalid(&name("metadata"), json_at, "inconsistent layer table entry"));
        }
        if e.code_dim != header.decoder_config.code_dim {
            return Err(invalid(&name("metadata"), json_at, "code dimension differs from the decoder"));
        }
        let nf = e.t_end + 1 - e.t_start;
        let count = e.nodes.checked_mul(nf).filter(|&n| n <= MAX_PIXELS).ok_or_else(|| invalid(&name("metadata"), json_at, "size overflow"))?;
        let pos = f32_vec(read_section(data, base, &e.positions, &name("positions"))?, count * 2, &name("positions"), base + e.positions.offset)?;
        let confidence =
            f32_vec(read_section(data, base, &e.confidence, &name("confidences"))?, count, &name("confidences"), base + e.confidence.offset)?;
        let codes = f32_vec(read_section(data, base, &e.codes, &name("codes"))?, e.nodes * e.code_dim, &name("codes"), base + e.codes.offset)?;
        let masks = decode_pvm(read_section(data, base, &e.masks, &name("masks"))?).map_err(|err| match err {
            IoError::UnexpectedEof { section, offset, needed } => {
                IoError::UnexpectedEof { section: format!("{} / {}", name("masks"), section), offset: base + e.masks.offset + offset, needed }
            }
            IoError::Invalid { section, offset, message } => {
                IoError::Invalid { section: format!("{} / {}", name("masks"), section), offset: base + e.masks.offset + offset, message }
            }
            other => other,
        })?;
        layers.push(Layer {
            proxy: ProxyLayer {
                layer_id: e.layer_id,
                t_start: e.t_start,
                t_end: e.t_end,
                positions: pos.chunks_exact(2).map(|p| Point2::new(p[0], p[1])).collect(),
                confidence,
                round_tag: e.round_tag.clone(),
                source_frame: e.source_frame.clone(),
            },
            codes: TextureCodes { dim: e.code_dim, data: codes },
            masks,
        });
    }
    let mut spans: Vec<(usize, usize)> = sections.iter().map(|s| (base + s.offset, base + s.offset + s.length)).collect();
    spans.sort_unstable();
    let mut cursor = base;
    for (a, b) in spans {
        if a < cursor {
            return Err(invalid("pvr sections", a, "overlapping sections"));
        }
        if let Some(i) = data[cursor..a].iter().position(|&x| x != 0) {
            return Err(invalid("pvr padding", cursor + i, "non-zero padding byte"));
        }
        cursor = b;
    }
    if cursor != data.len() {
        return Err(invalid("pvr trailer", cursor, "unexpected bytes after the last section"));
    }
    let rep = Representation { meta: header.meta, layers, decoder: DecoderParams { config: header.decoder_config, params } };
    if let Err(v) = rep.validate() {
        return Err(invalid("representation", json_at, format!("{} invariant violation(s), first: {}", v.len(), v[0])));
    }
    Ok(rep)
}

pub fn save_pvr(path: &Path, rep: &Representation) -> Result<(), IoError> {
    fs::write(path, encode_pvr(rep)).map_err(io_err(path))
}

pub fn load_pvr(path: &Path) -> Result<Representation, IoError> {
    decode_pvr(&fs::read(path).map_err(io_err(path))?)
}

pub fn save_pvt(path: &Path, set: &TrajectorySet) -> Result<(), IoError> {
    fs::write(path, encode_pvt(set)).map_err(io_err(path))
}

pub fn load_pvt(path: &Path) -> Result<TrajectorySet, IoError> {
    decode_pvt(&fs::read(path).map_err(io_err(path))?)
}

// ---------------------------------------------------------------- datasets

pub fn frame_name(t: usize) -> String {
    format!("frame_{t:05}.png")
}

pub fn write_frames(dir: &Path, frames: &[RgbImage]) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (t, f) in frames.iter().enumerate() {
        write_png(&dir.join(frame_name(t)), f)?;
    }
    Ok(())
}

fn sorted_entries(dir: &Path, prefix: &str, suffix: &str) -> Result<Vec<PathBuf>, IoError> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with(prefix) && n.ends_with(suffix)))
        .collect();
    v.sort();
    Ok(v)
}

pub fn read_frames(dir: &Path) -> Result<FrameSequence, IoError> {
    let paths = sorted_entries(dir, "frame_", ".png")?;
    let frames = paths.iter().map(|p| read_png(p)).collect::<Result<Vec<_>, _>>()?;
    if let Some(bad) = frames.iter().position(|f| !f.same_size(&frames[0])) {
        return Err(IoError::Image { path: paths[bad].clone(), message: "frame size differs from the first frame".into() });
    }
    Ok(FrameSequence::new(frames))
}

/// Writes `layer_%02d/mask_%05d.png` for every frame of the video (frames
/// outside a layer's lifetime are written empty).
pub fn write_masks(dir: &Path, tracks: &[LayerMaskTrack], width: usize, height: usize, n_frames: usize) -> Result<(), IoError> {
    for tr in tracks {
        let ld = dir.join(format!("layer_{:02}", tr.layer_id));
        fs::create_dir_all(&ld).map_err(io_err(&ld))?;
        for t in 0..n_frames {
            let m = tr.at(t).cloned().unwrap_or_else(|| Mask::new(width, height));
            write_mask_png(&ld.join(format!("mask_{t:05}.png")), &m)?;
        }
    }
    Ok(())
}

/// Reads mask tracks from `layer_XX/` PNG directories or `layer_XX.pvm`
/// files. Foreground tracks are trimmed to their non-empty frames; layer 0
/// keeps the full span.
pub fn read_masks(dir: &Path) -> Result<Vec<LayerMaskTrack>, IoError> {
    let mut tracks = Vec::new();
    for p in sorted_entries(dir, "layer_", "")? {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let id_str = name.trim_start_matches("layer_").trim_end_matches(".pvm");
        let Ok(id) = id_str.parse::<u32>() else { continue };
        if p.is_dir() {
            let masks = sorted_entries(&p, "mask_", ".png")?.iter().map(|m| read_mask_png(m)).collect::<Result<Vec<_>, _>>()?;
            if masks.is_empty() {
                continue;
            }
            let n = masks.len();
            let track = if id == 0 {
                Some(LayerMaskTrack { layer_id: 0, t_start: 0, t_end: n - 1, masks })
            } else {
                LayerMaskTrack::from_full(id, masks)
            };
            tracks.extend(track);
        } else if name.ends_with(".pvm") {
            let mut t = decode_pvm(&fs::read(&p).map_err(io_err(&p))?)?;
            t.layer_id = id;
            tracks.push(t);
        }
    }
    tracks.sort_by_key(|t| t.layer_id);
    Ok(tracks)
}

/// Appends one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
