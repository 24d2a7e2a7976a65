//! Binary PNM (P5/P6, maxval 255) images, frame stacks, and conversion to
//! `1×C×H×W` tensors with values in `[0, 1]`.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const FORMAT: &str = "PNM";

/// Image with `channels ∈ {1, 3}`, stored channel-planar, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    /// Build from channel-planar data; values must lie in `[0, 1]`.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("image channels must be 1 or 3, got {channels}")));
        }
        if height == 0 || width == 0 || data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "image {height}x{width}x{channels} does not match {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("image values must lie in [0, 1]"));
        }
        Ok(ImageBuffer {
            height,
            width,
            channels,
            data,
        })
    }

    /// Like [`ImageBuffer::new`] but clamps every value into `[0, 1]`.
    pub fn from_clamped(height: usize, width: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(height, width, channels, data)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Channel-planar pixel values.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    /// Round every value to the nearest multiple of 1/255.
    pub fn quantize8(&self) -> ImageBuffer {
        ImageBuffer {
            data: self.data.iter().map(|&v| (v * 255.0).round() / 255.0).collect(),
            ..self.clone()
        }
    }

    /// Luma with weights 0.299 / 0.587 / 0.114; single-channel images pass through.
    pub fn to_gray(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.data.clone();
        }
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        r.iter()
            .zip(g)
            .zip(b)
            .map(|((r, g), b)| 0.299 * r + 0.587 * g + 0.114 * b)
            .collect()
    }
}

/// A clip of `T ≥ 1` frames sharing height, width and channels.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameStack {
    frames: Vec<ImageBuffer>,
}

impl FrameStack {
    pub fn new(frames: Vec<ImageBuffer>) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::invalid("frame stack needs at least one frame"))?;
        let dims = (first.height, first.width, first.channels);
        for (i, f) in frames.iter().enumerate() {
            if (f.height, f.width, f.channels) != dims {
                return Err(Error::invalid(format!(
                    "frame {i} is {}x{}x{}, expected {}x{}x{}",
                    f.height, f.width, f.channels, dims.0, dims.1, dims.2
                )));
            }
        }
        Ok(FrameStack { frames })
    }

    pub fn frames(&self) -> &[ImageBuffer] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub fn to_tensor(img: &ImageBuffer) -> Tensor {
    Tensor::from_parts(vec![1, img.channels, img.height, img.width], img.data.clone())
}

/// Convert a `1×C×H×W` tensor (C ∈ {1, 3}) to an image, clamping into `[0, 1]`.
pub fn from_tensor(t: &Tensor) -> Result<ImageBuffer> {
    let (n, c, h, w) = t.dims4()?;
    if n != 1 {
        return Err(Error::invalid(format!("from_tensor needs batch size 1, got {n}")));
    }
    ImageBuffer::from_clamped(h, w, c, t.data().to_vec())
}

/// Concatenate frames along channels in temporal order: `1×(C·T)×H×W`.
pub fn stack_frames(fs: &FrameStack) -> Tensor {
    let f0 = &fs.frames[0];
    let mut data = Vec::with_capacity(f0.data.len() * fs.len());
    for f in &fs.frames {
        data.extend_from_slice(&f.data);
    }
    Tensor::from_parts(vec![1, f0.channels * fs.len(), f0.height, f0.width], data)
}

/// Inverse of [`stack_frames`], clamping into `[0, 1]`.
pub fn unstack_frames(t: &Tensor, channels_per_frame: usize) -> Result<FrameStack> {
    let (n, c, h, w) = t.dims4()?;
    if n != 1 || channels_per_frame == 0 || c % channels_per_frame != 0 {
        return Err(Error::invalid(format!(
            "cannot split shape {:?} into frames of {channels_per_frame} channels",
            t.shape()
        )));
    }
    let per = channels_per_frame * h * w;
    let frames = t
        .data()
        .chunks_exact(per)
        .map(|chunk| ImageBuffer::from_clamped(h, w, channels_per_frame, chunk.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    FrameStack::new(frames)
}

fn malformed(reason: impl Into<String>) -> Error {
    Error::Malformed {
        format: FORMAT,
        reason: reason.into(),
    }
}

/// Parse the next whitespace-delimited header integer, skipping `#` comments.
fn header_int(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            None => return Err(Error::UnexpectedEof { format: FORMAT }),
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(malformed("expected a decimal integer in header"));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .unwrap()
        .parse()
        .map_err(|_| malformed("header integer out of range"))
}

pub fn decode_pnm(bytes: &[u8]) -> Result<ImageBuffer> {
    if bytes.len() < 2 {
        return Err(Error::UnexpectedEof { format: FORMAT });
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        other => return Err(malformed(format!("unsupported magic {:?}", String::from_utf8_lossy(other)))),
    };
    let mut pos = 2;
    let width = header_int(bytes, &mut pos)?;
    let height = header_int(bytes, &mut pos)?;
    let maxval = header_int(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(malformed(format!("unsupported maxval {maxval} (only 255)")));
    }
    if width == 0 || height == 0 {
        return Err(malformed("zero image dimension"));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        Some(_) => return Err(malformed("missing whitespace after maxval")),
        None => return Err(Error::UnexpectedEof { format: FORMAT }),
    }
    let n = width * height;
    let payload = bytes
        .get(pos..pos + n * channels)
        .ok_or(Error::UnexpectedEof { format: FORMAT })?;
    let mut data = vec![0.0; n * channels];
    for (i, &v) in payload.iter().enumerate() {
        let (pixel, c) = (i / channels, i % channels);
        data[c * n + pixel] = v as f64 / 255.0;
    }
    ImageBuffer::new(height, width, channels, data)
}

pub fn encode_pnm(img: &ImageBuffer) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    let n = img.width * img.height;
    out.reserve(n * img.channels);
    for pixel in 0..n {
        for c in 0..img.channels {
            out.push((img.data[c * n + pixel] * 255.0).round() as u8);
        }
    }
    out
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    decode_pnm(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_pnm(path: impl AsRef<Path>, img: &ImageBuffer) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pnm(img)).map_err(|e| Error::io(path, e))
}

/// Sort key that orders `frame2` before `frame10`.
fn natural_key(p: &Path) -> (u64, String) {
    let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let digits: String = name.chars().filter(char::is_ascii_digit).collect();
    (digits.parse().unwrap_or(u64::MAX), name)
}

fn sorted_entries(dir: &Path, want_dirs: bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let keep = if want_dirs {
            path.is_dir()
        } else {
            path.is_file()
                && path
                    .extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("ppm") || e.eq_ignore_ascii_case("pgm"))
        };
        if keep {
            out.push(path);
        }
    }
    out.sort_by_key(|p| natural_key(p));
    Ok(out)
}

/// Load `<dir>/NNNN.ppm` (or `.pgm`) images in index order.
pub fn load_image_dir(dir: impl AsRef<Path>) -> Result<Vec<ImageBuffer>> {
    let dir = dir.as_ref();
    let files = sorted_entries(dir, false)?;
    if files.is_empty() {
        return Err(Error::invalid(format!("no PNM images in {}", dir.display())));
    }
    files.iter().map(read_pnm).collect()
}

/// Load `<dir>/clipK/frameT.ppm` clips in index order.
pub fn load_video_dir(dir: impl AsRef<Path>) -> Result<Vec<FrameStack>> {
    let dir = dir.as_ref();
    let clips = sorted_entries(dir, true)?;
    if clips.is_empty() {
        return Err(Error::invalid(format!("no clip directories in {}", dir.display())));
    }
    clips
        .iter()
        .map(|clip| {
            let frames = sorted_entries(clip, false)?
                .iter()
                .map(read_pnm)
                .collect::<Result<Vec<_>>>()?;
            FrameStack::new(frames)
        })
        .collect()
}
