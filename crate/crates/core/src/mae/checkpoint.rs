//! `MAEC` checkpoints.
//!
//! Layout: `b"MAEC"`, `u8` version, `u32` header length, UTF-8 header of
//! `key = value` lines (architecture and pretraining settings), `u32` tensor
//! count, that many `MTEN` blocks (encoder then decoder, weight then bias per
//! layer), and a trailing little-endian CRC32 of every preceding byte.

use std::collections::BTreeMap;
use std::path::Path;

use super::{ConvLayer, MaeModel, PretrainMeta};
use crate::error::{Error, Result};
use crate::tensor::mten::{read_tensor, write_tensor, Reader};

pub const MAGIC: &[u8; 4] = b"MAEC";
pub const VERSION: u8 = 1;
const FORMAT: &str = "MAEC";

fn header_text(model: &MaeModel) -> String {
    let widths: Vec<String> = model.widths().iter().map(usize::to_string).collect();
    let mut s = format!(
        "depth = {}\nwidths = {}\nin_channels = {}\n",
        model.depth(),
        widths.join(","),
        model.in_channels()
    );
    if let Some(m) = model.pretrain_meta() {
        s.push_str(&format!(
            "patch_px = {}\npatch_frames = {}\nframes = {}\nmask_ratio = {}\nseed = {}\nsteps = {}\n",
            m.patch_px, m.patch_frames, m.frames, m.mask_ratio, m.seed, m.steps
        ));
    }
    s
}

pub fn encode_checkpoint(model: &MaeModel) -> Vec<u8> {
    let header = header_text(model);
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    let params = model.params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        write_tensor(&mut out, p);
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn malformed(reason: impl Into<String>) -> Error {
    Error::Malformed {
        format: FORMAT,
        reason: reason.into(),
    }
}

pub(crate) fn parse_header(text: &str, format: &'static str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Malformed {
            format,
            reason: format!("header line without '=': {line:?}"),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn field<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    map.get(key)
        .ok_or_else(|| malformed(format!("header is missing `{key}`")))?
        .parse()
        .map_err(|_| malformed(format!("header field `{key}` is not valid")))
}

/// Verify magic, version and trailing CRC32; return the body between them.
pub(crate) fn verify_envelope<'a>(bytes: &'a [u8], magic: &[u8; 4], version: u8, format: &'static str) -> Result<&'a [u8]> {
    if bytes.len() < 9 {
        return Err(Error::Corrupt { format });
    }
    if &bytes[..4] != magic {
        return Err(Error::Malformed {
            format,
            reason: "bad magic".into(),
        });
    }
    if bytes[4] != version {
        return Err(Error::VersionMismatch {
            format,
            found: bytes[4],
            expected: version,
        });
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
        return Err(Error::Corrupt { format });
    }
    Ok(&body[5..])
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<MaeModel> {
    let body = verify_envelope(bytes, MAGIC, VERSION, FORMAT)?;
    let mut r = Reader::new(body, FORMAT);
    let header_len = r.u32()? as usize;
    let header = std::str::from_utf8(r.take(header_len)?).map_err(|_| malformed("header is not UTF-8"))?;
    let map = parse_header(header, FORMAT)?;
    let depth: usize = field(&map, "depth")?;
    let in_channels: usize = field(&map, "in_channels")?;
    let widths = map
        .get("widths")
        .ok_or_else(|| malformed("header is missing `widths`"))?
        .split(',')
        .map(|w| w.trim().parse::<usize>().map_err(|_| malformed("bad widths")))
        .collect::<Result<Vec<_>>>()?;
    if widths.len() != depth {
        return Err(malformed("widths length does not match depth"));
    }
    let pretrain = if map.contains_key("patch_px") {
        Some(PretrainMeta {
            patch_px: field(&map, "patch_px")?,
            patch_frames: field(&map, "patch_frames")?,
            frames: field(&map, "frames")?,
            mask_ratio: field(&map, "mask_ratio")?,
            seed: field(&map, "seed")?,
            steps: field(&map, "steps")?,
        })
    } else {
        None
    };
    let count = r.u32()? as usize;
    if count != 4 * depth {
        return Err(malformed(format!("expected {} tensors, found {count}", 4 * depth)));
    }
    let mut layers = Vec::with_capacity(2 * depth);
    for _ in 0..2 * depth {
        let weight = read_tensor(&mut r)?;
        let bias = read_tensor(&mut r)?;
        layers.push(ConvLayer { weight, bias });
    }
    if r.remaining() != 0 {
        return Err(malformed("trailing bytes after tensors"));
    }
    let decoder = layers.split_off(depth);
    MaeModel::from_parts(in_channels, widths, layers, decoder, pretrain).map_err(|e| malformed(e.to_string()))
}

pub fn save_checkpoint(model: &MaeModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MaeModel> {
    let path = path.as_ref();
    decode_checkpoint(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Load and check the declared input channel count.
pub fn load_checkpoint_expecting(path: impl AsRef<Path>, in_channels: usize) -> Result<MaeModel> {
    let model = load_checkpoint(path)?;
    if model.in_channels() != in_channels {
        return Err(Error::ChannelMismatch {
            expected: in_channels,
            found: model.in_channels(),
        });
    }
    Ok(model)
}
