//! Depth map and mask files.
//!
//! Three depth encodings are supported:
//!
//! - PFM: `Pf` grayscale header, the sign of the scale line selects byte
//!   order, rows stored bottom to top.
//! - PNG16: single-channel 16-bit PNG with a `depth_scale` text chunk;
//!   stored value `q` decodes to `q * depth_scale`, and `q = 0` is invalid.
//! - RawF32: `DBF1`, then little-endian `u32` width, height and kind code,
//!   then the little-endian `f32` payload in row-major order.
//!
//! Decoding works on byte slices and never panics; every failure names the
//! byte offset where the input stopped making sense.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use depthkit_core::map::usable_value;
use depthkit_core::{DepthKind, DepthMap, ValidMask};

/// Largest accepted width or height.
pub const MAX_SIDE: usize = 16384;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];
const RAW_MAGIC: &[u8; 4] = b"DBF1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
    Pfm,
    Png16,
    RawF32,
}

impl Format {
    /// Guesses the format from a file extension: `.pfm`, `.png`, or
    /// `.dbf` / `.f32` / `.raw`.
    pub fn from_path(path: &Path) -> Option<Format> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "pfm" => Some(Format::Pfm),
            "png" => Some(Format::Png16),
            "dbf" | "f32" | "raw" => Some(Format::RawF32),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Pfm => "pfm",
            Format::Png16 => "png",
            Format::RawF32 => "dbf",
        }
    }
}

/// Structural problems found while decoding bytes.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecodeError {
    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },
    #[error("dimensions {width}x{height} at byte {offset} exceed {MAX_SIDE} per side")]
    DimensionOverflow { offset: usize, width: u64, height: u64 },
    #[error("payload truncated at byte {offset}: needed {needed} bytes, found {found}")]
    TruncatedPayload { offset: usize, needed: usize, found: usize },
}

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Decode {
        path: PathBuf,
        #[source]
        source: DecodeError,
    },
    #[error("{}: unknown depth file extension", path.display())]
    UnknownFormat { path: PathBuf },
    #[error("value {value} at pixel {index} cannot be stored: {reason}")]
    UnrepresentableValue {
        index: usize,
        value: f32,
        reason: &'static str,
    },
    #[error("png encoder: {0}")]
    Encode(String),
    #[error("{}: {source}", path.display())]
    Shape {
        path: PathBuf,
        #[source]
        source: depthkit_core::Error,
    },
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn decode(path: &Path, source: DecodeError) -> Self {
        IoError::Decode {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn malformed(offset: usize, reason: impl Into<String>) -> DecodeError {
    DecodeError::MalformedHeader {
        offset,
        reason: reason.into(),
    }
}

fn check_dims(offset: usize, width: u64, height: u64) -> Result<(usize, usize), DecodeError> {
    if width == 0 || height == 0 {
        return Err(malformed(offset, "zero width or height"));
    }
    if width > MAX_SIDE as u64 || height > MAX_SIDE as u64 {
        return Err(DecodeError::DimensionOverflow { offset, width, height });
    }
    Ok((width as usize, height as usize))
}

fn payload(bytes: &[u8], start: usize, needed: usize) -> Result<&[u8], DecodeError> {
    let found = bytes.len().saturating_sub(start);
    if found < needed {
        return Err(DecodeError::TruncatedPayload {
            offset: bytes.len(),
            needed,
            found,
        });
    }
    Ok(&bytes[start..start + needed])
}

/// Value written for an invalid pixel: its stored value when that already
/// reads back as invalid, otherwise the format sentinel.
fn invalid_value(stored: f32, kind: DepthKind, sentinel: f32) -> f32 {
    if usable_value(stored, kind) {
        sentinel
    } else {
        stored
    }
}

// ---------------------------------------------------------------- PFM

/// Reads one whitespace-delimited header token starting at `*pos`.
fn pfm_token<'a>(bytes: &'a [u8], pos: &mut usize, what: &str) -> Result<(usize, &'a str), DecodeError> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
        if *pos - start > 64 {
            return Err(malformed(start, format!("{what} token too long")));
        }
    }
    if start == *pos {
        return Err(malformed(start, format!("missing {what}")));
    }
    let text =
        std::str::from_utf8(&bytes[start..*pos]).map_err(|_| malformed(start, format!("{what} is not ASCII")))?;
    Ok((start, text))
}

pub fn decode_pfm(bytes: &[u8], kind: DepthKind) -> Result<DepthMap, DecodeError> {
    let mut pos = 0;
    let (at, magic) = pfm_token(bytes, &mut pos, "magic")?;
    match magic {
        "Pf" => {}
        "PF" => return Err(malformed(at, "colour PFM is not a depth map")),
        _ => return Err(malformed(at, "expected `Pf`")),
    }
    let (wat, w) = pfm_token(bytes, &mut pos, "width")?;
    let width: u64 = w.parse().map_err(|_| malformed(wat, "width is not an integer"))?;
    let (hat, h) = pfm_token(bytes, &mut pos, "height")?;
    let height: u64 = h.parse().map_err(|_| malformed(hat, "height is not an integer"))?;
    let (width, height) = check_dims(wat, width, height)?;
    let (sat, s) = pfm_token(bytes, &mut pos, "scale")?;
    let scale: f64 = s.parse().map_err(|_| malformed(sat, "scale is not a number"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(malformed(sat, "scale must be non-zero and finite"));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(malformed(pos, "scale must be followed by a single whitespace byte"));
    }
    pos += 1;
    let little = scale < 0.0;
    let data = payload(bytes, pos, width * height * 4)?;
    let mut values = vec![0f32; width * height];
    for (row_in_file, chunk) in data.chunks_exact(width * 4).enumerate() {
        let y = height - 1 - row_in_file;
        for (x, b) in chunk.chunks_exact(4).enumerate() {
            let raw = [b[0], b[1], b[2], b[3]];
            values[y * width + x] = if little {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
        }
    }
    Ok(DepthMap::from_values(width, height, values, kind).expect("length matches header"))
}

/// Little-endian PFM with scale `-1.0`.
pub fn encode_pfm(map: &DepthMap) -> Vec<u8> {
    let (w, h) = map.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            let i = y * w + x;
            let v = map.values()[i];
            let v = if map.is_valid(i) {
                v
            } else {
                invalid_value(v, map.kind(), f32::NAN)
            };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

// ------------------------------------------------------------- RawF32

pub fn decode_raw(bytes: &[u8]) -> Result<DepthMap, DecodeError> {
    if bytes.len() < 16 {
        return Err(malformed(bytes.len(), "header needs 16 bytes"));
    }
    if &bytes[..4] != RAW_MAGIC {
        return Err(malformed(0, "expected magic `DBF1`"));
    }
    let word = |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]);
    let (width, height) = check_dims(4, u64::from(word(4)), u64::from(word(8)))?;
    let kind =
        DepthKind::from_code(word(12)).ok_or_else(|| malformed(12, format!("unknown kind code {}", word(12))))?;
    let data = payload(bytes, 16, width * height * 4)?;
    let values = data
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(DepthMap::from_values(width, height, values, kind).expect("length matches header"))
}

pub fn encode_raw(map: &DepthMap) -> Vec<u8> {
    let (w, h) = map.dims();
    let mut out = Vec::with_capacity(16 + w * h * 4);
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&map.kind().code().to_le_bytes());
    for (i, &v) in map.values().iter().enumerate() {
        let v = if map.is_valid(i) {
            v
        } else {
            invalid_value(v, map.kind(), f32::NAN)
        };
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

// --------------------------------------------------------------- PNG

struct PngChunk {
    offset: usize,
    kind: [u8; 4],
    data_start: usize,
    len: usize,
}

/// Walks the chunk list so structural errors can name a byte offset before
/// the decoder sees the file.
fn png_chunks(bytes: &[u8]) -> Result<Vec<PngChunk>, DecodeError> {
    if bytes.len() < 8 || bytes[..8] != PNG_SIGNATURE {
        return Err(malformed(0, "missing PNG signature"));
    }
    let mut chunks = Vec::new();
    let mut pos = 8;
    loop {
        if pos == bytes.len() {
            return Err(DecodeError::TruncatedPayload {
                offset: pos,
                needed: 12,
                found: 0,
            });
        }
        let head = payload(bytes, pos, 8)?;
        let len = u32::from_be_bytes([head[0], head[1], head[2], head[3]]) as usize;
        let kind = [head[4], head[5], head[6], head[7]];
        payload(bytes, pos, len.saturating_add(12))?;
        chunks.push(PngChunk {
            offset: pos,
            kind,
            data_start: pos + 8,
            len,
        });
        pos += len + 12;
        if &kind == b"IEND" {
            return Ok(chunks);
        }
    }
}

struct PngHeader {
    width: usize,
    height: usize,
    bit_depth: u8,
    color_type: u8,
}

fn png_header(bytes: &[u8], chunks: &[PngChunk]) -> Result<PngHeader, DecodeError> {
    let ihdr = chunks
        .first()
        .filter(|c| &c.kind == b"IHDR" && c.len == 13)
        .ok_or_else(|| malformed(8, "first chunk must be a 13-byte IHDR"))?;
    let d = &bytes[ihdr.data_start..ihdr.data_start + 13];
    let width = u32::from_be_bytes([d[0], d[1], d[2], d[3]]);
    let height = u32::from_be_bytes([d[4], d[5], d[6], d[7]]);
    let (width, height) = check_dims(ihdr.data_start, u64::from(width), u64::from(height))?;
    Ok(PngHeader {
        width,
        height,
        bit_depth: d[8],
        color_type: d[9],
    })
}

fn png_text(bytes: &[u8], chunks: &[PngChunk], key: &str) -> Option<(usize, String)> {
    chunks.iter().filter(|c| &c.kind == b"tEXt").find_map(|c| {
        let data = &bytes[c.data_start..c.data_start + c.len];
        let nul = data.iter().position(|&b| b == 0)?;
        (&data[..nul] == key.as_bytes()).then(|| (c.offset, String::from_utf8_lossy(&data[nul + 1..]).into_owned()))
    })
}

/// Decodes pixel data with the `png` crate after the header checks passed.
fn png_pixels(bytes: &[u8], chunks: &[PngChunk], expect_depth: png::BitDepth) -> Result<Vec<u8>, DecodeError> {
    let first_idat = chunks
        .iter()
        .find(|c| &c.kind == b"IDAT")
        .map(|c| c.offset)
        .ok_or_else(|| malformed(8, "no IDAT chunk"))?;
    let mut decoder = png::Decoder::new_with_limits(
        Cursor::new(bytes),
        png::Limits {
            bytes: MAX_SIDE * MAX_SIDE * 2 + (1 << 20),
        },
    );
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| malformed(8, format!("png header: {e}")))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| match e {
        png::DecodingError::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            DecodeError::TruncatedPayload {
                offset: bytes.len(),
                needed: buf.len(),
                found: 0,
            }
        }
        other => malformed(first_idat, format!("image data: {other}")),
    })?;
    if info.bit_depth != expect_depth {
        return Err(malformed(24, "unexpected bit depth"));
    }
    buf.truncate(info.buffer_size());
    Ok(buf)
}

pub fn decode_png16(bytes: &[u8], kind: DepthKind) -> Result<DepthMap, DecodeError> {
    let chunks = png_chunks(bytes)?;
    let header = png_header(bytes, &chunks)?;
    if header.bit_depth != 16 || header.color_type != 0 {
        return Err(malformed(24, "depth PNG must be 16-bit grayscale"));
    }
    let (at, text) =
        png_text(bytes, &chunks, "depth_scale").ok_or_else(|| malformed(8, "missing depth_scale text chunk"))?;
    let scale: f64 = text
        .trim()
        .parse()
        .map_err(|_| malformed(at, format!("depth_scale {text:?} is not a number")))?;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(malformed(at, "depth_scale must be positive and finite"));
    }
    let raw = png_pixels(bytes, &chunks, png::BitDepth::Sixteen)?;
    let values = raw
        .chunks_exact(2)
        .map(|b| (f64::from(u16::from_be_bytes([b[0], b[1]])) * scale) as f32)
        .collect();
    Ok(DepthMap::from_values(header.width, header.height, values, kind).expect("length matches header"))
}

/// Options for [`encode_png16`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Png16Options {
    /// Value of one quantization step. `None` picks `max / 65535` so the
    /// largest valid value uses the full range.
    pub scale: Option<f64>,
}

/// Quantizes to `round(v / scale)`. Valid values that would round to the
/// invalid code 0 are stored as 1.
pub fn encode_png16(map: &DepthMap, opts: Png16Options) -> Result<Vec<u8>, IoError> {
    let (w, h) = map.dims();
    let mut max = 0.0f64;
    for (i, &v) in map.values().iter().enumerate() {
        if map.is_valid(i) {
            if v < 0.0 {
                return Err(IoError::UnrepresentableValue {
                    index: i,
                    value: v,
                    reason: "PNG16 stores non-negative values only",
                });
            }
            max = max.max(f64::from(v));
        }
    }
    let scale = match opts.scale {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(_) => {
            return Err(IoError::UnrepresentableValue {
                index: 0,
                value: 0.0,
                reason: "depth_scale must be positive and finite",
            })
        }
        None if max > 0.0 => max / 65535.0,
        None => 1.0,
    };
    let mut data = Vec::with_capacity(w * h * 2);
    for (i, &v) in map.values().iter().enumerate() {
        let q = if map.is_valid(i) {
            let q = (f64::from(v) / scale).round();
            if q > 65535.0 {
                return Err(IoError::UnrepresentableValue {
                    index: i,
                    value: v,
                    reason: "value exceeds 65535 * depth_scale",
                });
            }
            (q as u16).max(1)
        } else {
            0
        };
        data.extend_from_slice(&q.to_be_bytes());
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        enc.add_text_chunk("depth_scale".into(), format!("{scale}"))
            .map_err(|e| IoError::Encode(e.to_string()))?;
        let mut writer = enc.write_header().map_err(|e| IoError::Encode(e.to_string()))?;
        writer
            .write_image_data(&data)
            .map_err(|e| IoError::Encode(e.to_string()))?;
    }
    Ok(out)
}

// ------------------------------------------------------------ dispatch

/// Decodes `bytes`. `kind` applies to PFM and PNG16; RawF32 files carry
/// their own kind.
pub fn decode_depth(bytes: &[u8], format: Format, kind: DepthKind) -> Result<DepthMap, DecodeError> {
    match format {
        Format::Pfm => decode_pfm(bytes, kind),
        Format::Png16 => decode_png16(bytes, kind),
        Format::RawF32 => decode_raw(bytes),
    }
}

pub fn encode_depth(map: &DepthMap, format: Format) -> Result<Vec<u8>, IoError> {
    match format {
        Format::Pfm => Ok(encode_pfm(map)),
        Format::Png16 => encode_png16(map, Png16Options::default()),
        Format::RawF32 => Ok(encode_raw(map)),
    }
}

pub fn load_depth(path: &Path, format: Format, kind: DepthKind) -> Result<DepthMap, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode_depth(&bytes, format, kind).map_err(|e| IoError::decode(path, e))
}

/// Like [`load_depth`] with the format taken from the extension.
pub fn load_depth_auto(path: &Path, kind: DepthKind) -> Result<DepthMap, IoError> {
    let format = Format::from_path(path).ok_or_else(|| IoError::UnknownFormat {
        path: path.to_path_buf(),
    })?;
    load_depth(path, format, kind)
}

pub fn save_depth(map: &DepthMap, path: &Path, format: Format) -> Result<(), IoError> {
    let bytes = encode_depth(map, format)?;
    std::fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

// --------------------------------------------------------------- masks

/// 8-bit grayscale mask PNG: non-zero is valid.
pub fn decode_mask(bytes: &[u8]) -> Result<ValidMask, DecodeError> {
    let chunks = png_chunks(bytes)?;
    let header = png_header(bytes, &chunks)?;
    if header.bit_depth != 8 || header.color_type != 0 {
        return Err(malformed(24, "mask PNG must be 8-bit grayscale"));
    }
    let raw = png_pixels(bytes, &chunks, png::BitDepth::Eight)?;
    Ok(
        ValidMask::new(header.width, header.height, raw.iter().map(|&b| b != 0).collect())
            .expect("length matches header"),
    )
}

pub fn encode_mask(mask: &ValidMask) -> Result<Vec<u8>, IoError> {
    let data: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode_png8(mask.width(), mask.height(), png::ColorType::Grayscale, &data)
}

pub fn load_mask(path: &Path) -> Result<ValidMask, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode_mask(&bytes).map_err(|e| IoError::decode(path, e))
}

pub fn save_mask(mask: &ValidMask, path: &Path) -> Result<(), IoError> {
    std::fs::write(path, encode_mask(mask)?).map_err(|e| IoError::io(path, e))
}

/// RGB8 PNG, used for the flat-shaded synthetic images.
pub fn encode_rgb(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>, IoError> {
    encode_png8(width, height, png::ColorType::Rgb, rgb)
}

fn encode_png8(width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<Vec<u8>, IoError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| IoError::Encode(e.to_string()))?;
        writer
            .write_image_data(data)
            .map_err(|e| IoError::Encode(e.to_string()))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(w: usize, h: usize, v: Vec<f32>, kind: DepthKind) -> DepthMap {
        DepthMap::from_values(w, h, v, kind).unwrap()
    }

    #[test]
    fn raw_two_by_two() {
        let m = map(2, 2, vec![1.0, 2.0, 3.0, 4.0], DepthKind::MetricMeters);
        let bytes = encode_raw(&m);
        assert_eq!(bytes.len(), 32);
        assert_eq!(&bytes[..4], b"DBF1");
        let back = decode_raw(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.valid_count(), 4);
    }

    #[test]
    fn pfm_rows_are_bottom_up() {
        let m = map(2, 2, vec![1.0, 2.0, 3.0, 4.0], DepthKind::InverseRelative);
        let bytes = encode_pfm(&m);
        let header = b"Pf\n2 2\n-1.0\n".len();
        assert_eq!(f32::from_le_bytes(bytes[header..header + 4].try_into().unwrap()), 3.0);
        assert_eq!(decode_pfm(&bytes, DepthKind::InverseRelative).unwrap(), m);
    }

    #[test]
    fn pfm_big_endian_is_honoured() {
        let mut bytes = b"Pf\n1 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&2.5f32.to_be_bytes());
        let m = decode_pfm(&bytes, DepthKind::InverseRelative).unwrap();
        assert_eq!(m.values(), &[2.5]);
    }

    #[test]
    fn png16_all_zero_is_all_invalid() {
        let m = map(3, 2, vec![0.0; 6], DepthKind::MetricMeters);
        let bytes = encode_png16(&m, Png16Options::default()).unwrap();
        let back = decode_png16(&bytes, DepthKind::MetricMeters).unwrap();
        assert_eq!(back.valid_count(), 0);
    }

    #[test]
    fn png16_rejects_out_of_range() {
        let m = map(2, 1, vec![1.0, 70000.0], DepthKind::MetricMeters);
        let err = encode_png16(&m, Png16Options { scale: Some(1.0) }).unwrap_err();
        assert!(matches!(err, IoError::UnrepresentableValue { index: 1, .. }));
        let neg = map(2, 1, vec![1.0, -1.0], DepthKind::InverseRelative);
        assert!(encode_png16(&neg, Png16Options::default()).is_err());
    }

    #[test]
    fn png16_keeps_tiny_values_valid() {
        let m = map(2, 1, vec![1000.0, 0.001], DepthKind::MetricMeters);
        let back = decode_png16(
            &encode_png16(&m, Png16Options::default()).unwrap(),
            DepthKind::MetricMeters,
        )
        .unwrap();
        assert_eq!(back.valid_count(), 2);
    }

    #[test]
    fn header_errors_name_offsets() {
        assert_eq!(
            decode_raw(b"DBF2\0\0\0\0\0\0\0\0\0\0\0\0"),
            Err(DecodeError::MalformedHeader {
                offset: 0,
                reason: "expected magic `DBF1`".into()
            })
        );
        let mut big = b"DBF1".to_vec();
        big.extend_from_slice(&20000u32.to_le_bytes());
        big.extend_from_slice(&1u32.to_le_bytes());
        big.extend_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            decode_raw(&big),
            Err(DecodeError::DimensionOverflow { offset: 4, .. })
        ));
        let mut short = encode_raw(&map(2, 2, vec![1.0; 4], DepthKind::InverseRelative));
        short.truncate(25);
        assert_eq!(
            decode_raw(&short),
            Err(DecodeError::TruncatedPayload {
                offset: 25,
                needed: 16,
                found: 9
            })
        );
        assert!(matches!(
            decode_pfm(b"Pf\n3 x\n-1.0\n", DepthKind::InverseRelative),
            Err(DecodeError::MalformedHeader { offset: 5, .. })
        ));
    }

    #[test]
    fn masks_round_trip() {
        let mask = ValidMask::new(3, 2, vec![true, false, true, true, false, false]).unwrap();
        assert_eq!(decode_mask(&encode_mask(&mask).unwrap()).unwrap(), mask);
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(Format::from_path(Path::new("a/b.PFM")), Some(Format::Pfm));
        assert_eq!(Format::from_path(Path::new("x.dbf")), Some(Format::RawF32));
        assert_eq!(Format::from_path(Path::new("x.exr")), None);
    }
}
