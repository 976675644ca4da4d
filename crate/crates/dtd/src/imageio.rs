//! Frame files: binary PGM (P5) read/write, PNG read, and lazy loading of a
//! directory of frames in sorted filename order.

use std::fs;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use dtd_core::GrayImage;

use crate::error::DtdError;

/// Parse a binary PGM. 8-bit and 16-bit (big-endian) samples are both
/// accepted; intensities are divided by maxval.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, String> {
    let mut pos = 0;
    let magic = header_token(bytes, &mut pos).ok_or("missing magic number")?;
    if magic != b"P5" {
        return Err("not a binary PGM (expected P5)".into());
    }
    let mut field = |name: &str| -> Result<usize, String> {
        let tok = header_token(bytes, &mut pos).ok_or_else(|| format!("missing {name}"))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| format!("bad {name} {:?}", String::from_utf8_lossy(tok)))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if width == 0 || height == 0 {
        return Err("zero image dimension".into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} out of range"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err("truncated header".into()),
    }
    let n = width.checked_mul(height).ok_or("image too large")?;
    let bpp = if maxval > 255 { 2 } else { 1 };
    let raster = &bytes[pos..];
    if raster.len() < n * bpp {
        return Err(format!("raster has {} bytes, expected {}", raster.len(), n * bpp));
    }
    let maxval = maxval as f32;
    let data = if bpp == 1 {
        raster[..n].iter().map(|&b| f32::from(b) / maxval).collect()
    } else {
        raster[..2 * n].chunks_exact(2).map(|c| f32::from(u16::from_be_bytes([c[0], c[1]])) / maxval).collect()
    };
    GrayImage::new(width, height, data).map_err(|e| e.to_string())
}

/// Next whitespace-delimited header token, skipping `#` comments.
fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

/// 8-bit P5 encoding of `img` (clamped to [0,1], rounded).
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(&img.to_u8());
    out
}

/// Decode a PNG of any color type to luma in [0,1]. Palette and low bit
/// depths are expanded and 16-bit samples are reduced to 8 bits first.
pub fn decode_png(bytes: &[u8]) -> Result<GrayImage, String> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let size = reader.output_buffer_size().ok_or("image too large")?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let mut data = Vec::with_capacity(w * h);
    for row in buf.chunks(info.line_size).take(h) {
        for px in row[..w * channels].chunks_exact(channels) {
            let luma = match channels {
                1 | 2 => f32::from(px[0]),
                _ => 0.299 * f32::from(px[0]) + 0.587 * f32::from(px[1]) + 0.114 * f32::from(px[2]),
            };
            data.push(luma / 255.0);
        }
    }
    GrayImage::new(w, h, data).map_err(|e| e.to_string())
}

fn is_png(bytes: &[u8]) -> bool {
    bytes.starts_with(b"\x89PNG")
}

/// Read one frame, choosing the decoder by content.
pub fn read_image(path: &Path) -> Result<GrayImage, DtdError> {
    let bytes = fs::read(path).map_err(|e| DtdError::UnreadableFile { path: path.to_path_buf(), reason: e.to_string() })?;
    let decoded = if is_png(&bytes) { decode_png(&bytes) } else { decode_pgm(&bytes) };
    decoded.map_err(|reason| DtdError::UnreadableFile { path: path.to_path_buf(), reason })
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<(), DtdError> {
    let mut f = fs::File::create(path).map_err(|e| DtdError::io(path, e))?;
    f.write_all(&encode_pgm(img)).map_err(|e| DtdError::io(path, e))
}

fn is_frame_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"))
}

/// Sorted `.pgm`/`.png` files of `dir`. Other files are ignored.
pub fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>, DtdError> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| DtdError::io(dir, e))? {
        let path = entry.map_err(|e| DtdError::io(dir, e))?.path();
        if is_frame_file(&path) {
            paths.push(path);
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(paths)
}

/// Frames of a directory, decoded one at a time on demand. Every frame
/// must have the size of the first.
#[derive(Debug)]
pub struct FrameSource {
    paths: Vec<PathBuf>,
    next: usize,
    size: Option<(usize, usize)>,
}

impl FrameSource {
    pub fn open(dir: &Path) -> Result<Self, DtdError> {
        Ok(Self::from_paths(frame_paths(dir)?))
    }

    pub fn from_paths(paths: Vec<PathBuf>) -> Self {
        Self { paths, next: 0, size: None }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.paths
    }
}

impl Iterator for FrameSource {
    type Item = Result<GrayImage, DtdError>;

    fn next(&mut self) -> Option<Self::Item> {
        let path = self.paths.get(self.next)?;
        self.next += 1;
        Some(read_image(path).and_then(|img| {
            let actual = (img.width(), img.height());
            match self.size {
                Some(expected) if expected != actual => {
                    Err(DtdError::MixedDimensions { path: path.clone(), expected, actual })
                }
                _ => {
                    self.size = Some(actual);
                    Ok(img)
                }
            }
        }))
    }
}

/// Convenience: open a directory lazily. Equivalent to `FrameSource::open`.
pub fn load_frames(dir: &Path) -> Result<FrameSource, DtdError> {
    FrameSource::open(dir)
}

/// Decode every frame of `dir` up front.
pub fn load_all_frames(dir: &Path) -> Result<Vec<GrayImage>, DtdError> {
    load_frames(dir)?.collect()
}
