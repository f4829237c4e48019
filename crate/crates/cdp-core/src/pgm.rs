//! 8-bit binary PGM (P5) codecs for templates and printed images, plus the
//! JSON sidecar helpers.
//!
//! Templates: one pixel per symbol, 0 = black symbol (bit 1), 255 = white
//! (bit 0). Printed images: intensity v stored as round(v·255).

use std::fs;
use std::path::Path;

use crate::channel::{ImageMeta, PrintedImage, SourceId};
use crate::error::{Error, Result};
use crate::grid::BitGrid;
use crate::template::{Template, TemplateMeta};

const MAXVAL: u32 = 255;

fn encode_header(width: usize, height: usize) -> String {
    format!("P5\n{width} {height}\n{MAXVAL}\n")
}

/// Encode a bit grid (template or estimate) as PGM bytes.
pub fn bits_to_pgm(bits: &BitGrid) -> Vec<u8> {
    let n = bits.size();
    let mut out = encode_header(n, n).into_bytes();
    out.extend(bits.as_slice().iter().map(|&b| if b == 1 { 0u8 } else { 255 }));
    out
}

/// Encode a printed image as PGM bytes with round(v·255) quantization.
pub fn image_to_pgm(img: &PrintedImage) -> Vec<u8> {
    let n = img.size();
    let mut out = encode_header(n, n).into_bytes();
    out.extend(
        img.pixels()
            .iter()
            .map(|&v| (v * MAXVAL as f64).round() as u8),
    );
    out
}

struct PgmPayload {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

/// Parse a binary P5 document (whitespace and '#' comments per the netpbm
/// specification; maxval must be 255).
fn parse_pgm(bytes: &[u8]) -> Result<PgmPayload> {
    let mut pos = 0usize;

    let next_token = |pos: &mut usize| -> Result<String> {
        // skip whitespace and comments
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
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        String::from_utf8(bytes[start..*pos].to_vec())
            .map_err(|_| Error::Format("non-ASCII PGM header".into()))
    };

    let magic = next_token(&mut pos)?;
    if magic != "P5" {
        return Err(Error::Format(format!(
            "expected P5 magic number, found '{magic}'"
        )));
    }
    let width: usize = next_token(&mut pos)?
        .parse()
        .map_err(|_| Error::Format("invalid PGM width".into()))?;
    let height: usize = next_token(&mut pos)?
        .parse()
        .map_err(|_| Error::Format("invalid PGM height".into()))?;
    let maxval: u32 = next_token(&mut pos)?
        .parse()
        .map_err(|_| Error::Format("invalid PGM maxval".into()))?;
    if maxval != MAXVAL {
        return Err(Error::Format(format!(
            "unsupported maxval {maxval}, expected {MAXVAL}"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("missing raster separator".into()));
    }
    pos += 1;
    let data = bytes[pos..].to_vec();
    if data.len() != width * height {
        return Err(Error::Format(format!(
            "raster holds {} bytes, expected {}",
            data.len(),
            width * height
        )));
    }
    Ok(PgmPayload {
        width,
        height,
        data,
    })
}

fn require_square(p: &PgmPayload) -> Result<usize> {
    if p.width != p.height {
        return Err(Error::Format(format!(
            "image is {}x{}, only square codes are supported",
            p.width, p.height
        )));
    }
    Ok(p.width)
}

/// Decode template PGM bytes; only pure black/white pixels are legal.
pub fn bits_from_pgm(bytes: &[u8]) -> Result<BitGrid> {
    let payload = parse_pgm(bytes)?;
    let size = require_square(&payload)?;
    let bits: Vec<u8> = payload
        .data
        .iter()
        .map(|&px| match px {
            0 => Ok(1u8),
            255 => Ok(0u8),
            other => Err(Error::Format(format!(
                "template pixel value {other} is neither 0 nor 255"
            ))),
        })
        .collect::<Result<_>>()?;
    BitGrid::from_bits(size, bits)
}

/// Decode printed-image PGM bytes at the given magnification.
pub fn image_from_pgm(bytes: &[u8], k: usize, source: SourceId) -> Result<PrintedImage> {
    let payload = parse_pgm(bytes)?;
    let size = require_square(&payload)?;
    let pixels: Vec<f64> = payload
        .data
        .iter()
        .map(|&px| f64::from(px) / MAXVAL as f64)
        .collect();
    PrintedImage::from_pixels(size, k, pixels, source)
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

/// Write a template as PGM plus its {L, p, seed} JSON sidecar.
pub fn write_template(path: &Path, t: &Template) -> Result<()> {
    fs::write(path, bits_to_pgm(t.bits()))?;
    let meta = serde_json::to_string_pretty(&t.meta()).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(sidecar_path(path), meta)?;
    Ok(())
}

/// Read a template PGM; generation metadata comes from the sidecar when
/// present, otherwise the measured density with seed 0 is recorded.
pub fn read_template(path: &Path) -> Result<Template> {
    let bits = bits_from_pgm(&fs::read(path)?)?;
    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        let meta: TemplateMeta = serde_json::from_str(&fs::read_to_string(&sidecar)?)
            .map_err(|e| Error::Format(format!("{}: {e}", sidecar.display())))?;
        if meta.size != bits.size() {
            return Err(Error::Format(format!(
                "sidecar size {} does not match image size {}",
                meta.size,
                bits.size()
            )));
        }
        Ok(Template::from_bits(bits, meta.p, meta.seed))
    } else {
        let density = bits.ones_fraction();
        Ok(Template::from_bits(bits, density, 0))
    }
}

/// Write a printed image as PGM plus its sidecar (magnification, lineage,
/// channel parameters).
pub fn write_image(path: &Path, img: &PrintedImage, channel: Option<&crate::channel::ChannelParams>) -> Result<()> {
    fs::write(path, image_to_pgm(img))?;
    let meta = ImageMeta {
        k: img.k(),
        source: img.source().clone(),
        channel: channel.cloned(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Read a printed image; the magnification comes from the sidecar unless
/// overridden by the caller.
pub fn read_image(path: &Path, k_override: Option<usize>) -> Result<PrintedImage> {
    let bytes = fs::read(path)?;
    let sidecar = sidecar_path(path);
    let meta: Option<ImageMeta> = if sidecar.exists() {
        Some(
            serde_json::from_str(&fs::read_to_string(&sidecar)?)
                .map_err(|e| Error::Format(format!("{}: {e}", sidecar.display())))?,
        )
    } else {
        None
    };
    let k = match (k_override, &meta) {
        (Some(k), _) => k,
        (None, Some(m)) => m.k,
        (None, None) => {
            return Err(Error::Parameter(format!(
                "{}: no sidecar metadata; magnification must be given explicitly",
                path.display()
            )))
        }
    };
    let source = meta.map_or(SourceId::Synthetic, |m| m.source);
    image_from_pgm(&bytes, k, source)
}
