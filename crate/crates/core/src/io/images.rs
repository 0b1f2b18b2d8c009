use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

/// Writes an 8-bit PNG (gray, gray+alpha, RGB or RGBA by channel count).
/// Values are clamped to `[0, 1]` and stored linearly.
pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let color = match img.channels {
        1 => png::ColorType::Grayscale,
        2 => png::ColorType::GrayscaleAlpha,
        3 => png::ColorType::Rgb,
        4 => png::ColorType::Rgba,
        c => return Err(Error::InvalidArgument(format!("cannot write a {c}-channel PNG"))),
    };
    let w = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(w, img.width as u32, img.height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let bytes: Vec<u8> = img.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    writer.write_image_data(&bytes).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writer.finish().map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(())
}

/// Reads an 8- or 16-bit PNG into `[0, 1]` values, keeping its channels.
pub fn read_png(path: &Path) -> Result<Image> {
    let mut dec = png::Decoder::new(BufReader::new(File::open(path)?));
    dec.set_transformations(png::Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Parse(format!("{}: image too large", path.display())))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let channels = info.color_type.samples();
    let data: Vec<f64> = match info.bit_depth {
        png::BitDepth::Eight => buf[..info.buffer_size()].iter().map(|b| *b as f64 / 255.0).collect(),
        png::BitDepth::Sixteen => buf[..info.buffer_size()]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
            .collect(),
        d => return Err(Error::Parse(format!("{}: unsupported bit depth {d:?}", path.display()))),
    };
    Image::from_data(info.width as usize, info.height as usize, channels, data)
}

/// Writes a little-endian PFM (`Pf` gray or `PF` RGB), rows bottom-up.
pub fn write_pfm(path: &Path, img: &Image) -> Result<()> {
    let tag = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::InvalidArgument(format!("cannot write a {c}-channel PFM"))),
    };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    for y in (0..img.height).rev() {
        for x in 0..img.width {
            for c in 0..img.channels {
                out.extend_from_slice(&(img.get(x, y, c) as f32).to_le_bytes());
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<Image> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |m: &str| Error::Parse(format!("{}: {m}", path.display()));
    // Header: three whitespace-terminated tokens, then one separator byte.
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not text"))?.to_string());
    }
    pos += 1;
    let channels = match tokens[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(bad("not a PFM file")),
    };
    let w: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| bad("bad scale"))?;
    let n = w * h * channels;
    if bytes.len() < pos + 4 * n {
        return Err(bad("truncated data"));
    }
    let vals: Vec<f64> = bytes[pos..pos + 4 * n]
        .chunks_exact(4)
        .map(|c| {
            let a = [c[0], c[1], c[2], c[3]];
            (if scale < 0.0 { f32::from_le_bytes(a) } else { f32::from_be_bytes(a) }) as f64
        })
        .collect();
    let mut img = Image::new(w, h, channels);
    for (r, y) in (0..h).rev().enumerate() {
        for x in 0..w {
            for c in 0..channels {
                img.set(x, y, c, vals[(r * w + x) * channels + c]);
            }
        }
    }
    Ok(img)
}
