//! Netpbm image files. Depth buffers go out as 8-bit PGM (P5), contour masks
//! as 1-bit PBM (P4). Readers also accept the ASCII variants (P2, P1) and
//! skip `#` comments in headers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::likelihood::ObservationImage;
use crate::render::RenderedView;
use crate::scalar::{to_f64, Scalar};

/// Map a view-axis depth to a brightness: `near` renders white, `far` (the
/// background) black, linear in between.
pub fn depth_to_gray(depth: f64, near: f64, far: f64) -> u8 {
    let v = (255.0 * (far - depth) / (far - near)).round();
    v.clamp(0.0, 255.0) as u8
}

pub fn write_pgm(path: &Path, gray: &[u8], width: u32, height: u32) -> Result<()> {
    if gray.len() != (width as usize) * (height as usize) {
        return Err(Error::Format(format!(
            "pgm buffer length {} does not match {width}x{height}",
            gray.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(gray)?;
    Ok(())
}

pub fn write_pbm(path: &Path, mask: &[u8], width: u32, height: u32) -> Result<()> {
    if mask.len() != (width as usize) * (height as usize) {
        return Err(Error::Format(format!(
            "pbm buffer length {} does not match {width}x{height}",
            mask.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P4\n{width} {height}\n")?;
    // Rows pack MSB-first and pad to a byte boundary; 1 means on (black).
    let row_bytes = (width as usize).div_ceil(8);
    let mut packed = vec![0u8; row_bytes];
    for y in 0..height as usize {
        packed.iter_mut().for_each(|b| *b = 0);
        for x in 0..width as usize {
            if mask[y * width as usize + x] != 0 {
                packed[x / 8] |= 0x80 >> (x % 8);
            }
        }
        w.write_all(&packed)?;
    }
    Ok(())
}

/// Pull the next whitespace-delimited header token, skipping `#` comments.
fn next_token(data: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated netpbm header".into()));
    }
    Ok(String::from_utf8_lossy(&data[start..*pos]).into_owned())
}

fn parse_dim(tok: &str) -> Result<u32> {
    let v: u32 = tok
        .parse()
        .map_err(|_| Error::Format(format!("bad netpbm dimension {tok:?}")))?;
    if v == 0 {
        return Err(Error::Format("zero netpbm dimension".into()));
    }
    Ok(v)
}

pub fn read_pgm(path: &Path) -> Result<(Vec<u8>, u32, u32)> {
    let data = std::fs::read(path)?;
    let mut pos = 0;
    let magic = next_token(&data, &mut pos)?;
    let width = parse_dim(&next_token(&data, &mut pos)?)?;
    let height = parse_dim(&next_token(&data, &mut pos)?)?;
    let maxval: u32 = next_token(&data, &mut pos)?
        .parse()
        .map_err(|_| Error::Format("bad pgm maxval".into()))?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported pgm maxval {maxval}")));
    }
    let n = (width as usize) * (height as usize);
    let pixels = match magic.as_str() {
        "P5" => {
            pos += 1; // single whitespace byte after maxval
            let raster = data
                .get(pos..pos + n)
                .ok_or_else(|| Error::Format("pgm raster truncated".into()))?;
            raster.to_vec()
        }
        "P2" => {
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let v: u32 = next_token(&data, &mut pos)?
                    .parse()
                    .map_err(|_| Error::Format("bad pgm sample".into()))?;
                if v > maxval {
                    return Err(Error::Format("pgm sample exceeds maxval".into()));
                }
                out.push(v as u8);
            }
            out
        }
        other => return Err(Error::Format(format!("not a pgm file: magic {other:?}"))),
    };
    Ok((pixels, width, height))
}

pub fn read_pbm(path: &Path) -> Result<(Vec<u8>, u32, u32)> {
    let data = std::fs::read(path)?;
    let mut pos = 0;
    let magic = next_token(&data, &mut pos)?;
    let width = parse_dim(&next_token(&data, &mut pos)?)?;
    let height = parse_dim(&next_token(&data, &mut pos)?)?;
    let n = (width as usize) * (height as usize);
    let mut mask = vec![0u8; n];
    match magic.as_str() {
        "P4" => {
            pos += 1; // single whitespace byte after the header
            let row_bytes = (width as usize).div_ceil(8);
            let raster = data
                .get(pos..pos + row_bytes * height as usize)
                .ok_or_else(|| Error::Format("pbm raster truncated".into()))?;
            for y in 0..height as usize {
                let row = &raster[y * row_bytes..(y + 1) * row_bytes];
                for x in 0..width as usize {
                    if row[x / 8] & (0x80 >> (x % 8)) != 0 {
                        mask[y * width as usize + x] = 1;
                    }
                }
            }
        }
        "P1" => {
            // ASCII bits may or may not be whitespace-separated.
            let mut count = 0;
            while count < n {
                let tok = next_token(&data, &mut pos)?;
                for c in tok.chars() {
                    match c {
                        '0' | '1' => {
                            if count >= n {
                                break;
                            }
                            mask[count] = (c == '1') as u8;
                            count += 1;
                        }
                        _ => return Err(Error::Format(format!("bad pbm bit {c:?}"))),
                    }
                }
            }
        }
        other => return Err(Error::Format(format!("not a pbm file: magic {other:?}"))),
    }
    Ok((mask, width, height))
}

pub fn write_depth_pgm<T: Scalar>(
    path: &Path,
    view: &RenderedView<T>,
    near: f64,
    far: f64,
) -> Result<()> {
    let gray: Vec<u8> = view
        .depth
        .iter()
        .map(|&d| depth_to_gray(to_f64(d), near, far))
        .collect();
    write_pgm(path, &gray, view.width, view.height)
}

pub fn write_contour_pbm<T: Scalar>(path: &Path, view: &RenderedView<T>) -> Result<()> {
    write_pbm(path, &view.contour, view.width, view.height)
}

/// Load a contour observation. `.pbm` masks load directly; `.pgm` images
/// threshold to on where gray >= `threshold`.
pub fn load_observation<T: Scalar>(path: &Path, threshold: u8) -> Result<ObservationImage<T>> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let (mask, width, height) = match ext.as_str() {
        "pbm" => read_pbm(path)?,
        "pgm" => {
            let (gray, w, h) = read_pgm(path)?;
            (gray.into_iter().map(|g| (g >= threshold) as u8).collect(), w, h)
        }
        other => {
            return Err(Error::Format(format!(
                "unsupported observation extension {other:?} (want .pbm or .pgm)"
            )))
        }
    };
    ObservationImage::from_contour(mask, width, height)
}
