//! Proposal index persistence: one flat little-endian binary file holding a
//! versioned header plus the feature and latent matrices, and a text sidecar
//! (`<path>.names.txt`) listing the flattened latent coordinate order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::proposal::{FeatureSpec, ProposalIndex};
use crate::scalar::{cast, to_f64, Scalar};
use crate::scene::ProgramKind;

const MAGIC: [u8; 4] = *b"CCPI";
const VERSION: u32 = 1;

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".names.txt");
    PathBuf::from(s)
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn write_f64_slice<W: Write, T: Scalar>(w: &mut W, xs: &[T]) -> Result<()> {
    for &x in xs {
        w.write_all(&to_f64(x).to_le_bytes())?;
    }
    Ok(())
}

fn read_f64_vec<R: Read, T: Scalar>(r: &mut R, n: usize) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(cast(f64::from_le_bytes(b)));
    }
    Ok(out)
}

pub fn write_index<T: Scalar>(path: &Path, index: &ProposalIndex<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    write_u32(&mut w, VERSION)?;
    w.write_all(&[match index.program {
        ProgramKind::Object => 0u8,
        ProgramKind::Body => 1u8,
    }])?;
    write_u32(&mut w, index.spec.grid)?;
    write_u32(&mut w, index.spec.width)?;
    write_u32(&mut w, index.spec.height)?;
    write_u32(&mut w, index.feature_dim() as u32)?;
    write_u32(&mut w, index.latent_dim() as u32)?;
    write_u64(&mut w, index.len() as u64)?;
    write_f64_slice(&mut w, &index.features)?;
    write_f64_slice(&mut w, &index.latents)?;
    drop(w);

    let mut names = BufWriter::new(File::create(sidecar_path(path))?);
    for n in &index.latent_names {
        writeln!(names, "{n}")?;
    }
    Ok(())
}

pub fn read_index<T: Scalar>(path: &Path) -> Result<ProposalIndex<T>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::Format("not a proposal index file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported index version {version}")));
    }
    let mut program_byte = [0u8; 1];
    r.read_exact(&mut program_byte)?;
    let program = match program_byte[0] {
        0 => ProgramKind::Object,
        1 => ProgramKind::Body,
        b => return Err(Error::Format(format!("unknown program byte {b}"))),
    };
    let grid = read_u32(&mut r)?;
    let width = read_u32(&mut r)?;
    let height = read_u32(&mut r)?;
    let m = read_u32(&mut r)? as usize;
    let d = read_u32(&mut r)? as usize;
    let count = read_u64(&mut r)? as usize;
    let spec = FeatureSpec { grid, width, height };
    if spec.dim() != m {
        return Err(Error::Format(format!(
            "feature dim {m} inconsistent with grid {grid}"
        )));
    }

    let names_path = sidecar_path(path);
    let names_text = std::fs::read_to_string(&names_path).map_err(|e| {
        Error::Format(format!("missing sidecar {}: {e}", names_path.display()))
    })?;
    let latent_names: Vec<String> =
        names_text.lines().map(|l| l.to_owned()).filter(|l| !l.is_empty()).collect();
    if latent_names.len() != d {
        return Err(Error::Format(format!(
            "sidecar lists {} names but index stores {d} latent dims",
            latent_names.len()
        )));
    }

    let features = read_f64_vec(&mut r, count * m)?;
    let latents = read_f64_vec(&mut r, count * d)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after index payload".into()));
    }
    Ok(ProposalIndex { spec, program, latent_names, features, latents })
}
