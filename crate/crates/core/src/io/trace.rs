//! Trace serialization: one JSON record per line, a header followed by one
//! record per latent. JSON floats use shortest-exact decimal rendering, so
//! values round-trip bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cast, to_f64, Scalar};
use crate::scene::{LatentVar, Prior, ProgramKind, SceneTrace, Value};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    program: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
enum PriorRecord {
    Uniform { lo: f64, hi: f64 },
    Beta { alpha: f64, beta: f64, lo: f64, hi: f64 },
    Gaussian { mean: f64, std: f64 },
    UniformInt { lo: i64, hi: i64 },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ValueRecord {
    Scalar { value: f64 },
    Vector { value: Vec<f64> },
    Int { value: i64 },
}

#[derive(Debug, Serialize, Deserialize)]
struct LatentRecord {
    name: String,
    #[serde(flatten)]
    value: ValueRecord,
    prior: PriorRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    group: Option<String>,
}

fn prior_to_record<T: Scalar>(p: &Prior<T>) -> PriorRecord {
    match *p {
        Prior::Uniform { lo, hi } => PriorRecord::Uniform { lo: to_f64(lo), hi: to_f64(hi) },
        Prior::RescaledBeta { alpha, beta, lo, hi } => {
            PriorRecord::Beta { alpha, beta, lo: to_f64(lo), hi: to_f64(hi) }
        }
        Prior::Gaussian { mean, std } => {
            PriorRecord::Gaussian { mean: to_f64(mean), std: to_f64(std) }
        }
        Prior::UniformInt { lo, hi } => PriorRecord::UniformInt { lo, hi },
    }
}

fn prior_from_record<T: Scalar>(r: &PriorRecord) -> Prior<T> {
    match *r {
        PriorRecord::Uniform { lo, hi } => Prior::Uniform { lo: cast(lo), hi: cast(hi) },
        PriorRecord::Beta { alpha, beta, lo, hi } => {
            Prior::RescaledBeta { alpha, beta, lo: cast(lo), hi: cast(hi) }
        }
        PriorRecord::Gaussian { mean, std } => {
            Prior::Gaussian { mean: cast(mean), std: cast(std) }
        }
        PriorRecord::UniformInt { lo, hi } => Prior::UniformInt { lo, hi },
    }
}

pub fn write_trace<T: Scalar>(path: &Path, trace: &SceneTrace<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = Header {
        format: "trace".into(),
        version: 1,
        program: trace.program().as_str().into(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).map_err(fmt_err)?)?;
    for l in trace.latents() {
        let value = match &l.value {
            Value::Scalar(v) => ValueRecord::Scalar { value: to_f64(*v) },
            Value::Vector(vs) => {
                ValueRecord::Vector { value: vs.iter().map(|v| to_f64(*v)).collect() }
            }
            Value::Int(v) => ValueRecord::Int { value: *v },
        };
        let rec = LatentRecord {
            name: l.name.clone(),
            value,
            prior: prior_to_record(&l.prior),
            group: l.group.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&rec).map_err(fmt_err)?)?;
    }
    Ok(())
}

pub fn read_trace<T: Scalar>(path: &Path) -> Result<SceneTrace<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Format("empty trace file".into()))??;
    let header: Header = serde_json::from_str(&header_line).map_err(fmt_err)?;
    if header.format != "trace" || header.version != 1 {
        return Err(Error::Format(format!(
            "unsupported trace header {}/{}",
            header.format, header.version
        )));
    }
    let program = ProgramKind::parse(&header.program)?;

    let mut latents: Vec<LatentVar<T>> = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LatentRecord = serde_json::from_str(&line).map_err(fmt_err)?;
        let prior: Prior<T> = prior_from_record(&rec.prior);
        let latent = match rec.value {
            ValueRecord::Scalar { value } => {
                if prior.is_discrete() {
                    return Err(Error::Format(format!(
                        "scalar value with integer prior on {:?}",
                        rec.name
                    )));
                }
                LatentVar::scalar(&rec.name, cast(value), prior)
            }
            ValueRecord::Vector { value } => {
                if prior.is_discrete() {
                    return Err(Error::Format(format!(
                        "vector value with integer prior on {:?}",
                        rec.name
                    )));
                }
                LatentVar::vector(&rec.name, value.into_iter().map(cast).collect(), prior)
            }
            ValueRecord::Int { value } => {
                if !prior.is_discrete() {
                    return Err(Error::Format(format!(
                        "integer value with continuous prior on {:?}",
                        rec.name
                    )));
                }
                LatentVar::int(&rec.name, value, prior)
            }
        };
        latents.push(match rec.group {
            Some(g) => latent.with_group(&g),
            None => latent,
        });
    }
    if latents.is_empty() {
        return Err(Error::Format("trace has no latents".into()));
    }
    Ok(SceneTrace::new(program, latents))
}

fn fmt_err(e: serde_json::Error) -> Error {
    Error::Format(e.to_string())
}
