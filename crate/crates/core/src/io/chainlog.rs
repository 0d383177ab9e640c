//! Chain step logs: one JSON record per MCMC step. Floats render as
//! shortest-exact decimals, so a rerun with the same seed produces a
//! byte-identical file.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{KernelKind, StepRecord};
use crate::scalar::{to_f64, Scalar};

#[derive(Debug, Serialize, Deserialize)]
struct StepLine {
    iteration: u64,
    kernel: String,
    accepted: bool,
    log_prior: f64,
    log_likelihood: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_h: Option<f64>,
}

fn kernel_from_str(s: &str) -> Result<KernelKind> {
    KernelKind::ALL
        .iter()
        .copied()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::Format(format!("unknown kernel {s:?}")))
}

pub fn write_chain_log<T: Scalar>(path: &Path, records: &[StepRecord<T>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        let line = StepLine {
            iteration: r.iteration,
            kernel: r.kernel.as_str().into(),
            accepted: r.accepted,
            log_prior: to_f64(r.log_prior),
            log_likelihood: to_f64(r.log_likelihood),
            delta_h: r.delta_h,
        };
        writeln!(
            w,
            "{}",
            serde_json::to_string(&line).map_err(|e| Error::Format(e.to_string()))?
        )?;
    }
    Ok(())
}

pub fn read_chain_log(path: &Path) -> Result<Vec<StepRecord<f64>>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StepLine =
            serde_json::from_str(&line).map_err(|e| Error::Format(e.to_string()))?;
        out.push(StepRecord {
            iteration: rec.iteration,
            kernel: kernel_from_str(&rec.kernel)?,
            accepted: rec.accepted,
            log_prior: rec.log_prior,
            log_likelihood: rec.log_likelihood,
            delta_h: rec.delta_h,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_records() -> Vec<StepRecord<f64>> {
        vec![
            StepRecord {
                iteration: 0,
                kernel: KernelKind::SingleSite,
                accepted: true,
                log_prior: -3.25,
                log_likelihood: -101.5,
                delta_h: None,
            },
            StepRecord {
                iteration: 1,
                kernel: KernelKind::Hmc,
                accepted: false,
                log_prior: -3.1234567890123456,
                log_likelihood: -99.0,
                delta_h: Some(0.4375),
            },
            StepRecord {
                iteration: 2,
                kernel: KernelKind::DataDriven,
                accepted: true,
                log_prior: -2.0,
                log_likelihood: -50.0,
                delta_h: None,
            },
        ]
    }

    #[test]
    fn log_round_trips_and_rewrite_is_byte_identical() {
        let records = sample_records();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        write_chain_log(&a, &records).unwrap();
        let back = read_chain_log(&a).unwrap();
        assert_eq!(back.len(), records.len());
        for (x, y) in back.iter().zip(&records) {
            assert_eq!(x.iteration, y.iteration);
            assert_eq!(x.kernel, y.kernel);
            assert_eq!(x.accepted, y.accepted);
            assert_eq!(x.log_prior.to_bits(), y.log_prior.to_bits());
            assert_eq!(x.log_likelihood.to_bits(), y.log_likelihood.to_bits());
            assert_eq!(x.delta_h, y.delta_h);
        }
        write_chain_log(&b, &back).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn unknown_kernel_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"iteration\":0,\"kernel\":\"warp\",\"accepted\":true,\
             \"log_prior\":0.0,\"log_likelihood\":0.0}\n",
        )
        .unwrap();
        assert!(read_chain_log(&path).is_err());
    }
}
