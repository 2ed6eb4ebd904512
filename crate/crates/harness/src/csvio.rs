//! CSV persistence with a byte-exact contract: fixed headers, LF newlines,
//! shortest round-trip decimals, deterministic row order.

use std::io::Write;
use std::path::Path;

use gsmvi::metrics::TraceRecord;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("refusing to write an empty trace")]
    EmptyTrace,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CsvError + '_ {
    move |source| CsvError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes trace rows sorted by `(algorithm, run_id, iteration)` under the
/// exact header `algorithm,run_id,iteration,grad_evals,metric,value`.
pub fn write_trace_csv(records: &[TraceRecord], path: &Path) -> Result<(), CsvError> {
    if records.is_empty() {
        return Err(CsvError::EmptyTrace);
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&records[a], &records[b]);
        (&ra.algorithm, ra.run_id, ra.iteration).cmp(&(&rb.algorithm, rb.run_id, rb.iteration))
    });
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str("algorithm,run_id,iteration,grad_evals,metric,value\n");
    for idx in order {
        let r = &records[idx];
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.algorithm,
            r.run_id,
            r.iteration,
            r.grad_evals,
            r.metric.name(),
            r.value
        ));
    }
    write_atomically(path, out.as_bytes())
}

/// One row of the 1-D update vector field.
#[derive(Debug, Clone, Copy)]
pub struct VectorFieldRow {
    pub mu: f64,
    pub sigma: f64,
    pub dmu: f64,
    pub dsigma: f64,
}

/// Writes the vector-field grid under the header `mu,sigma,dmu,dsigma`,
/// rows in the caller's (row-major grid) order.
pub fn write_vectorfield_csv(rows: &[VectorFieldRow], path: &Path) -> Result<(), CsvError> {
    if rows.is_empty() {
        return Err(CsvError::EmptyTrace);
    }
    let mut out = String::with_capacity(32 * (rows.len() + 1));
    out.push_str("mu,sigma,dmu,dsigma\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.mu, r.sigma, r.dmu, r.dsigma));
    }
    write_atomically(path, out.as_bytes())
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), CsvError> {
    let mut file = std::fs::File::create(path).map_err(io_err(path))?;
    file.write_all(bytes).map_err(io_err(path))?;
    Ok(())
}
