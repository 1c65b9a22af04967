use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Pool, Sample};
use crate::error::{Error, Result};
use crate::util::write_atomic;

pub const EMBEDDING_HEADER_PREFIX: [&str; 2] = ["id", "label"];

/// Reads an embedding CSV (`id,label,f0,...,f{d-1}`; label `-1` = unlabeled).
///
/// With `num_classes` set, labels `>= num_classes` are rejected.
pub fn load_embeddings(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<Pool> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(file, path, num_classes)
}

pub fn read_embeddings(reader: impl Read, path: &Path, num_classes: Option<usize>) -> Result<Pool> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, format!("unreadable header: {e}")))?
        .clone();
    if header.len() < 3 || header.get(0) != Some("id") || header.get(1) != Some("label") {
        return Err(parse_err(1, "header must start with `id,label,f0`".into()));
    }
    let dim = header.len() - 2;
    for (i, name) in header.iter().skip(2).enumerate() {
        if name != format!("f{i}") {
            return Err(parse_err(
                1,
                format!("expected column `f{i}`, found `{name}`"),
            ));
        }
    }

    let mut pool = Pool::new(dim);
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != dim + 2 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", dim + 2, record.len()),
            ));
        }
        let id: u64 = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("bad id `{}`", &record[0])))?;
        let raw_label: i64 = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("bad label `{}`", &record[1])))?;
        let label = match raw_label {
            -1 => None,
            l if l >= 0 && num_classes.is_none_or(|c| (l as usize) < c) => Some(l as usize),
            l => return Err(parse_err(line, format!("unknown label index {l}"))),
        };
        let features = record
            .iter()
            .skip(2)
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(line, format!("bad feature value `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        pool.samples.push(Sample {
            id,
            features,
            label,
        });
    }
    Ok(pool)
}

/// Writes `pool` in the embedding CSV format. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_embeddings(path: impl AsRef<Path>, pool: &Pool) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header: Vec<String> = EMBEDDING_HEADER_PREFIX
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..pool.dim).map(|i| format!("f{i}")));
        w.write_record(&header).map_err(csv_io)?;
        for s in &pool.samples {
            if s.features.len() != pool.dim {
                return Err(Error::DimensionMismatch {
                    expected: pool.dim,
                    actual: s.features.len(),
                });
            }
            let mut row = Vec::with_capacity(pool.dim + 2);
            row.push(s.id.to_string());
            row.push(s.label.map_or("-1".to_string(), |l| l.to_string()));
            row.extend(s.features.iter().map(|f| f.to_string()));
            w.write_record(&row).map_err(csv_io)?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    }
    write_atomic(path.as_ref(), |f| f.write_all(&buf))
}

fn csv_io(e: csv::Error) -> Error {
    Error::invalid(format!("csv write failed: {e}"))
}
