//! Reading and writing paired embedding files.
//!
//! Binary layout (little-endian): `b"CNST"`, `u16` version, `u8` dtype (4 or
//! 8 bytes per value), `u32` dim, `u32` count, then `U` row-major followed by
//! `V` row-major. The CSV form has a `side,index,c0,...` header with one row per
//! embedding.

use std::fs;
use std::path::Path;

use constellation::geometry::{norm, EmbeddingSet, PairedConfig};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"CNST";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 4;

/// Rows further than this from unit norm are rejected on load.
pub const UNIT_NORM_TOL: f64 = 1e-6;
const ROUND_OFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 4,
    F64 = 8,
}

impl Dtype {
    fn from_code(code: u8) -> Option<Self> {
        match code {
            4 => Some(Self::F32),
            8 => Some(Self::F64),
            _ => None,
        }
    }

    fn width(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone)]
pub struct LoadedPair {
    pub pair: PairedConfig,
    /// Rows whose norm was off by more than round-off and got rescaled.
    pub renormalized_rows: usize,
}

pub fn encode_binary(pair: &PairedConfig, dtype: Dtype) -> Vec<u8> {
    let (n, d) = (pair.count(), pair.dim());
    let mut out = Vec::with_capacity(HEADER_LEN + 2 * n * d * dtype.width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(dtype as u8);
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for &x in pair.u.as_slice().iter().chain(pair.v.as_slice()) {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&x.to_le_bytes()),
        }
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<LoadedPair> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(CliError::Shape("missing CNST header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(CliError::Shape(format!("unsupported version {version}")));
    }
    let dtype = Dtype::from_code(bytes[6]).ok_or_else(|| CliError::Shape(format!("unknown dtype {}", bytes[6])))?;
    let d = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(bytes[11..15].try_into().unwrap()) as usize;
    if d == 0 || n == 0 {
        return Err(CliError::Shape(format!("empty payload (d = {d}, n = {n})")));
    }
    let payload = &bytes[HEADER_LEN..];
    let expected = 2 * n * d * dtype.width();
    if payload.len() != expected {
        return Err(CliError::Shape(format!(
            "payload has {} bytes, expected {expected} for d = {d}, n = {n}",
            payload.len()
        )));
    }
    let values: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    let (u, v) = values.split_at(n * d);
    assemble(d, u.to_vec(), v.to_vec())
}

pub fn encode_csv(pair: &PairedConfig) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["side".to_string(), "index".to_string()];
    header.extend((0..pair.dim()).map(|c| format!("c{c}")));
    w.write_record(&header).map_err(csv_err)?;
    for (side, set) in [("U", &pair.u), ("V", &pair.v)] {
        for (i, row) in set.rows().enumerate() {
            let mut rec = vec![side.to_string(), i.to_string()];
            rec.extend(row.iter().map(|x| x.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Shape(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn decode_csv(text: &str) -> Result<LoadedPair> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?.clone();
    let d = header.len().saturating_sub(2);
    let expected: Vec<String> = ["side".to_string(), "index".to_string()]
        .into_iter()
        .chain((0..d).map(|c| format!("c{c}")))
        .collect();
    if d == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(CliError::Shape("header must be side,index,c0,...,c{d-1}".into()));
    }
    let mut rows: [Vec<(usize, Vec<f64>)>; 2] = [Vec::new(), Vec::new()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |what: &str| CliError::Shape(format!("record {}: {what}", line + 1));
        let side = match &rec[0] {
            "U" => 0,
            "V" => 1,
            _ => return Err(bad("side must be U or V")),
        };
        let index: usize = rec[1].trim().parse().map_err(|_| bad("bad index"))?;
        let values = rec
            .iter()
            .skip(2)
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad("bad coordinate")))
            .collect::<Result<Vec<_>>>()?;
        rows[side].push((index, values));
    }
    let [u, v] = rows.map(|mut side| {
        side.sort_by_key(|r| r.0);
        side
    });
    let n = u.len();
    if n == 0 || v.len() != n {
        return Err(CliError::Shape(format!("U has {n} rows, V has {}", v.len())));
    }
    for side in [&u, &v] {
        if side.iter().enumerate().any(|(i, r)| r.0 != i) {
            return Err(CliError::Shape("indices must be 0..n-1 on each side".into()));
        }
    }
    let flat = |side: Vec<(usize, Vec<f64>)>| side.into_iter().flat_map(|r| r.1).collect::<Vec<_>>();
    assemble(d, flat(u), flat(v))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Shape(e.to_string())
}

fn assemble(d: usize, u: Vec<f64>, v: Vec<f64>) -> Result<LoadedPair> {
    if u.iter().chain(&v).any(|x| !x.is_finite()) {
        return Err(CliError::Shape("non-finite coordinate".into()));
    }
    let mut renormalized_rows = 0;
    let mut sets = Vec::with_capacity(2);
    for (side, data) in [('U', u), ('V', v)] {
        let raw = EmbeddingSet::from_raw(d, data)?;
        let deviations: Vec<f64> = raw.rows().map(|r| (norm(r) - 1.0).abs()).collect();
        let bad: Vec<f64> = deviations.iter().copied().filter(|&e| e > UNIT_NORM_TOL).collect();
        if !bad.is_empty() {
            return Err(CliError::NonUnitRows {
                side,
                count: bad.len(),
                worst: bad.iter().copied().fold(0.0, f64::max),
            });
        }
        // Rows already unit up to round-off keep their exact bits.
        let mut data = raw.into_vec();
        for (row, &dev) in data.chunks_mut(d).zip(&deviations) {
            if dev > ROUND_OFF {
                let r = norm(row);
                row.iter_mut().for_each(|x| *x /= r);
                renormalized_rows += 1;
            }
        }
        sets.push(EmbeddingSet::from_raw(d, data)?);
    }
    let v = sets.pop().unwrap();
    let u = sets.pop().unwrap();
    Ok(LoadedPair {
        pair: PairedConfig::new(u, v)?,
        renormalized_rows,
    })
}

/// Loads a pair, choosing the format from the leading bytes.
pub fn read_pair(path: &Path) -> Result<LoadedPair> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let parsed = if bytes.starts_with(MAGIC) {
        decode_binary(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| CliError::Parse {
            path: path.into(),
            reason: "neither a CNST file nor UTF-8 CSV".into(),
        })?;
        decode_csv(&text)
    };
    let loaded = parsed.map_err(|e| match e {
        CliError::Shape(reason) => CliError::Parse {
            path: path.into(),
            reason,
        },
        other => other,
    })?;
    if loaded.renormalized_rows > 0 {
        eprintln!(
            "warning: {}: renormalized {} near-unit row(s)",
            path.display(),
            loaded.renormalized_rows
        );
    }
    Ok(loaded)
}

/// Writes CSV when the extension is `.csv`, 64-bit binary otherwise.
pub fn write_pair(path: &Path, pair: &PairedConfig) -> Result<()> {
    let bytes = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        encode_csv(pair)?.into_bytes()
    } else {
        encode_binary(pair, Dtype::F64)
    };
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
