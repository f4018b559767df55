//! Cloud ingest and export: CSV and the little-endian `EMB1` binary format.
//!
//! Binary layout: bytes 0..4 `b"EMB1"`, 4..8 `N` (u32 LE), 8..12 `n`
//! (u32 LE), 12..16 element width in bytes (u32 LE: 4, 8, or 0 for
//! "unspecified"), then `N·n` little-endian floats in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::PointCloud;

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    RawF32,
    RawF64,
}

impl Format {
    /// Guess from the file extension: `.csv`, `.f32`, `.f64`/`.bin`.
    pub fn from_extension(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()? {
            "csv" => Some(Format::Csv),
            "f32" => Some(Format::RawF32),
            "f64" | "bin" | "emb" => Some(Format::RawF64),
            _ => None,
        }
    }
}

pub fn ingest(path: &Path, format: Format) -> Result<PointCloud> {
    match format {
        Format::Csv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_csv(&text)
        }
        Format::RawF32 | Format::RawF64 => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_raw(&bytes, format)
        }
    }
}

pub fn write(cloud: &PointCloud, path: &Path, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Csv => to_csv(cloud)?.into_bytes(),
        Format::RawF32 | Format::RawF64 => to_raw(cloud, format)?,
    };
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// One point per row, no header. If the first field of the first row is not
/// a number, the first column is read as labels for every row.
pub fn parse_csv(text: &str) -> Result<PointCloud> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut has_labels = None;
    let mut dim = None;
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let labelled = *has_labels.get_or_insert_with(|| rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()));
        let skip = usize::from(labelled);
        if labelled {
            labels.push(rec.get(0).unwrap_or_default().to_string());
        }
        let found = rec.len().saturating_sub(skip);
        let expected = *dim.get_or_insert(found);
        if found != expected {
            return Err(Error::RowDimensionMismatch { row, expected, found });
        }
        for (col, field) in rec.iter().skip(skip).enumerate() {
            let x: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                col,
                text: field.to_string(),
            })?;
            if !x.is_finite() {
                return Err(Error::NonFiniteValue { row, col });
            }
            coords.push(x);
        }
    }
    let dim = dim.ok_or_else(|| Error::InvalidCloud("no rows".into()))?;
    PointCloud::from_flat(coords, dim, has_labels.unwrap_or(false).then_some(labels))
}

/// Shortest round-trip formatting, so parsing the output gives the same bits.
pub fn to_csv(cloud: &PointCloud) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(vec![]);
    for (i, p) in cloud.points().enumerate() {
        let mut rec: Vec<String> = Vec::with_capacity(cloud.dim() + 1);
        if let Some(l) = cloud.labels() {
            rec.push(l[i].clone());
        }
        rec.extend(p.iter().map(|x| format!("{x:?}")));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidCloud(e.to_string()))
}

fn width(format: Format) -> usize {
    match format {
        Format::RawF32 => 4,
        _ => 8,
    }
}

pub fn parse_raw(bytes: &[u8], format: Format) -> Result<PointCloud> {
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "expected at least {HEADER_LEN} header bytes, found {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::MalformedHeader(format!("bad magic {:?}", &bytes[..4])));
    }
    let (rows, dim, declared) = (u32_at(4), u32_at(8), u32_at(12));
    let w = width(format);
    if declared != 0 && declared != w {
        return Err(Error::MalformedHeader(format!(
            "header declares {declared}-byte elements, reading as {w}-byte"
        )));
    }
    let expected = rows
        .checked_mul(dim)
        .and_then(|c| c.checked_mul(w))
        .ok_or_else(|| Error::MalformedHeader("payload size overflows".into()))?;
    let actual = bytes.len() - HEADER_LEN;
    if actual != expected {
        return Err(Error::MalformedHeader(format!(
            "expected {expected} payload bytes for {rows}x{dim} {w}-byte floats, found {actual}"
        )));
    }
    let payload = &bytes[HEADER_LEN..];
    let coords: Vec<f64> = match format {
        Format::RawF32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect(),
        _ => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    PointCloud::from_flat(coords, dim, None)
}

/// Raw f32 output rounds each coordinate to the nearest f32.
pub fn to_raw(cloud: &PointCloud, format: Format) -> Result<Vec<u8>> {
    let w = width(format);
    let as_u32 = |v: usize, what: &str| u32::try_from(v).map_err(|_| Error::InvalidCloud(format!("{what} {v} exceeds u32")));
    let mut out = Vec::with_capacity(HEADER_LEN + cloud.coords().len() * w);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&as_u32(cloud.len(), "row count")?.to_le_bytes());
    out.extend_from_slice(&as_u32(cloud.dim(), "dimension")?.to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    for &x in cloud.coords() {
        match format {
            Format::RawF32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
            _ => out.extend_from_slice(&x.to_le_bytes()),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labelled_csv() {
        let c = parse_csv("a,1,0\nb,0,1\nc,0,0").unwrap();
        assert_eq!((c.len(), c.dim()), (3, 2));
        assert_eq!(c.labels().unwrap(), &["a", "b", "c"]);
        assert_eq!(c.point(1), &[0.0, 1.0]);
        let c = parse_csv("1,2\n3,4\n").unwrap();
        assert!(c.labels().is_none());
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            parse_csv("1,2\n3,4,5"),
            Err(Error::RowDimensionMismatch { row: 1, expected: 2, found: 3 })
        ));
        assert!(matches!(parse_csv("1,2\n3,NaN"), Err(Error::NonFiniteValue { row: 1, col: 1 })));
        assert!(matches!(parse_csv("1,2\n3,x"), Err(Error::Parse { row: 1, col: 1, .. })));
    }

    #[test]
    fn raw_f32_two_by_four() {
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&4u32.to_le_bytes());
        for i in 0..8 {
            bytes.extend_from_slice(&(i as f32 * 0.5).to_le_bytes());
        }
        let c = parse_raw(&bytes, Format::RawF32).unwrap();
        assert_eq!((c.len(), c.dim()), (2, 4));
        assert_eq!(c.point(1), &[2.0, 2.5, 3.0, 3.5]);

        bytes.truncate(bytes.len() - 4);
        let err = parse_raw(&bytes, Format::RawF32).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::MalformedHeader(_)));
        assert!(msg.contains("32") && msg.contains("28"), "{msg}");
    }

    #[test]
    fn raw_rejects_bad_magic_and_nan() {
        let mut bytes = b"EMB2".to_vec();
        bytes.extend_from_slice(&[0u8; 12]);
        assert!(matches!(parse_raw(&bytes, Format::RawF64), Err(Error::MalformedHeader(_))));
        let c = PointCloud::from_rows(&[vec![1.0, 2.0]], None).unwrap();
        let mut raw = to_raw(&c, Format::RawF64).unwrap();
        raw[HEADER_LEN..HEADER_LEN + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(
            parse_raw(&raw, Format::RawF64),
            Err(Error::NonFiniteValue { row: 0, col: 0 })
        ));
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = PointCloud::from_rows(
            &[vec![0.1, -2.5e-300, 3.0], vec![1.0 / 3.0, 7.0, -0.0]],
            Some(vec!["x".into(), "y z".into()]),
        )
        .unwrap();
        let p = dir.path().join("c.csv");
        write(&c, &p, Format::Csv).unwrap();
        let back = ingest(&p, Format::Csv).unwrap();
        assert_eq!(back.labels(), c.labels());
        assert_eq!(back.coords(), c.coords());
        let p = dir.path().join("c.f64");
        write(&c, &p, Format::RawF64).unwrap();
        assert_eq!(ingest(&p, Format::RawF64).unwrap().coords(), c.coords());
        assert!(matches!(
            ingest(&dir.path().join("missing.csv"), Format::Csv),
            Err(Error::Io { .. })
        ));
    }
}
