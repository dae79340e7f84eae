//! Matrix, image and signal files.
//!
//! SIMX layout: the bytes `SIMX`, `rows` and `cols` as little-endian `u32`,
//! then `rows · cols` little-endian `f64` values in column-major order.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"SIMX";

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub fn write_simx<T: Real>(path: &Path, m: &Matrix<T>) -> Result<()> {
    let rows = u32::try_from(m.rows()).map_err(|_| Error::Size("too many rows for SIMX".into()))?;
    let cols = u32::try_from(m.cols()).map_err(|_| Error::Size("too many columns for SIMX".into()))?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    for &v in m.as_slice() {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_simx<T: Real>(path: &Path) -> Result<Matrix<T>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_simx(&bytes).map_err(|msg| parse_err(path, msg))
}

fn decode_simx<T: Real>(bytes: &[u8]) -> std::result::Result<Matrix<T>, String> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err("missing SIMX header".into());
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let payload = &bytes[12..];
    let want = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or("matrix size overflows")?;
    if payload.len() != want {
        return Err(format!(
            "{rows}x{cols} matrix needs {want} payload bytes, found {}",
            payload.len()
        ));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    Matrix::from_col_major(rows, cols, data).map_err(|e| e.to_string())
}

/// Headerless CSV, one matrix row per line.
pub fn write_csv_matrix<T: Real>(path: &Path, m: &Matrix<T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|v| format!("{}", v.as_f64())))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv_matrix<T: Real>(path: &Path) -> Result<Matrix<T>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map(T::lit)
                    .map_err(|_| parse_err(path, format!("line {}: not a number: {f:?}", line + 1)))
            })
            .collect::<Result<Vec<T>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    format!(
                        "line {}: {} fields, expected {}",
                        line + 1,
                        row.len(),
                        first.len()
                    ),
                ));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Binary PGM (`P5`) with 8- or 16-bit samples; values are returned as read,
/// `height × width`.
pub fn read_pgm<T: Real>(path: &Path) -> Result<Matrix<T>> {
    let bytes = fs::read(path)?;
    decode_pgm(&bytes).map_err(|msg| parse_err(path, msg))
}

fn decode_pgm<T: Real>(bytes: &[u8]) -> std::result::Result<Matrix<T>, String> {
    let mut pos = 0;
    let mut token = || -> std::result::Result<String, String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err("not a binary PGM (P5)".into());
    }
    let num = |t: String| t.parse::<usize>().map_err(|_| format!("bad header field {t:?}"));
    let width = num(token()?)?;
    let height = num(token()?)?;
    let maxval = num(token()?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} out of range"));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let wide = maxval > 255;
    let need = width * height * if wide { 2 } else { 1 };
    if bytes.len() < start + need {
        return Err(format!(
            "raster needs {need} bytes, found {}",
            bytes.len().saturating_sub(start)
        ));
    }
    let raster = &bytes[start..start + need];
    let sample = |k: usize| -> f64 {
        if wide {
            f64::from(u16::from_be_bytes([raster[2 * k], raster[2 * k + 1]]))
        } else {
            f64::from(raster[k])
        }
    };
    Ok(Matrix::from_fn(height, width, |i, j| {
        T::lit(sample(i * width + j))
    }))
}

/// 8-bit binary PGM; values are rounded and clamped to `0..=255`.
pub fn write_pgm<T: Real>(path: &Path, img: &Matrix<T>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", img.cols(), img.rows())?;
    let mut raster = Vec::with_capacity(img.rows() * img.cols());
    for i in 0..img.rows() {
        for j in 0..img.cols() {
            raster.push(img[(i, j)].as_f64().round().clamp(0.0, 255.0) as u8);
        }
    }
    w.write_all(&raster)?;
    w.flush()?;
    Ok(())
}

/// An ECG trace from a SIMX vector (either orientation) or a single-column
/// CSV.
pub fn read_signal<T: Real>(path: &Path) -> Result<Vec<T>> {
    let m: Matrix<T> = match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("simx") => read_simx(path)?,
        _ => read_csv_matrix(path)?,
    };
    if m.cols() != 1 && m.rows() != 1 {
        return Err(parse_err(
            path,
            format!(
                "expected a single column, found a {}x{} matrix",
                m.rows(),
                m.cols()
            ),
        ));
    }
    Ok(m.into_vec())
}

/// Every `*.pgm` file in a directory, in file name order.
pub fn read_pgm_dir<T: Real>(dir: &Path) -> Result<Vec<Matrix<T>>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no .pgm images in {}", dir.display())));
    }
    paths.iter().map(|p| read_pgm(p)).collect()
}
