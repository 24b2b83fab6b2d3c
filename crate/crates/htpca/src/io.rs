//! Matrix, image and table files.
//!
//! * Matrix CSV: one line per row, comma separated, 17 significant digits,
//!   no header.
//! * Matrix binary: the 8-byte magic `HTPCAMAT`, the row and column counts
//!   as little-endian `u64`, then the entries row-major as little-endian
//!   `f64`.
//! * PGM: binary `P5` with `maxval ≤ 255`; pixel `v` maps to `v / maxval`
//!   in `[0, 1]`. Writing clips to `[0, 1]` and rounds to the nearest level.

use std::fs;
use std::io::Write;
use std::path::Path;

use htpca_core::linalg::Matrix;
use htpca_core::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 8] = b"HTPCAMAT";

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Input(format!("{}: {e}", path.display()))
}

pub fn matrix_to_csv(m: &Matrix<f64>) -> String {
    let mut s = String::with_capacity(m.nrows() * m.ncols() * 24);
    for row in m.rows_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Parses matrix CSV. Blank lines are skipped; errors name the 1-based line
/// and column.
pub fn matrix_from_csv(text: &str) -> Result<Matrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(c, tok)| {
                let tok = tok.trim();
                match tok.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    Ok(_) => Err(Error::Input(format!(
                        "line {}, column {}: non-finite value `{tok}`",
                        k + 1,
                        c + 1
                    ))),
                    Err(_) => Err(Error::Input(format!(
                        "line {}, column {}: cannot parse `{tok}`",
                        k + 1,
                        c + 1
                    ))),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Input(format!(
                    "line {}: expected {} values, found {}",
                    k + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Input("matrix file holds no rows".into()));
    }
    Ok(Matrix::from_rows(&rows))
}

pub fn matrix_to_bytes(m: &Matrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * m.as_slice().len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses the binary matrix format; errors carry byte offsets.
pub fn matrix_from_bytes(bytes: &[u8]) -> Result<Matrix<f64>> {
    if bytes.len() < 24 {
        return Err(Error::Input(format!(
            "byte 0: binary matrix header needs 24 bytes, file has {}",
            bytes.len()
        )));
    }
    if &bytes[..8] != MATRIX_MAGIC {
        return Err(Error::Input("byte 0: bad magic, not a binary matrix file".into()));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let (rows, cols) = (word(8) as usize, word(16) as usize);
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(24))
        .ok_or_else(|| Error::Input("byte 8: matrix dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Input(format!(
            "byte 24: {rows}×{cols} matrix needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let data = bytes[24..]
        .chunks_exact(8)
        .enumerate()
        .map(|(k, c)| {
            let v = f64::from_le_bytes(c.try_into().unwrap());
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Input(format!("byte {}: non-finite value", 24 + 8 * k)))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Matrix::from_vec(rows, cols, data)
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("bin"))
}

/// Reads a matrix, choosing the binary format for `.bin` files and CSV
/// otherwise.
pub fn read_matrix(path: &Path) -> Result<Matrix<f64>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let parsed = if is_binary(path) {
        matrix_from_bytes(&bytes)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|e| Error::Input(format!("byte {}: invalid UTF-8", e.utf8_error().valid_up_to())))?;
        matrix_from_csv(&text)
    };
    parsed.map_err(|e| match e {
        Error::Input(msg) => Error::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_matrix(path: &Path, m: &Matrix<f64>) -> Result<()> {
    if is_binary(path) {
        write_bytes(path, &matrix_to_bytes(m))
    } else {
        write_text(path, &matrix_to_csv(m))
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(bytes).map_err(|e| io_err(path, e))
}

/// Gray image with pixels in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{width}×{height} image cannot hold {} pixels",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }
}

/// Encodes as 8-bit `P5`, clipping to `[0, 1]`.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(
        img.pixels
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

/// Decodes a binary `P5` PGM with `maxval ≤ 255`. `#` comments are
/// allowed in the header; errors carry byte offsets.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0usize;
    let token = |pos: &mut usize| -> Result<(String, usize)> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::Input(format!("byte {start}: truncated PGM header")));
        }
        Ok((String::from_utf8_lossy(&bytes[start..*pos]).into_owned(), start))
    };
    let (magic, at) = token(&mut pos)?;
    if magic != "P5" {
        return Err(Error::Input(format!("byte {at}: expected P5 magic, found `{magic}`")));
    }
    let number = |pos: &mut usize, what: &str| -> Result<usize> {
        let (t, at) = token(pos)?;
        t.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::Input(format!("byte {at}: bad {what} `{t}`")))
    };
    let width = number(&mut pos, "width")?;
    let height = number(&mut pos, "height")?;
    let maxval = number(&mut pos, "maxval")?;
    if maxval > 255 {
        return Err(Error::Input(format!(
            "byte {pos}: only 8-bit PGM is supported, maxval is {maxval}"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(Error::Input(format!(
            "byte {pos}: raster needs {need} bytes, {} available",
            bytes.len().saturating_sub(pos)
        )));
    }
    let pixels = bytes[pos..pos + need]
        .iter()
        .map(|&b| b as f64 / maxval as f64)
        .collect();
    GrayImage::new(width, height, pixels)
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_pgm(&bytes).map_err(|e| match e {
        Error::Input(msg) => Error::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    write_bytes(path, &encode_pgm(img))
}
