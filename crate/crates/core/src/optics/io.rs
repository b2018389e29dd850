//! On-disk formats: binary PGM frames, the `stack.idx` focus-stack index and
//! calibration sample CSVs.

use super::{FocusStack, GrayImage, OpticsError};
use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const STACK_INDEX: &str = "stack.idx";
pub const CALIBRATION_HEADER: [&str; 2] = ["rho_star", "u_cm"];

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: malformed PGM: {reason}")]
    Pgm { path: PathBuf, reason: String },
    #[error("{path}:{line}: {reason}")]
    Line {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Optics(#[from] OpticsError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes a 16-bit binary PGM (P5, maxval 65535), clamping samples to [0, 1].
pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<(), FormatError> {
    let mut out = Vec::with_capacity(32 + 2 * image.samples().len());
    write!(out, "P5\n{} {}\n65535\n", image.width(), image.height()).expect("vec write");
    for &s in image.samples() {
        let v = (s.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Reads an 8- or 16-bit binary PGM into `[0, 1]` intensities.
pub fn read_pgm(path: &Path) -> Result<GrayImage, FormatError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let bad = |reason: &str| FormatError::Pgm {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // Skip whitespace and comments.
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("not a binary graymap (P5)"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval out of range"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let wide = maxval > 255;
    let need = w * h * if wide { 2 } else { 1 };
    let raster = bytes.get(pos..pos + need).ok_or_else(|| bad("truncated raster"))?;
    let scale = 1.0 / maxval as f64;
    let samples: Vec<f64> = if wide {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
            .collect()
    } else {
        raster.iter().map(|&b| b as f64 * scale).collect()
    };
    Ok(GrayImage::new(w, h, samples)?)
}

/// Stores a stack as `frame_NNN.pgm` files plus a `stack.idx` index.
pub fn write_stack(dir: &Path, stack: &FocusStack) -> Result<(), FormatError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut index = String::new();
    for (k, (rho, frame)) in stack.positions().iter().zip(stack.frames()).enumerate() {
        let name = format!("frame_{k:03}.pgm");
        write_pgm(&dir.join(&name), frame)?;
        index.push_str(&format!("{rho}\t{name}\n"));
    }
    let idx = dir.join(STACK_INDEX);
    fs::write(&idx, index).map_err(io_err(&idx))
}

/// Loads a stack directory written by [`write_stack`] (or by hand).
pub fn read_stack(dir: &Path) -> Result<FocusStack, FormatError> {
    let idx = dir.join(STACK_INDEX);
    let file = fs::File::open(&idx).map_err(io_err(&idx))?;
    let mut positions = Vec::new();
    let mut frames = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&idx))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| FormatError::Line {
            path: idx.clone(),
            line: n + 1,
            reason,
        };
        let (rho, name) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected `rho<TAB>filename`".into()))?;
        let rho: f64 = rho
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad motor position {rho:?}")))?;
        positions.push(rho);
        frames.push(read_pgm(&dir.join(name.trim()))?);
    }
    Ok(FocusStack::new(positions, frames)?)
}

/// Parses `rho_star,u_cm` calibration samples.
pub fn read_calibration_csv<R: Read>(reader: R, path: &Path) -> Result<Vec<(f64, f64)>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let line_err = |line: usize, reason: String| FormatError::Line {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let headers = rdr
        .headers()
        .map_err(|e| line_err(1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != CALIBRATION_HEADER {
        return Err(line_err(
            1,
            format!("expected header `rho_star,u_cm`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            line_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| -> Result<f64, FormatError> {
            let raw = record.get(i).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| line_err(line, format!("bad number {raw:?} in column {}", CALIBRATION_HEADER[i])))
        };
        samples.push((field(0)?, field(1)?));
    }
    Ok(samples)
}

pub fn load_calibration_csv(path: &Path) -> Result<Vec<(f64, f64)>, FormatError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_calibration_csv(file, path)
}

pub fn write_calibration_csv<W: Write>(writer: W, samples: &[(f64, f64)]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CALIBRATION_HEADER)?;
    for &(rho, u) in samples {
        w.write_record([rho.to_string(), u.to_string()])?;
    }
    w.flush()
}
