//! SGF1 field files and event directories.
//!
//! Layout (little-endian):
//!
//! | bytes  | content                                          |
//! |--------|--------------------------------------------------|
//! | 0–3    | magic `SGF1`                                     |
//! | 4–11   | variable name, ASCII, zero-padded                |
//! | 12–19  | timestamp, u64                                   |
//! | 20–31  | levels, pixel_rows, pixel_cols as u32            |
//! | 32–    | `levels·rows·cols` f32, level-major then row-major |
//!
//! An event directory holds one file per field named
//! `<variable>_<timestamp>.sgf` plus a line-oriented `manifest.txt`:
//!
//! ```text
//! # SGF1 event manifest
//! grid <cell_rows> <cell_cols> <pixels_per_cell_side> <levels>
//! cadence <seconds>
//! frame <timestamp> <W file> <BYC file> <R file>
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DomainGrid, EventSeries, Frame, GridError, GriddedField, Variable};

pub const HEADER_LEN: usize = 32;
pub const MANIFEST_NAME: &str = "manifest.txt";
const MAGIC: &[u8; 4] = b"SGF1";

pub fn write_field(field: &GriddedField, path: impl AsRef<Path>) -> Result<(), GridError> {
    let path = path.as_ref();
    field.check_finite()?;

    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    let name = field.variable.name().as_bytes();
    header[4..4 + name.len()].copy_from_slice(name);
    header[12..20].copy_from_slice(&field.timestamp.to_le_bytes());
    for (k, d) in field.dims().iter().enumerate() {
        let d = u32::try_from(*d)
            .map_err(|_| GridError::InvalidGrid(format!("dimension {d} exceeds u32")))?;
        header[20 + 4 * k..24 + 4 * k].copy_from_slice(&d.to_le_bytes());
    }

    let file = File::create(path).map_err(|e| GridError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut payload = Vec::with_capacity(field.values().len() * 4);
    for v in field.values() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&header)
        .and_then(|_| out.write_all(&payload))
        .and_then(|_| out.flush())
        .map_err(|e| GridError::io(path, e))
}

pub fn read_field(path: impl AsRef<Path>) -> Result<GriddedField, GridError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| GridError::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| GridError::io(path, e))?;
    decode_field(&bytes)
}

fn decode_field(bytes: &[u8]) -> Result<GriddedField, GridError> {
    if bytes.len() < 4 {
        return Err(GridError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(GridError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(GridError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let name_bytes = &bytes[4..12];
    let name_len = name_bytes.iter().position(|&b| b == 0).unwrap_or(8);
    let name = std::str::from_utf8(&name_bytes[..name_len])
        .map_err(|_| GridError::UnknownVariable(format!("{name_bytes:?}")))?;
    let variable: Variable = name.parse()?;
    let timestamp = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let mut dims = [0usize; 3];
    for (k, d) in dims.iter_mut().enumerate() {
        *d = u32::from_le_bytes(bytes[20 + 4 * k..24 + 4 * k].try_into().unwrap()) as usize;
    }

    let expected = dims.iter().product::<usize>() * 4;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(GridError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() != expected {
        return Err(GridError::DimsMismatch {
            expected,
            found: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    GriddedField::new(variable, timestamp, dims, values)
}

fn field_file_name(variable: Variable, timestamp: u64) -> String {
    format!("{}_{}.sgf", variable.name(), timestamp)
}

/// Writes every field of `series` plus the manifest into `dir`, creating it
/// if needed.
pub fn write_event(series: &EventSeries, dir: impl AsRef<Path>) -> Result<(), GridError> {
    let dir = dir.as_ref();
    series.validate()?;
    fs::create_dir_all(dir).map_err(|e| GridError::io(dir, e))?;

    let g = &series.grid;
    let mut manifest = String::from("# SGF1 event manifest\n");
    manifest.push_str(&format!(
        "grid {} {} {} {}\n",
        g.cell_rows, g.cell_cols, g.pixels_per_cell_side, g.levels
    ));
    manifest.push_str(&format!("cadence {}\n", series.cadence));
    for frame in &series.frames {
        let ts = frame.timestamp();
        let names: Vec<String> = Variable::ALL
            .iter()
            .map(|&v| field_file_name(v, ts))
            .collect();
        for (&var, name) in Variable::ALL.iter().zip(&names) {
            write_field(frame.field(var), dir.join(name))?;
        }
        manifest.push_str(&format!("frame {ts} {}\n", names.join(" ")));
    }
    let path = dir.join(MANIFEST_NAME);
    fs::write(&path, manifest).map_err(|e| GridError::io(path, e))
}

pub fn read_event(dir: impl AsRef<Path>) -> Result<EventSeries, GridError> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(|e| GridError::io(&path, e))?;

    let mut grid = None;
    let mut cadence = None;
    let mut frames = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| GridError::Manifest {
            line: line_no,
            reason: reason.to_string(),
        };
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts[0] {
            "grid" => {
                let nums: Result<Vec<usize>, _> = parts[1..].iter().map(|p| p.parse()).collect();
                match nums.as_deref() {
                    Ok([r, c, p, l]) => grid = Some(DomainGrid::new(*r, *c, *p, *l)?),
                    _ => return Err(bad("expected four grid counts")),
                }
            }
            "cadence" => {
                cadence = Some(
                    parts
                        .get(1)
                        .and_then(|p| p.parse::<u64>().ok())
                        .ok_or_else(|| bad("expected cadence seconds"))?,
                );
            }
            "frame" => {
                if parts.len() != 5 {
                    return Err(bad("expected timestamp and three file names"));
                }
                let ts: u64 = parts[1].parse().map_err(|_| bad("bad timestamp"))?;
                let mut fields = Vec::with_capacity(3);
                for (&var, name) in Variable::ALL.iter().zip(&parts[2..]) {
                    let field = read_field(dir.join(name))?;
                    if field.variable != var || field.timestamp != ts {
                        return Err(bad(&format!(
                            "{name} holds {} at {}, expected {var} at {ts}",
                            field.variable, field.timestamp
                        )));
                    }
                    fields.push(field);
                }
                let r = fields.pop().unwrap();
                let byc = fields.pop().unwrap();
                let w = fields.pop().unwrap();
                frames.push(Frame { w, byc, r });
            }
            other => return Err(bad(&format!("unknown record {other:?}"))),
        }
    }
    let series = EventSeries {
        grid: grid.ok_or_else(|| GridError::InvalidSeries("manifest lacks a grid line".into()))?,
        cadence: cadence
            .ok_or_else(|| GridError::InvalidSeries("manifest lacks a cadence line".into()))?,
        frames,
    };
    series.validate()?;
    Ok(series)
}
