use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{CellState, OccupancyGrid};
use crate::error::{Error, Result};

pub const GRID_HEADER_SUFFIX: &str = ".json";

/// Sidecar describing how image pixels map back to world coordinates.
/// Image row 0 is the grid's highest row (largest y), so the image reads
/// with +y up.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridHeader {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    pub image_row_0: &'static str,
    pub occupancy_pgm: String,
    pub reachable_pgm: String,
    pub values: GridValues,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridValues {
    pub occupied: u8,
    pub inflated: u8,
    pub free: u8,
    pub reachable: u8,
    pub unreachable_free: u8,
}

const VALUES: GridValues = GridValues {
    occupied: 0,
    inflated: 64,
    free: 255,
    reachable: 255,
    unreachable_free: 128,
};

fn occupancy_value(c: CellState) -> u8 {
    match c {
        CellState::Occupied => VALUES.occupied,
        CellState::Inflated => VALUES.inflated,
        CellState::Free | CellState::Reachable => VALUES.free,
    }
}

fn reachable_value(c: CellState) -> u8 {
    match c {
        CellState::Reachable => VALUES.reachable,
        CellState::Free => VALUES.unreachable_free,
        other => occupancy_value(other),
    }
}

fn pgm(grid: &OccupancyGrid, comment: Option<&str>, value: fn(CellState) -> u8) -> Vec<u8> {
    let mut out = b"P5\n".to_vec();
    if let Some(c) = comment {
        out.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    out.extend_from_slice(format!("{} {}\n255\n", grid.width, grid.height).as_bytes());
    for row in (0..grid.height).rev() {
        out.extend((0..grid.width).map(|col| value(grid.state(row, col))));
    }
    out
}

/// Writes `<stem>.pgm`, `<stem>_reachable.pgm` and `<stem>.json` into `dir`.
pub fn write_grid(
    grid: &OccupancyGrid,
    dir: &Path,
    stem: &str,
    input_sha256: Option<&str>,
) -> Result<GridHeader> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = GridHeader {
        origin: grid.origin,
        cell_size: grid.cell_size,
        width: grid.width,
        height: grid.height,
        image_row_0: "max_y",
        occupancy_pgm: format!("{stem}.pgm"),
        reachable_pgm: format!("{stem}_reachable.pgm"),
        values: VALUES,
        input_sha256: input_sha256.map(str::to_owned),
    };
    let comment = input_sha256.map(|h| format!("input_sha256 {h}"));
    for (name, f) in [
        (&header.occupancy_pgm, occupancy_value as fn(CellState) -> u8),
        (&header.reachable_pgm, reachable_value),
    ] {
        let path = dir.join(name);
        fs::write(&path, pgm(grid, comment.as_deref(), f)).map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join(format!("{stem}{GRID_HEADER_SUFFIX}"));
    let mut json = serde_json::to_string_pretty(&header).expect("grid header serializes");
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(header)
}
