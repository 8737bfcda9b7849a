//! Binary little-endian PLY with `float x, y, z` and `uchar red, green, blue`.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point;

const PROPERTIES: [&str; 6] = [
    "property float x",
    "property float y",
    "property float z",
    "property uchar red",
    "property uchar green",
    "property uchar blue",
];

pub fn write_ply(path: &Path, points: &[(Point, [u8; 3])], comments: &[String]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "ply")?;
        writeln!(w, "format binary_little_endian 1.0")?;
        for c in comments {
            writeln!(w, "comment {c}")?;
        }
        writeln!(w, "element vertex {}", points.len())?;
        for p in PROPERTIES {
            writeln!(w, "{p}")?;
        }
        writeln!(w, "end_header")?;
        for (p, rgb) in points {
            for c in [p.x, p.y, p.z] {
                w.write_all(&(c as f32).to_le_bytes())?;
            }
            w.write_all(rgb)?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`write_ply`].
pub fn read_ply(path: &Path) -> Result<Vec<(Point, [u8; 3])>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    let mut next_line = |r: &mut BufReader<std::fs::File>| -> Result<String> {
        line.clear();
        let n = r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(Error::format(path, "truncated PLY header"));
        }
        Ok(line.trim_end().to_string())
    };

    if next_line(&mut r)? != "ply" {
        return Err(Error::format(path, "not a PLY file"));
    }
    if next_line(&mut r)? != "format binary_little_endian 1.0" {
        return Err(Error::format(path, "expected binary_little_endian PLY"));
    }
    let mut count = None;
    let mut props = Vec::new();
    loop {
        let l = next_line(&mut r)?;
        if l == "end_header" {
            break;
        } else if let Some(n) = l.strip_prefix("element vertex ") {
            count = Some(n.parse::<usize>().map_err(|_| Error::format(path, "bad vertex count"))?);
        } else if l.starts_with("property") {
            props.push(l);
        } else if !l.starts_with("comment") {
            return Err(Error::format(path, format!("unexpected header line `{l}`")));
        }
    }
    if props != PROPERTIES {
        return Err(Error::format(path, "unsupported vertex layout"));
    }
    let count = count.ok_or_else(|| Error::format(path, "missing vertex element"))?;

    let mut buf = vec![0u8; count * 15];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format(path, "truncated vertex data"))?;
    Ok(buf
        .chunks_exact(15)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes([c[i], c[i + 1], c[i + 2], c[i + 3]]) as f64;
            (Point::new(f(0), f(4), f(8)), [c[12], c[13], c[14]])
        })
        .collect())
}
