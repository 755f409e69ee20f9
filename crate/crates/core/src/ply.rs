//! ASCII PLY read/write for point clouds: `element vertex N` with float64
//! properties `x y z`. Coordinates print in shortest round-trip form, so an
//! export/import cycle is lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

fn parse_err(detail: impl Into<String>) -> Error {
    Error::Parse {
        what: "ply",
        detail: detail.into(),
    }
}

pub fn write_ply(cloud: &PointCloud, w: &mut impl Write) -> Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    if !cloud.frame_id.is_empty() {
        writeln!(w, "comment frame_id {}", cloud.frame_id)?;
    }
    writeln!(w, "element vertex {}", cloud.len())?;
    writeln!(w, "property double x")?;
    writeln!(w, "property double y")?;
    writeln!(w, "property double z")?;
    writeln!(w, "end_header")?;
    for p in cloud.iter() {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}

pub fn write_ply_file(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ply(cloud, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_ply(r: impl Read) -> Result<PointCloud> {
    let mut lines = BufReader::new(r).lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| parse_err("unexpected end of file"))?
            .map_err(Error::Io)
    };

    if next()?.trim() != "ply" {
        return Err(parse_err("missing 'ply' magic"));
    }
    if next()?.trim() != "format ascii 1.0" {
        return Err(parse_err("unsupported format, expected 'format ascii 1.0'"));
    }

    let mut frame_id = String::new();
    let mut vertex_count: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    loop {
        let line = next()?;
        let line = line.trim();
        if line == "end_header" {
            break;
        }
        if let Some(rest) = line.strip_prefix("comment frame_id ") {
            frame_id = rest.to_string();
        } else if line.starts_with("comment") {
            continue;
        } else if let Some(rest) = line.strip_prefix("element vertex ") {
            let n = rest
                .trim()
                .parse::<usize>()
                .map_err(|e| parse_err(format!("bad vertex count: {e}")))?;
            vertex_count = Some(n);
        } else if line.starts_with("element ") {
            return Err(parse_err(format!("unsupported element: {line}")));
        } else if let Some(rest) = line.strip_prefix("property ") {
            properties.push(rest.trim().to_string());
        } else {
            return Err(parse_err(format!("unexpected header line: {line}")));
        }
    }

    let n = vertex_count.ok_or_else(|| parse_err("missing 'element vertex'"))?;
    if properties != ["double x", "double y", "double z"] {
        return Err(parse_err(format!(
            "expected properties 'double x', 'double y', 'double z', got {properties:?}"
        )));
    }

    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let line = next().map_err(|_| parse_err(format!("missing vertex row {i}")))?;
        let mut it = line.split_whitespace();
        let mut coord = |name: &str| -> Result<f64> {
            let tok = it
                .next()
                .ok_or_else(|| parse_err(format!("row {i}: missing {name}")))?;
            let v = tok
                .parse::<f64>()
                .map_err(|e| parse_err(format!("row {i}: bad {name}: {e}")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("row {i}: non-finite {name}")));
            }
            Ok(v)
        };
        let x = coord("x")?;
        let y = coord("y")?;
        let z = coord("z")?;
        points.push(Point3::new(x, y, z));
    }
    Ok(PointCloud::from_points(frame_id, points))
}

pub fn read_ply_file(path: impl AsRef<Path>) -> Result<PointCloud> {
    read_ply(File::open(path)?)
}
