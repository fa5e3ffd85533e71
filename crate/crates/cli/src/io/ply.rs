//! PLY point-cloud writer/reader: ASCII or binary little-endian vertices
//! with `x y z e_d e_i level` properties. Binary mode round-trips the f64
//! payload bit-exactly.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use geocloud_core::crpc::CloudPoint;
use geocloud_core::geometry::WorldPoint;

use super::IoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyMode {
    Ascii,
    BinaryLittleEndian,
}

pub fn save(path: &Path, cloud: &[CloudPoint<f64>], mode: PlyMode) -> Result<(), IoError> {
    if cloud.is_empty() {
        return Err(IoError::EmptyCloud);
    }
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let format = match mode {
        PlyMode::Ascii => "ascii",
        PlyMode::BinaryLittleEndian => "binary_little_endian",
    };
    write!(
        w,
        "ply\nformat {format} 1.0\ncomment geocloud point cloud\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         property double e_d\nproperty int e_i\nproperty int level\nend_header\n",
        cloud.len()
    )?;
    match mode {
        PlyMode::Ascii => {
            for p in cloud {
                writeln!(
                    w,
                    "{:e} {:e} {:e} {:e} {} {}",
                    p.pos.x, p.pos.y, p.pos.z, p.e_d, p.e_i, p.level
                )?;
            }
        }
        PlyMode::BinaryLittleEndian => {
            for p in cloud {
                for v in [p.pos.x, p.pos.y, p.pos.z, p.e_d] {
                    w.write_all(&v.to_le_bytes())?;
                }
                w.write_all(&(p.e_i as i32).to_le_bytes())?;
                w.write_all(&(p.level as i32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<CloudPoint<f64>>, IoError> {
    let file = std::fs::File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();

    let mut read_line = |reader: &mut BufReader<std::fs::File>| -> Result<String, IoError> {
        line.clear();
        reader.read_line(&mut line)?;
        Ok(line.trim_end().to_string())
    };

    if read_line(&mut reader)? != "ply" {
        return Err(IoError::ParseError("missing ply magic".into()));
    }
    let mut mode = None;
    let mut count = None;
    let mut properties: Vec<String> = Vec::new();
    loop {
        let l = read_line(&mut reader)?;
        if l == "end_header" {
            break;
        }
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some("format") => {
                mode = match parts.next() {
                    Some("ascii") => Some(PlyMode::Ascii),
                    Some("binary_little_endian") => Some(PlyMode::BinaryLittleEndian),
                    other => {
                        return Err(IoError::ParseError(format!("unsupported format {other:?}")))
                    }
                };
            }
            Some("element") => {
                if parts.next() == Some("vertex") {
                    count = parts
                        .next()
                        .and_then(|v| v.parse::<usize>().ok());
                }
            }
            Some("property") => {
                let _ty = parts.next();
                if let Some(name) = parts.next() {
                    properties.push(name.to_string());
                }
            }
            Some("comment") | None => {}
            Some(other) => {
                return Err(IoError::ParseError(format!("unexpected header token {other}")))
            }
        }
    }
    let mode = mode.ok_or_else(|| IoError::ParseError("missing format line".into()))?;
    let count = count.ok_or_else(|| IoError::ParseError("missing vertex element".into()))?;
    let expected = ["x", "y", "z", "e_d", "e_i", "level"];
    if properties != expected {
        return Err(IoError::ParseError(format!("unexpected property layout {properties:?}")));
    }

    let mut cloud = Vec::with_capacity(count);
    match mode {
        PlyMode::Ascii => {
            for _ in 0..count {
                let l = read_line(&mut reader)?;
                let fields: Vec<&str> = l.split_whitespace().collect();
                if fields.len() != 6 {
                    return Err(IoError::ParseError(format!("bad vertex record: {l}")));
                }
                let f = |i: usize| -> Result<f64, IoError> {
                    fields[i]
                        .parse::<f64>()
                        .map_err(|e| IoError::ParseError(format!("bad float {}: {e}", fields[i])))
                };
                cloud.push(CloudPoint {
                    pos: WorldPoint::new(f(0)?, f(1)?, f(2)?),
                    e_d: f(3)?,
                    e_i: fields[4]
                        .parse::<i32>()
                        .map_err(|e| IoError::ParseError(e.to_string()))? as usize,
                    anchor: (0, 0),
                    level: fields[5]
                        .parse::<i32>()
                        .map_err(|e| IoError::ParseError(e.to_string()))? as u32,
                });
            }
        }
        PlyMode::BinaryLittleEndian => {
            let mut buf = [0u8; 8];
            let mut buf4 = [0u8; 4];
            for _ in 0..count {
                let mut vals = [0.0f64; 4];
                for v in vals.iter_mut() {
                    reader.read_exact(&mut buf)?;
                    *v = f64::from_le_bytes(buf);
                }
                reader.read_exact(&mut buf4)?;
                let e_i = i32::from_le_bytes(buf4) as usize;
                reader.read_exact(&mut buf4)?;
                let level = i32::from_le_bytes(buf4) as u32;
                cloud.push(CloudPoint {
                    pos: WorldPoint::new(vals[0], vals[1], vals[2]),
                    e_d: vals[3],
                    e_i,
                    anchor: (0, 0),
                    level,
                });
            }
        }
    }
    if cloud.len() != count {
        return Err(IoError::DimensionMismatch(format!(
            "header declared {count} vertices, read {}",
            cloud.len()
        )));
    }
    Ok(cloud)
}
