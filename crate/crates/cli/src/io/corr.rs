//! Correspondence file: JSON header (counts, image dimensions, file names)
//! plus one record per visible cell. The visibility mask of the loaded set
//! reflects exactly the records present.

use std::path::Path;

use geocloud_core::geometry::{CorrespondenceSet, ImagePoint};
use serde::{Deserialize, Serialize};

use super::IoError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrFile {
    pub points: usize,
    pub images: usize,
    pub height: usize,
    pub width: usize,
    #[serde(default)]
    pub image_files: Vec<String>,
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Observation {
    pub m: usize,
    pub n: usize,
    pub u: f64,
    pub v: f64,
}

pub fn save(path: &Path, file: &CorrFile) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(file)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(CorrFile, CorrespondenceSet<f64>), IoError> {
    let text = std::fs::read_to_string(path)?;
    let file: CorrFile = serde_json::from_str(&text)?;
    let set = to_set(&file)?;
    Ok((file, set))
}

pub fn to_set(file: &CorrFile) -> Result<CorrespondenceSet<f64>, IoError> {
    if !file.image_files.is_empty() && file.image_files.len() != file.images {
        return Err(IoError::DimensionMismatch(format!(
            "{} image files declared for {} images",
            file.image_files.len(),
            file.images
        )));
    }
    let mut set = CorrespondenceSet::new(file.points, file.images);
    for (idx, obs) in file.observations.iter().enumerate() {
        if obs.m >= file.points || obs.n >= file.images {
            return Err(IoError::DimensionMismatch(format!(
                "observation {idx} references point {} / image {} outside the declared {}x{}",
                obs.m, obs.n, file.points, file.images
            )));
        }
        if !(0.0..=file.height as f64).contains(&obs.u) || !(0.0..=file.width as f64).contains(&obs.v)
        {
            return Err(IoError::ParseError(format!(
                "observation {idx}: ({}, {}) outside [0,{}]x[0,{}]",
                obs.u, obs.v, file.height, file.width
            )));
        }
        if set.get(obs.m, obs.n).is_some() {
            return Err(IoError::ParseError(format!(
                "observation {idx}: duplicate cell ({}, {})",
                obs.m, obs.n
            )));
        }
        set.set(obs.m, obs.n, Some(ImagePoint::new(obs.u, obs.v)));
    }
    Ok(set)
}

pub fn from_set(
    set: &CorrespondenceSet<f64>,
    height: usize,
    width: usize,
    image_files: Vec<String>,
) -> CorrFile {
    let mut observations = Vec::new();
    for (m, n, p) in set.visible_cells() {
        observations.push(Observation { m, n, u: p.u, v: p.v });
    }
    CorrFile {
        points: set.num_points(),
        images: set.num_images(),
        height,
        width,
        image_files,
        observations,
    }
}
