//! Solution group JSON: world points, gauged cameras, solve metadata.

use std::path::Path;

use geocloud_core::geometry::{ProjectionMatrix, SolutionGroup, WorldPoint};
use serde::{Deserialize, Serialize};

use super::IoError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupFile {
    #[serde(default)]
    pub objective: Option<f64>,
    #[serde(default)]
    pub anchors: Option<[usize; 5]>,
    pub points: Vec<[f64; 3]>,
    pub cameras: Vec<[[f64; 4]; 3]>,
}

impl GroupFile {
    pub fn from_group(group: &SolutionGroup<f64>, objective: Option<f64>, anchors: Option<[usize; 5]>) -> Self {
        GroupFile {
            objective,
            anchors,
            points: group.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            cameras: group.cameras.iter().map(|c| *c.rows()).collect(),
        }
    }

    pub fn to_group(&self) -> Result<SolutionGroup<f64>, IoError> {
        let points = self.points.iter().map(|p| WorldPoint::new(p[0], p[1], p[2])).collect();
        let cameras = self
            .cameras
            .iter()
            .map(|rows| {
                ProjectionMatrix::new(*rows)
                    .map_err(|e| IoError::ParseError(format!("bad camera: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SolutionGroup { points, cameras })
    }
}

pub fn save(path: &Path, file: &GroupFile) -> Result<(), IoError> {
    std::fs::write(path, serde_json::to_string_pretty(file)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<GroupFile, IoError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
