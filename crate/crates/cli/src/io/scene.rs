//! Scene-spec and seed-distance files.

use std::path::Path;

use geocloud_core::geometry::WorldPoint;
use geocloud_core::mds::DistanceMeasurements;
use serde::{Deserialize, Serialize};

use super::IoError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    /// "box" for free-floating points, "cylinder" for the textured patch.
    pub kind: String,
    pub seed: u64,
    pub points: usize,
    pub images: usize,
    pub sigma: f64,
    pub height: usize,
    pub width: usize,
}

pub fn save_scene(path: &Path, spec: &SceneSpec) -> Result<(), IoError> {
    std::fs::write(path, serde_json::to_string_pretty(spec)?)?;
    Ok(())
}

pub fn load_scene(path: &Path) -> Result<SceneSpec, IoError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedsFile {
    pub ids: Vec<usize>,
    pub distances: Vec<SeedDistance>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedDistance {
    pub i: usize,
    pub j: usize,
    pub d: f64,
}

impl SeedsFile {
    pub fn from_points(ids: &[usize], points: &[WorldPoint<f64>]) -> Self {
        let mut distances = Vec::new();
        for (a, &i) in ids.iter().enumerate() {
            for &j in ids.iter().skip(a + 1) {
                distances.push(SeedDistance { i, j, d: points[i].dist(&points[j]) });
            }
        }
        SeedsFile { ids: ids.to_vec(), distances }
    }

    pub fn to_measurements(&self) -> Result<DistanceMeasurements<f64>, IoError> {
        let pairs: Vec<(usize, usize, f64)> =
            self.distances.iter().map(|d| (d.i, d.j, d.d)).collect();
        DistanceMeasurements::from_pairs(self.ids.clone(), &pairs)
            .map_err(|e| IoError::ParseError(e.to_string()))
    }
}

pub fn save_seeds(path: &Path, seeds: &SeedsFile) -> Result<(), IoError> {
    std::fs::write(path, serde_json::to_string_pretty(seeds)?)?;
    Ok(())
}

pub fn load_seeds(path: &Path) -> Result<SeedsFile, IoError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
