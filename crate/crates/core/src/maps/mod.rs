//! Prior maps: 2.5D elevation grids and indexed 3D point clouds.

mod cloud;
mod elevation;
pub mod kdtree;

use std::io;

use thiserror::Error;

pub use cloud::{rasterize, voxel_downsample, PointCloudMap, DEFAULT_VOXEL_SIZE};
pub use elevation::ElevationMap;
pub use kdtree::{KdTree, Neighbor};

#[derive(Debug, Error)]
pub enum MapError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("point cloud map is empty")]
    Empty,
    #[error("invalid map: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl MapError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Self::Parse { line, message: message.into() }
    }
}

/// The map a filter localizes against.
#[derive(Clone, Debug)]
pub enum PriorMap {
    Elevation(ElevationMap),
    Cloud(PointCloudMap),
}

impl From<ElevationMap> for PriorMap {
    fn from(map: ElevationMap) -> Self {
        Self::Elevation(map)
    }
}

impl From<PointCloudMap> for PriorMap {
    fn from(map: PointCloudMap) -> Self {
        Self::Cloud(map)
    }
}
