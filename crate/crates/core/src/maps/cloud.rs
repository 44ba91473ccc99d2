use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::{Vector2, Vector3};

use super::kdtree::{KdTree, Neighbor};
use super::{ElevationMap, MapError};

/// Default minimum spacing for [`voxel_downsample`], in meters.
pub const DEFAULT_VOXEL_SIZE: f64 = 0.01;

/// 3D point-cloud map with a k-d tree index.
#[derive(Clone, Debug)]
pub struct PointCloudMap {
    points: Vec<Vector3<f64>>,
    index: KdTree,
}

impl PointCloudMap {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self, MapError> {
        if points.is_empty() {
            return Err(MapError::Empty);
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(MapError::Invalid(format!("point {i} is not finite")));
        }
        let index = KdTree::build(&points);
        Ok(Self { points, index })
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Exact nearest map point.
    pub fn nearest(&self, query: &Vector3<f64>) -> Neighbor {
        self.index.nearest(query).expect("point cloud maps are never empty")
    }

    pub fn load<R: Read>(source: R) -> Result<Self, MapError> {
        let mut points = Vec::new();
        let mut last_line = 0;
        for (idx, line) in BufReader::new(source).lines().enumerate() {
            let line_no = idx + 1;
            last_line = line_no;
            let line = line?;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let values: Vec<f64> = content
                .split_whitespace()
                .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<_>>()
                .ok_or_else(|| MapError::parse(line_no, format!("malformed row `{content}`")))?;
            let [x, y, z] = values[..] else {
                return Err(MapError::parse(line_no, format!("expected `x y z`, got {} values", values.len())));
            };
            points.push(Vector3::new(x, y, z));
        }
        if points.is_empty() {
            return Err(MapError::parse(last_line, "point cloud contains no points"));
        }
        Self::new(points)
    }

    pub fn save<W: Write>(&self, mut sink: W) -> Result<(), MapError> {
        let mut out = String::with_capacity(self.points.len() * 24);
        for p in &self.points {
            out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
        }
        sink.write_all(out.as_bytes())?;
        Ok(())
    }
}

/// Keep the first point falling in each cubic voxel of edge `voxel`, in input order.
pub fn voxel_downsample(points: &[Vector3<f64>], voxel: f64) -> Vec<Vector3<f64>> {
    assert!(voxel > 0.0, "voxel size must be positive");
    let mut seen = HashSet::with_capacity(points.len());
    points
        .iter()
        .filter(|p| {
            let key = ((p.x / voxel).floor() as i64, (p.y / voxel).floor() as i64, (p.z / voxel).floor() as i64);
            seen.insert(key)
        })
        .copied()
        .collect()
}

/// Per-cell maximum height of the cloud; cells without points carry no data.
pub fn rasterize(cloud: &PointCloudMap, resolution: f64) -> Result<ElevationMap, MapError> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(MapError::Invalid(format!("resolution must be > 0, got {resolution}")));
    }
    let pts = cloud.points();
    let (mut lo, mut hi) = (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY));
    for p in pts {
        lo = lo.inf(&p.xy());
        hi = hi.sup(&p.xy());
    }
    let origin = (lo / resolution).map(f64::floor) * resolution;
    let cols = ((hi.x - origin.x) / resolution).floor() as usize + 1;
    let rows = ((hi.y - origin.y) / resolution).floor() as usize + 1;
    let mut heights = vec![f64::NAN; rows * cols];
    for p in pts {
        let c = (((p.x - origin.x) / resolution).floor().max(0.0) as usize).min(cols - 1);
        let r = (((p.y - origin.y) / resolution).floor().max(0.0) as usize).min(rows - 1);
        let h = &mut heights[r * cols + c];
        if h.is_nan() || p.z > *h {
            *h = p.z;
        }
    }
    ElevationMap::new(origin, resolution, rows, cols, heights)
}
