use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::maps::ElevationMap;

/// One section of the course, laid out along +x.
///
/// Heights are relative to the running level left by the previous segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Segment {
    /// Level section raised by `height` above the running level.
    Flat { length: f64, height: f64 },
    /// Constant grade; negative degrees descend.
    Ramp { length: f64, grade_deg: f64 },
    /// `count` chevron-shaped ridges of `tooth_height`, one per `tooth_pitch`.
    Chevron { tooth_height: f64, tooth_pitch: f64, count: usize },
    /// Square blocks of `cell_size`, `columns` along x, filling the course width;
    /// `heights` are assigned column-major and cycle when shorter than the grid.
    BlockField { cell_size: f64, columns: usize, heights: Vec<f64> },
}

/// Lateral slope of the chevron arms (x shift per meter off the centerline).
const CHEVRON_ARM_SLOPE: f64 = 0.5;

impl Segment {
    pub fn length(&self) -> f64 {
        match self {
            Segment::Flat { length, .. } | Segment::Ramp { length, .. } => *length,
            Segment::Chevron { tooth_pitch, count, .. } => tooth_pitch * *count as f64,
            Segment::BlockField { cell_size, columns, .. } => cell_size * *columns as f64,
        }
    }

    fn validate(&self, index: usize) -> Result<(), SimError> {
        let bad = |why: &str| Err(SimError::Terrain(format!("segment {index}: {why}")));
        if !(self.length() > 0.0 && self.length().is_finite()) {
            return bad("length must be positive (segments would overlap)");
        }
        match self {
            Segment::Ramp { grade_deg, .. } if grade_deg.abs() >= 90.0 => bad("grade must be within (-90, 90) degrees"),
            Segment::BlockField { heights, .. } if heights.is_empty() => bad("block field needs at least one height"),
            Segment::Chevron { tooth_height, .. } if !tooth_height.is_finite() => bad("tooth height must be finite"),
            _ => Ok(()),
        }
    }

    /// Height at local coordinates `(u, v)`: `u` along the segment from its
    /// start, `v` signed lateral offset from the course centerline.
    fn height(&self, u: f64, v: f64, level: f64, width: f64) -> f64 {
        match self {
            Segment::Flat { height, .. } => level + height,
            Segment::Ramp { grade_deg, .. } => level + grade_deg.to_radians().tan() * u,
            Segment::Chevron { tooth_height, tooth_pitch, .. } => {
                let phase = ((u + CHEVRON_ARM_SLOPE * v.abs()) / tooth_pitch).rem_euclid(1.0);
                if phase < 0.5 {
                    level + tooth_height
                } else {
                    level
                }
            }
            Segment::BlockField { cell_size, heights, .. } => {
                let rows = (width / cell_size).ceil().max(1.0) as usize;
                let col = (u / cell_size).floor().max(0.0) as usize;
                let row = (((v + width / 2.0) / cell_size).floor().max(0.0) as usize).min(rows - 1);
                level + heights[(col * rows + row) % heights.len()]
            }
        }
    }

    /// Running level after this segment.
    fn exit_level(&self, level: f64) -> f64 {
        match self {
            Segment::Flat { height, .. } => level + height,
            Segment::Ramp { length, grade_deg } => level + grade_deg.to_radians().tan() * length,
            _ => level,
        }
    }
}

/// A terrain course embedded in flat ground of height zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainSpec {
    /// x coordinate where the first segment begins.
    pub start_x: f64,
    /// y coordinate of the course centerline.
    pub center_y: f64,
    pub width: f64,
    pub segments: Vec<Segment>,
    /// Map extent `[x_min, y_min, x_max, y_max]`, including the flat surround.
    pub bounds: [f64; 4],
}

impl TerrainSpec {
    pub fn length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    /// Whether `(x, y)` lies on the course footprint.
    pub fn on_course(&self, x: f64, y: f64) -> bool {
        let u = x - self.start_x;
        u >= 0.0 && u < self.length() && (y - self.center_y).abs() <= self.width / 2.0
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.segments.is_empty() {
            return Err(SimError::Terrain("course needs at least one segment".into()));
        }
        if !(self.width > 0.0) {
            return Err(SimError::Terrain("course width must be positive".into()));
        }
        for (i, s) in self.segments.iter().enumerate() {
            s.validate(i)?;
        }
        let [x0, y0, x1, y1] = self.bounds;
        let fits = x0 <= self.start_x
            && self.start_x + self.length() <= x1
            && y0 <= self.center_y - self.width / 2.0
            && self.center_y + self.width / 2.0 <= y1;
        if !fits {
            return Err(SimError::Terrain("course does not fit inside the map bounds".into()));
        }
        Ok(())
    }

    /// Height of the terrain surface at `(x, y)`.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let v = y - self.center_y;
        if v.abs() > self.width / 2.0 {
            return 0.0;
        }
        let mut start = self.start_x;
        let mut level = 0.0;
        for segment in &self.segments {
            let end = start + segment.length();
            if x >= start && x < end {
                return segment.height(x - start, v, level, self.width);
            }
            level = segment.exit_level(level);
            start = end;
        }
        0.0
    }
}

/// Rasterize the course at `resolution`, sampling each cell at its center.
pub fn build_terrain(spec: &TerrainSpec, resolution: f64) -> Result<ElevationMap, SimError> {
    spec.validate()?;
    if !(resolution > 0.0) {
        return Err(SimError::Terrain("resolution must be positive".into()));
    }
    let [x0, y0, x1, y1] = spec.bounds;
    let cols = ((x1 - x0) / resolution).round() as usize;
    let rows = ((y1 - y0) / resolution).round() as usize;
    Ok(ElevationMap::from_fn(Vector2::new(x0, y0), resolution, rows, cols, |x, y| spec.height_at(x, y))?)
}

/// Uneven block heights for the default course, column-major over a 4x4 grid.
pub const DEFAULT_BLOCK_HEIGHTS: [f64; 16] = [
    0.05, 0.15, 0.00, 0.10, //
    0.10, 0.00, 0.15, 0.05, //
    0.15, 0.05, 0.10, 0.00, //
    0.00, 0.10, 0.05, 0.15,
];

impl Default for TerrainSpec {
    /// 4.2 m course: 12 degree ramp up, 13 cm chevrons, uneven blocks, 12 degree ramp down.
    fn default() -> Self {
        Self {
            start_x: 0.0,
            center_y: 0.0,
            width: 1.2,
            segments: vec![
                Segment::Ramp { length: 0.9, grade_deg: 12.0 },
                Segment::Chevron { tooth_height: 0.13, tooth_pitch: 0.3, count: 4 },
                Segment::BlockField { cell_size: 0.3, columns: 4, heights: DEFAULT_BLOCK_HEIGHTS.to_vec() },
                Segment::Ramp { length: 0.9, grade_deg: -12.0 },
            ],
            bounds: [-1.6, -2.8, 5.8, 1.0],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single(segment: Segment) -> TerrainSpec {
        TerrainSpec { start_x: 0.0, center_y: 0.0, width: 1.0, segments: vec![segment], bounds: [-0.5, -1.0, 4.7, 1.0] }
    }

    #[test]
    fn flat_course_is_zero() {
        let map = build_terrain(&single(Segment::Flat { length: 4.2, height: 0.0 }), 0.05).unwrap();
        assert!(map.heights().iter().all(|h| *h == 0.0));
    }

    #[test]
    fn ramp_end_height() {
        let spec = single(Segment::Ramp { length: 1.0, grade_deg: 12.0 });
        assert_relative_eq!(spec.height_at(1.0 - 1e-12, 0.0), 12f64.to_radians().tan(), epsilon = 1e-9);
        assert_relative_eq!(12f64.to_radians().tan(), 0.2126, epsilon = 1e-4);
        let map = build_terrain(&spec, 0.01).unwrap();
        assert_relative_eq!(map.elevation_at(0.995, 0.0).unwrap(), 0.995 * 12f64.to_radians().tan(), epsilon = 1e-12);
    }

    #[test]
    fn chevron_peak_is_tooth_height() {
        let map = build_terrain(&single(Segment::Chevron { tooth_height: 0.13, tooth_pitch: 0.3, count: 5 }), 0.02).unwrap();
        assert_eq!(map.max_height(), Some(0.13));
    }

    #[test]
    fn default_course_dimensions() {
        let spec = TerrainSpec::default();
        assert_relative_eq!(spec.length(), 4.2, epsilon = 1e-12);
        let top = 0.9 * 12f64.to_radians().tan();
        assert_relative_eq!(spec.height_at(0.9 + 0.2, 0.0), top, epsilon = 1e-12);
        assert_relative_eq!(spec.height_at(0.9 + 0.05, 0.0), top + 0.13, epsilon = 1e-12);
        assert!(spec.height_at(4.199, 0.0).abs() < 0.01);
        assert_eq!(spec.height_at(2.0, 0.8), 0.0);
        assert!(build_terrain(&spec, 0.02).is_ok());
    }

    #[test]
    fn rejects_degenerate_segments() {
        assert!(build_terrain(&single(Segment::Flat { length: 0.0, height: 0.0 }), 0.05).is_err());
        assert!(build_terrain(&single(Segment::Flat { length: -1.0, height: 0.0 }), 0.05).is_err());
        let mut spec = single(Segment::Flat { length: 10.0, height: 0.0 });
        assert!(build_terrain(&spec, 0.05).is_err());
        spec.segments = vec![];
        assert!(build_terrain(&spec, 0.05).is_err());
    }
}
