use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::Vector2;

use super::MapError;

/// 2.5D elevation grid.
///
/// Cell `(row, col)` covers `x in [ox + col*res, ox + (col+1)*res)` and
/// `y in [oy + row*res, oy + (row+1)*res)`. Heights are stored row-major; a NaN
/// height marks a cell without data.
#[derive(Clone, Debug, PartialEq)]
pub struct ElevationMap {
    origin: Vector2<f64>,
    resolution: f64,
    rows: usize,
    cols: usize,
    heights: Vec<f64>,
}

impl ElevationMap {
    pub fn new(
        origin: Vector2<f64>,
        resolution: f64,
        rows: usize,
        cols: usize,
        heights: Vec<f64>,
    ) -> Result<Self, MapError> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(MapError::Invalid(format!("resolution must be > 0, got {resolution}")));
        }
        if rows == 0 || cols == 0 {
            return Err(MapError::Invalid("grid must have at least one row and column".into()));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(MapError::Invalid("origin must be finite".into()));
        }
        if heights.len() != rows * cols {
            return Err(MapError::Invalid(format!(
                "expected {} heights for a {rows}x{cols} grid, got {}",
                rows * cols,
                heights.len()
            )));
        }
        if heights.iter().any(|h| h.is_infinite()) {
            return Err(MapError::Invalid("heights must be finite or NaN".into()));
        }
        Ok(Self { origin, resolution, rows, cols, heights })
    }

    /// Sample `height(x, y)` at every cell center.
    pub fn from_fn(
        origin: Vector2<f64>,
        resolution: f64,
        rows: usize,
        cols: usize,
        mut height: impl FnMut(f64, f64) -> f64,
    ) -> Result<Self, MapError> {
        let mut heights = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let x = origin.x + (c as f64 + 0.5) * resolution;
                let y = origin.y + (r as f64 + 0.5) * resolution;
                heights.push(height(x, y));
            }
        }
        Self::new(origin, resolution, rows, cols, heights)
    }

    pub fn flat(origin: Vector2<f64>, resolution: f64, rows: usize, cols: usize, height: f64) -> Result<Self, MapError> {
        Self::new(origin, resolution, rows, cols, vec![height; rows * cols])
    }

    pub fn origin(&self) -> Vector2<f64> {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// `(min, max)` corners of the covered area.
    pub fn extent(&self) -> (Vector2<f64>, Vector2<f64>) {
        let size = Vector2::new(self.cols as f64, self.rows as f64) * self.resolution;
        (self.origin, self.origin + size)
    }

    pub fn cell_index(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let c = ((x - self.origin.x) / self.resolution).floor();
        let r = ((y - self.origin.y) / self.resolution).floor();
        if !(c >= 0.0 && r >= 0.0) || c >= self.cols as f64 || r >= self.rows as f64 {
            return None;
        }
        Some((r as usize, c as usize))
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Vector2<f64> {
        self.origin + Vector2::new(col as f64 + 0.5, row as f64 + 0.5) * self.resolution
    }

    pub fn height(&self, row: usize, col: usize) -> Option<f64> {
        let h = *self.heights.get(row * self.cols + col)?;
        (!h.is_nan()).then_some(h)
    }

    pub fn set_height(&mut self, row: usize, col: usize, height: f64) {
        self.heights[row * self.cols + col] = height;
    }

    /// Nearest-cell elevation; `None` off the grid or on a cell without data.
    pub fn elevation_at(&self, x: f64, y: f64) -> Option<f64> {
        let (r, c) = self.cell_index(x, y)?;
        self.height(r, c)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.cell_index(x, y).is_some()
    }

    pub fn max_height(&self) -> Option<f64> {
        self.heights.iter().copied().filter(|h| !h.is_nan()).reduce(f64::max)
    }

    pub fn load<R: Read>(source: R) -> Result<Self, MapError> {
        let reader = BufReader::new(source);
        let mut resolution = None;
        let mut origin = None;
        let mut size: Option<(usize, usize)> = None;
        let mut heights = Vec::new();
        let mut last_line = 0;

        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            last_line = line_no;
            let line = line?;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut tokens = content.split_whitespace();
            let head = tokens.next().unwrap_or_default();
            let header_done = resolution.is_some() && origin.is_some() && size.is_some();
            if !header_done {
                let rest: Vec<&str> = tokens.collect();
                match head {
                    "resolution" => {
                        let [v] = rest[..] else {
                            return Err(MapError::parse(line_no, "expected `resolution <m>`"));
                        };
                        resolution = Some(parse_finite(v, line_no)?);
                    }
                    "origin" => {
                        let [x, y] = rest[..] else {
                            return Err(MapError::parse(line_no, "expected `origin <x> <y>`"));
                        };
                        origin = Some(Vector2::new(parse_finite(x, line_no)?, parse_finite(y, line_no)?));
                    }
                    "size" => {
                        let [r, c] = rest[..] else {
                            return Err(MapError::parse(line_no, "expected `size <rows> <cols>`"));
                        };
                        let parse_dim = |t: &str| {
                            t.parse::<usize>()
                                .map_err(|_| MapError::parse(line_no, format!("invalid grid dimension `{t}`")))
                        };
                        size = Some((parse_dim(r)?, parse_dim(c)?));
                    }
                    other => {
                        return Err(MapError::parse(line_no, format!("unexpected header key `{other}`")));
                    }
                }
                continue;
            }
            for token in std::iter::once(head).chain(tokens) {
                heights.push(parse_height(token, line_no)?);
            }
        }

        let (Some(resolution), Some(origin), Some((rows, cols))) = (resolution, origin, size) else {
            return Err(MapError::parse(last_line, "missing `resolution`, `origin` or `size` header"));
        };
        if heights.len() != rows * cols {
            return Err(MapError::parse(
                last_line,
                format!("size mismatch: header declares {} heights, found {}", rows * cols, heights.len()),
            ));
        }
        Self::new(origin, resolution, rows, cols, heights)
    }

    pub fn save<W: Write>(&self, mut sink: W) -> Result<(), MapError> {
        let mut out = String::new();
        writeln!(out, "resolution {}", self.resolution).unwrap();
        writeln!(out, "origin {} {}", self.origin.x, self.origin.y).unwrap();
        writeln!(out, "size {} {}", self.rows, self.cols).unwrap();
        for row in self.heights.chunks(self.cols) {
            let mut first = true;
            for h in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                if h.is_nan() {
                    out.push_str("nan");
                } else {
                    write!(out, "{h}").unwrap();
                }
            }
            out.push('\n');
        }
        sink.write_all(out.as_bytes())?;
        Ok(())
    }
}

fn parse_finite(token: &str, line: usize) -> Result<f64, MapError> {
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(MapError::parse(line, format!("expected a finite number, got `{token}`"))),
    }
}

fn parse_height(token: &str, line: usize) -> Result<f64, MapError> {
    if token == "nan" {
        Ok(f64::NAN)
    } else {
        parse_finite(token, line)
    }
}
