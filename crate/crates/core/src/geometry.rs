//! Pixel/robot coordinate types and bounding-box helpers.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error(
        "degenerate bounding box ({x1},{y1})-({x2},{y2}): corners must satisfy x2 > x1 and y2 > y1"
    )]
    DegenerateBox { x1: i64, y1: i64, x2: i64, y2: i64 },
    #[error("workspace dimension {0} must be strictly positive")]
    NonPositiveDimension(&'static str),
}

/// Axis-aligned box in the image frame (origin top-left, y down).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    x1: i64,
    y1: i64,
    x2: i64,
    y2: i64,
}

impl BoundingBox {
    pub fn new(x1: i64, y1: i64, x2: i64, y2: i64) -> Result<Self, GeometryError> {
        if x2 <= x1 || y2 <= y1 {
            return Err(GeometryError::DegenerateBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn corners(&self) -> (i64, i64, i64, i64) {
        (self.x1, self.y1, self.x2, self.y2)
    }

    pub fn width(&self) -> i64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> i64 {
        self.y2 - self.y1
    }

    pub fn translated(&self, dx: i64, dy: i64) -> Self {
        Self {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    /// Center of the box, `(x1 + w/2, y1 + h/2)`, with `iz = 1`.
    pub fn center(&self) -> ImagePoint {
        ImagePoint::new(
            self.x1 as f64 + self.width() as f64 / 2.0,
            self.y1 as f64 + self.height() as f64 / 2.0,
        )
    }
}

/// Free-function form of [`BoundingBox::center`] that validates raw corners.
pub fn bbox_center(x1: i64, y1: i64, x2: i64, y2: i64) -> Result<ImagePoint, GeometryError> {
    Ok(BoundingBox::new(x1, y1, x2, y2)?.center())
}

/// A point in image space. `iz` is the third row of the image matrix; it
/// defaults to the homogeneous constant 1 but may carry a depth reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePoint {
    pub ix: f64,
    pub iy: f64,
    pub iz: f64,
}

impl ImagePoint {
    pub fn new(ix: f64, iy: f64) -> Self {
        Self { ix, iy, iz: 1.0 }
    }

    pub fn with_depth(ix: f64, iy: f64, iz: f64) -> Self {
        Self { ix, iy, iz }
    }
}

/// End-effector position in the robot base frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EEPosition {
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
}

impl EEPosition {
    pub fn new(rx: f64, ry: f64, rz: f64) -> Self {
        Self { rx, ry, rz }
    }

    pub fn is_finite(&self) -> bool {
        self.rx.is_finite() && self.ry.is_finite() && self.rz.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkspaceConfig {
    pub table_width_cm: f64,
    pub table_height_cm: f64,
    pub image_width_px: u32,
    pub image_height_px: u32,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        Self {
            table_width_cm: 63.0,
            table_height_cm: 86.0,
            image_width_px: 1920,
            image_height_px: 1080,
        }
    }
}

impl WorkspaceConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.table_width_cm > 0.0) {
            return Err(GeometryError::NonPositiveDimension("table_width_cm"));
        }
        if !(self.table_height_cm > 0.0) {
            return Err(GeometryError::NonPositiveDimension("table_height_cm"));
        }
        if self.image_width_px == 0 {
            return Err(GeometryError::NonPositiveDimension("image_width_px"));
        }
        if self.image_height_px == 0 {
            return Err(GeometryError::NonPositiveDimension("image_height_px"));
        }
        Ok(())
    }

    pub fn contains(&self, p: &ImagePoint) -> bool {
        p.ix >= 0.0
            && p.iy >= 0.0
            && p.ix < self.image_width_px as f64
            && p.iy < self.image_height_px as f64
    }

    /// Rescales pixel coordinates to fractions of the image frame, `[0, 1)`.
    /// Position datasets are expressed in these units.
    pub fn normalize(&self, p: &ImagePoint) -> ImagePoint {
        ImagePoint::with_depth(
            p.ix / self.image_width_px as f64,
            p.iy / self.image_height_px as f64,
            p.iz,
        )
    }

    pub fn denormalize(&self, p: &ImagePoint) -> ImagePoint {
        ImagePoint::with_depth(
            p.ix * self.image_width_px as f64,
            p.iy * self.image_height_px as f64,
            p.iz,
        )
    }
}

/// Distance between two undirected axes, in degrees: `min_k |a - b + 180k|`.
/// Always in `[0, 90]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = libm::fmod(libm::fabs(a - b), 180.0);
    if d > 90.0 {
        180.0 - d
    } else {
        d
    }
}

/// Wraps an angle into `[0, 180)`.
pub fn wrap_180(a: f64) -> f64 {
    let r = libm::fmod(a, 180.0);
    let r = if r < 0.0 { r + 180.0 } else { r };
    if r >= 180.0 {
        0.0
    } else {
        r
    }
}
