//! Axis-aligned box arithmetic: areas, intersections, IoU and GIoU.
//!
//! Boxes are stored in corner form (`x_min, y_min, x_max, y_max`), which
//! keeps intersection and enclosing-box computation branch-free; the COCO
//! `[x, y, width, height]` convention is converted at the I/O boundary.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box coordinates must be finite, got ({x_min}, {y_min}, {x_max}, {y_max})")]
    NonFinite {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("box corners out of order: ({x_min}, {y_min}, {x_max}, {y_max})")]
    Unordered {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("box width and height must be non-negative, got {width} x {height}")]
    NegativeExtent { width: f64, height: f64 },
    #[error("GIoU is undefined when both boxes have zero area")]
    DegeneratePair,
}

/// An axis-aligned rectangle in pixel coordinates.
///
/// Invariants (enforced on construction): `x_min <= x_max`,
/// `y_min <= y_max`, all coordinates finite. Zero-width or zero-height
/// boxes are permitted; they occur in real detector output and contribute
/// zero area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        if !(x_min.is_finite() && y_min.is_finite() && x_max.is_finite() && y_max.is_finite()) {
            return Err(GeometryError::NonFinite {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        if x_min > x_max || y_min > y_max {
            return Err(GeometryError::Unordered {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Builds a box from the COCO `[x, y, width, height]` convention.
    pub fn from_xywh(x: f64, y: f64, width: f64, height: f64) -> Result<Self, GeometryError> {
        if width < 0.0 || height < 0.0 {
            return Err(GeometryError::NegativeExtent { width, height });
        }
        Self::new(x, y, x + width, y + height)
    }

    /// Constructor for coordinates already known to satisfy the invariants
    /// (componentwise min/max of valid boxes, positive scaling, clamping).
    pub(crate) fn new_unchecked(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        debug_assert!(x_min <= x_max && y_min <= y_max);
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// The box as `[x, y, width, height]`.
    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.width(), self.height()]
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// True when the box has zero area.
    pub fn is_degenerate(&self) -> bool {
        self.area() == 0.0
    }

    /// The overlapping rectangle, or `None` when the boxes are disjoint or
    /// touch only along an edge or at a point (zero-area overlap).
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x_min = self.x_min.max(other.x_min);
        let y_min = self.y_min.max(other.y_min);
        let x_max = self.x_max.min(other.x_max);
        let y_max = self.y_max.min(other.y_max);
        if x_min < x_max && y_min < y_max {
            Some(BBox::new_unchecked(x_min, y_min, x_max, y_max))
        } else {
            None
        }
    }

    /// Intersection over union, in `[0, 1]`. Defined as 0 when the union has
    /// zero area (both boxes degenerate).
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection(other).map_or(0.0, |b| b.area());
        let union = self.area() + other.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    /// Generalized IoU: `IoU - (|C| - |A ∪ B|) / |C|`, where `C` is the
    /// smallest enclosing box. Range `(-1, 1]`.
    ///
    /// Errors with [`GeometryError::DegeneratePair`] when both boxes have
    /// zero area (the enclosing box may then be degenerate too).
    pub fn giou(&self, other: &BBox) -> Result<f64, GeometryError> {
        if self.is_degenerate() && other.is_degenerate() {
            return Err(GeometryError::DegeneratePair);
        }
        let inter = self.intersection(other).map_or(0.0, |b| b.area());
        let union = self.area() + other.area() - inter;
        let enclosing = self.enclosing(other).area();
        Ok(inter / union - (enclosing - union) / enclosing)
    }

    /// The smallest axis-aligned box containing both inputs.
    pub fn enclosing(&self, other: &BBox) -> BBox {
        BBox::new_unchecked(
            self.x_min.min(other.x_min),
            self.y_min.min(other.y_min),
            self.x_max.max(other.x_max),
            self.y_max.max(other.y_max),
        )
    }

    /// True when `(x, y)` lies inside the box (closed on the min edges,
    /// open on the max edges, so adjacent boxes do not double-count).
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn area_cases() {
        assert_eq!(bb(0.0, 0.0, 10.0, 10.0).area(), 100.0);
        assert_eq!(bb(5.0, 5.0, 5.0, 9.0).area(), 0.0);
        assert_eq!(bb(0.0, 0.0, 3.0, 3.0).area(), 9.0);
    }

    #[test]
    fn intersection_cases() {
        let got = bb(0.0, 0.0, 2.0, 2.0).intersection(&bb(1.0, 1.0, 3.0, 3.0));
        assert_eq!(got, Some(bb(1.0, 1.0, 2.0, 2.0)));
        assert_eq!(bb(0.0, 0.0, 1.0, 1.0).intersection(&bb(2.0, 0.0, 3.0, 1.0)), None);
        let b = bb(0.0, 0.0, 2.0, 2.0);
        assert_eq!(b.intersection(&b), Some(b));
    }

    #[test]
    fn edge_touching_boxes_do_not_intersect() {
        assert_eq!(bb(0.0, 0.0, 1.0, 1.0).intersection(&bb(1.0, 0.0, 2.0, 1.0)), None);
        assert_eq!(bb(0.0, 0.0, 1.0, 1.0).iou(&bb(1.0, 0.0, 2.0, 1.0)), 0.0);
        // corner touch
        assert_eq!(bb(0.0, 0.0, 1.0, 1.0).intersection(&bb(1.0, 1.0, 2.0, 2.0)), None);
    }

    #[test]
    fn iou_cases() {
        let got = bb(0.0, 0.0, 2.0, 2.0).iou(&bb(1.0, 1.0, 3.0, 3.0));
        assert!((got - 1.0 / 7.0).abs() < 1e-12);
        let b = bb(3.0, 4.0, 8.0, 9.0);
        assert_eq!(b.iou(&b), 1.0);
        assert_eq!(bb(0.0, 0.0, 1.0, 1.0).iou(&bb(2.0, 0.0, 3.0, 1.0)), 0.0);
        // both degenerate: union has zero area, IoU defined as 0
        let p = bb(1.0, 1.0, 1.0, 1.0);
        assert_eq!(p.iou(&p), 0.0);
    }

    #[test]
    fn giou_cases() {
        let got = bb(0.0, 0.0, 2.0, 2.0).giou(&bb(1.0, 1.0, 3.0, 3.0)).unwrap();
        assert!((got - (-5.0 / 63.0)).abs() < 1e-12);
        let b = bb(3.0, 4.0, 8.0, 9.0);
        assert_eq!(b.giou(&b).unwrap(), 1.0);
        let got = bb(0.0, 0.0, 1.0, 1.0).giou(&bb(2.0, 0.0, 3.0, 1.0)).unwrap();
        assert!((got - (-1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn giou_two_degenerate_boxes_is_an_error() {
        let p = bb(1.0, 1.0, 1.0, 5.0);
        let q = bb(4.0, 2.0, 9.0, 2.0);
        assert_eq!(p.giou(&q), Err(GeometryError::DegeneratePair));
        // one degenerate side is fine
        assert!(p.giou(&bb(0.0, 0.0, 2.0, 2.0)).is_ok());
    }

    #[test]
    fn enclosing_cases() {
        assert_eq!(
            bb(0.0, 0.0, 2.0, 2.0).enclosing(&bb(1.0, 1.0, 3.0, 3.0)),
            bb(0.0, 0.0, 3.0, 3.0)
        );
        let b = bb(2.0, 3.0, 5.0, 7.0);
        assert_eq!(b.enclosing(&b), b);
        assert_eq!(
            bb(0.0, 0.0, 1.0, 1.0).enclosing(&bb(2.0, 0.0, 3.0, 1.0)),
            bb(0.0, 0.0, 3.0, 1.0)
        );
    }

    #[test]
    fn invalid_boxes_are_rejected() {
        assert!(matches!(
            BBox::new(f64::NAN, 0.0, 1.0, 1.0),
            Err(GeometryError::NonFinite { .. })
        ));
        assert!(matches!(
            BBox::new(0.0, 0.0, f64::INFINITY, 1.0),
            Err(GeometryError::NonFinite { .. })
        ));
        assert!(matches!(
            BBox::new(2.0, 0.0, 1.0, 1.0),
            Err(GeometryError::Unordered { .. })
        ));
        assert!(matches!(
            BBox::from_xywh(0.0, 0.0, -1.0, 5.0),
            Err(GeometryError::NegativeExtent { .. })
        ));
    }

    #[test]
    fn xywh_conversion() {
        let b = BBox::from_xywh(10.0, 20.0, 30.0, 40.0).unwrap();
        assert_eq!((b.x_min(), b.y_min(), b.x_max(), b.y_max()), (10.0, 20.0, 40.0, 60.0));
        assert_eq!(b.to_xywh(), [10.0, 20.0, 30.0, 40.0]);
    }
}
