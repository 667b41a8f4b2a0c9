//! Planar shapes used to describe obstacles and safe regions.

use serde::{Deserialize, Serialize};

pub type Point = [f64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "shape")]
pub enum Shape {
    Rect { min: Point, max: Point },
    Circle { center: Point, radius: f64 },
}

impl Shape {
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Shape::Rect {
            min: [x0.min(x1), y0.min(y1)],
            max: [x0.max(x1), y0.max(y1)],
        }
    }

    pub fn circle(cx: f64, cy: f64, radius: f64) -> Self {
        Shape::Circle {
            center: [cx, cy],
            radius,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        match self {
            Shape::Rect { min, max } => {
                p[0] >= min[0] && p[0] <= max[0] && p[1] >= min[1] && p[1] <= max[1]
            }
            Shape::Circle { center, radius } => dist(p, *center) <= *radius,
        }
    }

    /// Whether a disc of the given radius overlaps the shape.
    pub fn overlaps_disc(&self, p: Point, r: f64) -> bool {
        self.distance_outside(p) <= r
    }

    /// Euclidean distance from an outside point to the shape; zero inside.
    pub fn distance_outside(&self, p: Point) -> f64 {
        match self {
            Shape::Rect { min, max } => {
                let dx = (min[0] - p[0]).max(p[0] - max[0]).max(0.0);
                let dy = (min[1] - p[1]).max(p[1] - max[1]).max(0.0);
                dx.hypot(dy)
            }
            Shape::Circle { center, radius } => (dist(p, *center) - radius).max(0.0),
        }
    }

    /// Distance from an inside point to the shape boundary; zero outside.
    pub fn depth_inside(&self, p: Point) -> f64 {
        if !self.contains(p) {
            return 0.0;
        }
        match self {
            Shape::Rect { min, max } => (p[0] - min[0])
                .min(max[0] - p[0])
                .min(p[1] - min[1])
                .min(max[1] - p[1]),
            Shape::Circle { center, radius } => radius - dist(p, *center),
        }
    }
}

pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Distance needed to leave every shape containing `p`.
pub fn escape_distance(shapes: &[Shape], p: Point) -> f64 {
    shapes
        .iter()
        .map(|s| s.depth_inside(p))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_distances() {
        let r = Shape::rect(0.0, 0.0, 2.0, 1.0);
        assert!(r.contains([1.0, 0.5]));
        assert_eq!(r.distance_outside([3.0, 0.5]), 1.0);
        assert!((r.distance_outside([3.0, 2.0]) - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.depth_inside([1.0, 0.25]), 0.25);
    }

    #[test]
    fn circle_distances() {
        let c = Shape::circle(0.0, 0.0, 1.0);
        assert_eq!(c.distance_outside([3.0, 0.0]), 2.0);
        assert_eq!(c.depth_inside([0.5, 0.0]), 0.5);
        assert!(c.overlaps_disc([1.5, 0.0], 0.6));
    }
}
