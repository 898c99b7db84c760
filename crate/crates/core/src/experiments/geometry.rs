//! Planar geometry for trajectory metrics.

use nalgebra::Vector2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Point = Vector2<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
}

impl Circle {
    fn from_two(a: &Point, b: &Point) -> Self {
        Self {
            center: (a + b) / 2.0,
            radius: (a - b).norm() / 2.0,
        }
    }

    /// Circumcircle; `None` for (near-)collinear points.
    fn from_three(a: &Point, b: &Point, c: &Point) -> Option<Self> {
        let (ab, ac) = (b - a, c - a);
        let d = 2.0 * (ab.x * ac.y - ab.y * ac.x);
        let scale = ab.norm_squared().max(ac.norm_squared());
        if d.abs() <= 1e-14 * scale {
            return None;
        }
        let (b2, c2) = (ab.norm_squared(), ac.norm_squared());
        let off = Point::new(ac.y * b2 - ab.y * c2, ab.x * c2 - ac.x * b2) / d;
        Some(Self {
            center: a + off,
            radius: off.norm(),
        })
    }

    pub fn contains(&self, p: &Point) -> bool {
        (p - self.center).norm() <= self.radius * (1.0 + 1e-12) + 1e-15
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }
}

fn circle_with_two(points: &[Point], a: Point, b: Point) -> Circle {
    let mut c = Circle::from_two(&a, &b);
    for p in points {
        if !c.contains(p) {
            c = Circle::from_three(&a, &b, p).unwrap_or_else(|| {
                // Collinear: the outermost pair spans the circle.
                [(a, b), (a, *p), (b, *p)]
                    .iter()
                    .map(|(x, y)| Circle::from_two(x, y))
                    .fold(c, |best, cand| if cand.radius > best.radius { cand } else { best })
            });
        }
    }
    c
}

fn circle_with_one(points: &[Point], a: Point) -> Circle {
    let mut c = Circle { center: a, radius: 0.0 };
    for (i, p) in points.iter().enumerate() {
        if !c.contains(p) {
            c = circle_with_two(&points[..i], a, *p);
        }
    }
    c
}

/// Smallest circle containing every point (Welzl, iterative form). The input
/// is shuffled with a fixed seed so the result is deterministic and the
/// expected cost linear.
pub fn min_enclosing_circle(points: &[Point]) -> Option<Circle> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.shuffle(&mut ChaCha8Rng::seed_from_u64(0));
    let first = *pts.first()?;
    let mut c = Circle { center: first, radius: 0.0 };
    for i in 1..pts.len() {
        if !c.contains(&pts[i]) {
            c = circle_with_one(&pts[..i], pts[i]);
        }
    }
    Some(c)
}

pub fn distance_to_segment(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * s)).norm()
}

pub fn distance_to_polyline(p: &Point, path: &[Point]) -> f64 {
    match path {
        [] => f64::INFINITY,
        [only] => (p - only).norm(),
        _ => path
            .windows(2)
            .map(|w| distance_to_segment(p, &w[0], &w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}
