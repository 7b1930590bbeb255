use crate::geometry::Vec2;

/// Simple polygon, vertices in order (either winding).
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<Vec2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Vec2>) -> Self {
        Self { vertices }
    }

    /// Crossing-number point test.
    pub fn contains(&self, p: &Vec2) -> bool {
        let v = &self.vertices;
        let mut inside = false;
        let mut j = v.len().wrapping_sub(1);
        for i in 0..v.len() {
            let (a, b) = (v[i], v[j]);
            if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    /// Unsigned shoelace area.
    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        0.5 * (0..n)
            .map(|i| v[i].perp(&v[(i + 1) % n]))
            .sum::<f64>()
            .abs()
    }

    /// `(min, max)` corners of the axis-aligned bounding box.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for p in &self.vertices {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }
}

/// Corners of a `length × width` rectangle centred at `center`, long axis
/// at angle `yaw` from +x, counter-clockwise.
pub fn rect_corners(center: &Vec2, length: f64, width: f64, yaw: f64) -> [Vec2; 4] {
    let (s, c) = yaw.sin_cos();
    let u = Vec2::new(c, s) * (0.5 * length);
    let v = Vec2::new(-s, c) * (0.5 * width);
    [
        center + u + v,
        center - u + v,
        center - u - v,
        center + u - v,
    ]
}

fn project(poly: &[Vec2; 4], axis: &Vec2) -> (f64, f64) {
    poly.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let d = p.dot(axis);
            (lo.min(d), hi.max(d))
        })
}

/// Separating-axis test for two convex quadrilaterals. Touching edges do
/// not count as overlap.
pub fn rects_overlap(a: &[Vec2; 4], b: &[Vec2; 4]) -> bool {
    for poly in [a, b] {
        for i in 0..4 {
            let e = poly[(i + 1) % 4] - poly[i];
            let axis = Vec2::new(-e.y, e.x);
            let (a0, a1) = project(a, &axis);
            let (b0, b1) = project(b, &axis);
            if a1 <= b0 || b1 <= a0 {
                return false;
            }
        }
    }
    true
}

/// Band of total width `width` around a polyline, as a polygon.
pub fn buffer_polyline(points: &[Vec2], width: f64) -> Polygon {
    let n = points.len();
    let normal = |i: usize| {
        let t = if i == 0 {
            points[1] - points[0]
        } else if i == n - 1 {
            points[n - 1] - points[n - 2]
        } else {
            (points[i + 1] - points[i]).normalize() + (points[i] - points[i - 1]).normalize()
        };
        let t = t.normalize();
        Vec2::new(-t.y, t.x)
    };
    let h = 0.5 * width;
    let left = (0..n).map(|i| points[i] + normal(i) * h);
    let right: Vec<Vec2> = (0..n).map(|i| points[i] - normal(i) * h).collect();
    Polygon::new(left.chain(right.into_iter().rev()).collect())
}
