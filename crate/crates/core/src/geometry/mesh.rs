use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{Point, PointCloud};
use crate::error::invalid;
use crate::{math, rng, Error, Result};

/// Triangle soup with shared vertices. Degenerate faces are dropped on
/// construction, so every stored face has positive area.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point>,
    faces: Vec<[usize; 3]>,
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &Point, b: &Point) -> Point {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn axpy(p: &Point, t: f64, d: &Point) -> Point {
    [p[0] + t * d[0], p[1] + t * d[1], p[2] + t * d[2]]
}

fn triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    let n = cross(&sub(b, a), &sub(c, a));
    0.5 * math::sqrt(dot(&n, &n))
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("mesh vertices"));
        }
        for f in &faces {
            if let Some(&bad) = f.iter().find(|&&i| i >= vertices.len()) {
                return Err(Error::IndexOutOfBounds { index: bad, len: vertices.len() });
            }
        }
        let scale = PointCloud::new(vertices.clone()).map(|c| c.bbox_diagonal()).unwrap_or(0.0);
        let min_area = 1e-14 * scale * scale;
        let faces = faces
            .into_iter()
            .filter(|f| triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]) > min_area)
            .collect();
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, f: usize) -> [Point; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        triangle_area(&a, &b, &c)
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }
}

/// Closest point to `p` on the triangle `abc`, covering the interior, edge
/// and vertex regions.
fn closest_point_on_triangle(p: &Point, a: &Point, b: &Point, c: &Point) -> Point {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(&ab, &ap);
    let d2 = dot(&ac, &ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = sub(p, b);
    let d3 = dot(&ab, &bp);
    let d4 = dot(&ac, &bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return axpy(a, d1 / (d1 - d3), &ab);
    }
    let cp = sub(p, c);
    let d5 = dot(&ab, &cp);
    let d6 = dot(&ac, &cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return axpy(a, d2 / (d2 - d6), &ac);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return axpy(b, w, &sub(c, b));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    axpy(&axpy(a, v, &ab), w, &ac)
}

/// Exact Euclidean distance from `p` to the triangle `abc`.
pub fn point_triangle_distance(p: &Point, a: &Point, b: &Point, c: &Point) -> f64 {
    math::dist(p, &closest_point_on_triangle(p, a, b, c))
}

/// Mean distance from each point to the nearest point on the mesh surface.
pub fn point_to_surface(cloud: &PointCloud, mesh: &TriangleMesh) -> Result<f64> {
    if mesh.is_empty() {
        return Err(Error::Empty("mesh"));
    }
    // Bounding spheres give a cheap lower bound that skips most faces.
    let spheres: Vec<(Point, f64)> = (0..mesh.faces.len())
        .map(|f| {
            let [a, b, c] = mesh.triangle(f);
            let center = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0, (a[2] + b[2] + c[2]) / 3.0];
            let r = math::dist(&center, &a).max(math::dist(&center, &b)).max(math::dist(&center, &c));
            (center, r)
        })
        .collect();
    let mut total = 0.0;
    let mut last_best_face = 0;
    for p in cloud.points() {
        let [a, b, c] = mesh.triangle(last_best_face);
        let mut best = math::dist2(p, &closest_point_on_triangle(p, &a, &b, &c));
        for (f, (center, r)) in spheres.iter().enumerate() {
            let lower = math::dist(p, center) - r;
            if lower > 0.0 && lower * lower >= best {
                continue;
            }
            let [a, b, c] = mesh.triangle(f);
            let d = math::dist2(p, &closest_point_on_triangle(p, &a, &b, &c));
            if d < best {
                best = d;
                last_best_face = f;
            }
        }
        total += math::sqrt(best);
    }
    Ok(total / cloud.len() as f64)
}

/// Greedy farthest-point selection of `n` indices starting from `start`;
/// ties go to the lowest index.
pub fn farthest_point_selection(points: &[Point], n: usize, start: usize) -> Result<Vec<usize>> {
    if n > points.len() {
        return Err(Error::TooFewPoints { needed: n, got: points.len() });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if start >= points.len() {
        return Err(Error::IndexOutOfBounds { index: start, len: points.len() });
    }
    let mut selected = Vec::with_capacity(n);
    let mut min_d2 = vec![f64::INFINITY; points.len()];
    let mut current = start;
    for _ in 0..n {
        selected.push(current);
        let c = points[current];
        let mut next = (f64::NEG_INFINITY, 0);
        for (i, (p, d)) in points.iter().zip(min_d2.iter_mut()).enumerate() {
            let dd = math::dist2(p, &c);
            if dd < *d {
                *d = dd;
            }
            if *d > next.0 {
                next = (*d, i);
            }
        }
        current = next.1;
    }
    Ok(selected)
}

/// Evenly spread surface samples: `4n` area-weighted random candidates
/// reduced to `n` by farthest-point selection.
pub fn sample_mesh(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(invalid!("sample count must be at least 1"));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Degenerate("mesh has zero area"));
    }
    let mut rng = rng::seeded(seed, rng::stream::MESH_SAMPLE);
    let candidates: Vec<Point> = (0..4 * n)
        .map(|_| {
            let target = rng.random::<f64>() * total;
            let f = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangle(f);
            let s = math::sqrt(rng.random::<f64>());
            let t = rng.random::<f64>();
            let (wa, wb, wc) = (1.0 - s, s * (1.0 - t), s * t);
            [
                wa * a[0] + wb * b[0] + wc * c[0],
                wa * a[1] + wb * b[1] + wc * c[1],
                wa * a[2] + wb * b[2] + wc * c[2],
            ]
        })
        .collect();
    let chosen = farthest_point_selection(&candidates, n, 0)?;
    PointCloud::new(chosen.into_iter().map(|i| candidates[i]).collect())
}
