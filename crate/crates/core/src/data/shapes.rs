use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::invalid;
use crate::geometry::{Point, TriangleMesh};
use crate::{math, Result};

/// Analytic test surfaces.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum ShapeSpec {
    /// Latitude/longitude sphere.
    Sphere { radius: f64, segments: usize, rings: usize },
    Torus { major: f64, minor: f64, segments: usize, rings: usize },
    /// Square in the z = 0 plane, `divisions` quads per side.
    Plane { size: f64, divisions: usize },
    Cube { side: f64 },
    /// Subdivided icosahedron projected onto the sphere.
    Icosphere { radius: f64, subdivisions: usize },
}

impl ShapeSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Sphere { .. } => "sphere",
            Self::Torus { .. } => "torus",
            Self::Plane { .. } => "plane",
            Self::Cube { .. } => "cube",
            Self::Icosphere { .. } => "icosphere",
        }
    }
}

pub fn generate_shape(spec: &ShapeSpec) -> Result<TriangleMesh> {
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(invalid!("{name} must be positive, got {v}"))
        }
    };
    match *spec {
        ShapeSpec::Sphere { radius, segments, rings } => {
            positive("radius", radius)?;
            if segments < 3 || rings < 2 {
                return Err(invalid!("sphere needs segments >= 3 and rings >= 2"));
            }
            sphere(radius, segments, rings)
        }
        ShapeSpec::Torus { major, minor, segments, rings } => {
            positive("major radius", major)?;
            positive("minor radius", minor)?;
            if segments < 3 || rings < 3 {
                return Err(invalid!("torus needs segments >= 3 and rings >= 3"));
            }
            torus(major, minor, segments, rings)
        }
        ShapeSpec::Plane { size, divisions } => {
            positive("size", size)?;
            if divisions == 0 {
                return Err(invalid!("plane needs at least one division"));
            }
            plane(size, divisions)
        }
        ShapeSpec::Cube { side } => {
            positive("side", side)?;
            cube(side)
        }
        ShapeSpec::Icosphere { radius, subdivisions } => {
            positive("radius", radius)?;
            if subdivisions > 7 {
                return Err(invalid!("icosphere subdivisions above 7 are not supported"));
            }
            icosphere(radius, subdivisions)
        }
    }
}

fn sphere(radius: f64, segments: usize, rings: usize) -> Result<TriangleMesh> {
    let mut v = alloc::vec![[0.0, 0.0, radius]];
    for i in 1..rings {
        let theta = PI * i as f64 / rings as f64;
        for j in 0..segments {
            let phi = 2.0 * PI * j as f64 / segments as f64;
            let s = math::sin(theta);
            v.push([radius * s * math::cos(phi), radius * s * math::sin(phi), radius * math::cos(theta)]);
        }
    }
    let south = v.len();
    v.push([0.0, 0.0, -radius]);
    let at = |ring: usize, j: usize| 1 + (ring - 1) * segments + j % segments;
    let mut f = Vec::new();
    for j in 0..segments {
        f.push([0, at(1, j), at(1, j + 1)]);
        f.push([south, at(rings - 1, j + 1), at(rings - 1, j)]);
    }
    for ring in 1..rings - 1 {
        for j in 0..segments {
            let (a, b, c, d) = (at(ring, j), at(ring, j + 1), at(ring + 1, j), at(ring + 1, j + 1));
            f.push([a, c, d]);
            f.push([a, d, b]);
        }
    }
    TriangleMesh::new(v, f)
}

fn torus(major: f64, minor: f64, segments: usize, rings: usize) -> Result<TriangleMesh> {
    let mut v = Vec::with_capacity(segments * rings);
    for i in 0..segments {
        let u = 2.0 * PI * i as f64 / segments as f64;
        for j in 0..rings {
            let w = 2.0 * PI * j as f64 / rings as f64;
            let rr = major + minor * math::cos(w);
            v.push([rr * math::cos(u), rr * math::sin(u), minor * math::sin(w)]);
        }
    }
    let at = |i: usize, j: usize| (i % segments) * rings + j % rings;
    let mut f = Vec::with_capacity(2 * segments * rings);
    for i in 0..segments {
        for j in 0..rings {
            let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1));
            f.push([a, b, d]);
            f.push([a, d, c]);
        }
    }
    TriangleMesh::new(v, f)
}

fn plane(size: f64, divisions: usize) -> Result<TriangleMesh> {
    let n = divisions + 1;
    let step = size / divisions as f64;
    let mut v = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            v.push([i as f64 * step - size / 2.0, j as f64 * step - size / 2.0, 0.0]);
        }
    }
    let mut f = Vec::with_capacity(2 * divisions * divisions);
    for i in 0..divisions {
        for j in 0..divisions {
            let (a, b, c, d) = (i * n + j, (i + 1) * n + j, i * n + j + 1, (i + 1) * n + j + 1);
            f.push([a, b, d]);
            f.push([a, d, c]);
        }
    }
    TriangleMesh::new(v, f)
}

fn cube(side: f64) -> Result<TriangleMesh> {
    let h = side / 2.0;
    let v: Vec<Point> = (0..8)
        .map(|i| [if i & 1 == 0 { -h } else { h }, if i & 2 == 0 { -h } else { h }, if i & 4 == 0 { -h } else { h }])
        .collect();
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    let f = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    TriangleMesh::new(v, f)
}

fn icosphere(radius: f64, subdivisions: usize) -> Result<TriangleMesh> {
    let t = (1.0 + math::sqrt(5.0)) / 2.0;
    let mut v: Vec<Point> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .to_vec();
    let mut f: Vec<[usize; 3]> = [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ]
    .to_vec();
    for _ in 0..subdivisions {
        let mut mid = BTreeMap::new();
        let mut midpoint = |a: usize, b: usize, v: &mut Vec<Point>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                v.push([(v[a][0] + v[b][0]) / 2.0, (v[a][1] + v[b][1]) / 2.0, (v[a][2] + v[b][2]) / 2.0]);
                v.len() - 1
            })
        };
        let mut next = Vec::with_capacity(f.len() * 4);
        for &[a, b, c] in &f {
            let ab = midpoint(a, b, &mut v);
            let bc = midpoint(b, c, &mut v);
            let ca = midpoint(c, a, &mut v);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        f = next;
    }
    for p in &mut v {
        let s = radius / math::dist(p, &[0.0; 3]);
        *p = [p[0] * s, p[1] * s, p[2] * s];
    }
    TriangleMesh::new(v, f)
}
