//! Structured generators: concentric rings around a center node, joined by
//! an angle-ordered zipper. Boundary vertices are placed on the circle.

use std::f64::consts::{LN_10, PI};

use super::{TriMesh, TAG_ARC, TAG_CIRCLE, TAG_TRACE, TAG_WALL};

struct Rings {
    radii: Vec<f64>,
    segments: Vec<usize>,
    full: bool,
}

impl Rings {
    fn count(&self, k: usize) -> usize {
        if self.full {
            self.segments[k]
        } else {
            self.segments[k] + 1
        }
    }

    fn build(&self, refinement: u32) -> TriMesh {
        let span = if self.full { 2.0 * PI } else { PI };
        let mut vertices = vec![[0.0, 0.0]];
        let mut offsets = Vec::with_capacity(self.radii.len());
        for (k, (&rho, &s)) in self.radii.iter().zip(&self.segments).enumerate() {
            offsets.push(vertices.len());
            for j in 0..self.count(k) {
                let theta = span * j as f64 / s as f64;
                // keep the flat side exactly on the axis
                let v = match (self.full, j) {
                    (false, 0) => [rho, 0.0],
                    (false, j) if j == s => [-rho, 0.0],
                    _ => [rho * theta.cos(), rho * theta.sin()],
                };
                vertices.push(v);
            }
        }
        let node = |k: usize, j: usize| -> usize {
            let s = self.segments[k];
            offsets[k] + if self.full { j % s } else { j }
        };

        let mut cells = Vec::new();
        for j in 0..self.segments[0] {
            cells.push([0, node(0, j), node(0, j + 1)]);
        }
        for k in 1..self.radii.len() {
            let (s_in, s_out) = (self.segments[k - 1], self.segments[k]);
            let (mut a, mut b) = (0usize, 0usize);
            while a < s_in || b < s_out {
                let advance_outer = if a == s_in {
                    true
                } else if b == s_out {
                    false
                } else {
                    (b + 1) * s_in <= (a + 1) * s_out
                };
                if advance_outer {
                    cells.push([node(k - 1, a), node(k, b), node(k, b + 1)]);
                    b += 1;
                } else {
                    cells.push([node(k - 1, a), node(k, b), node(k - 1, a + 1)]);
                    a += 1;
                }
            }
        }

        let last = self.radii.len() - 1;
        let mut boundary = Vec::new();
        let arc_tag = if self.full { TAG_CIRCLE } else { TAG_ARC };
        for j in 0..self.segments[last] {
            boundary.push((node(last, j), node(last, j + 1), arc_tag.to_string()));
        }
        if !self.full {
            let mut prev_start = 0;
            let mut prev_end = 0;
            for k in 0..self.radii.len() {
                let start = node(k, 0);
                let end = node(k, self.segments[k]);
                boundary.push((prev_start, start, TAG_TRACE.to_string()));
                boundary.push((prev_end, end, TAG_TRACE.to_string()));
                prev_start = start;
                prev_end = end;
            }
        }
        TriMesh::new(vertices, cells, boundary, refinement)
            .expect("structured ring mesh is valid by construction")
    }
}

fn ring_count(refinement: u32) -> usize {
    2usize << refinement
}

/// Unit disk: 2·2^refinement rings, ring k carrying 6k nodes.
pub fn build_disk_mesh(refinement: u32) -> TriMesh {
    let n = ring_count(refinement);
    Rings {
        radii: (1..=n).map(|k| k as f64 / n as f64).collect(),
        segments: (1..=n).map(|k| 6 * k).collect(),
        full: true,
    }
    .build(refinement)
}

/// Upper half disk {|x| < 1, x₂ > 0}; the flat side is tagged `trace`.
pub fn build_half_disk_mesh(refinement: u32) -> TriMesh {
    let n = ring_count(refinement);
    Rings {
        radii: (1..=n).map(|k| k as f64 / n as f64).collect(),
        segments: (1..=n).map(|k| 3 * k).collect(),
        full: false,
    }
    .build(refinement)
}

/// Upper half disk graded geometrically toward the origin.
///
/// Every ring carries `3·2^refinement` segments; rings sit at `10^{-j/s}` with
/// `s` chosen so cells stay close to isotropic, so every power of ten is a
/// ring radius. The innermost ring lies at or below `inner_radius / 8`.
pub fn build_graded_half_disk_mesh(refinement: u32, inner_radius: f64) -> TriMesh {
    assert!(inner_radius > 0.0 && inner_radius < 1.0);
    let m = 3usize << refinement;
    let per_decade = (LN_10 / (1.0 + PI / m as f64).ln()).ceil() as usize;
    let target = inner_radius / 8.0;
    let mut radii = Vec::new();
    let mut j = 0usize;
    loop {
        let rho = 10f64.powf(-(j as f64) / per_decade as f64);
        radii.push(rho);
        if rho <= target {
            break;
        }
        j += 1;
    }
    radii.reverse();
    let segments = vec![m; radii.len()];
    Rings {
        radii,
        segments,
        full: false,
    }
    .build(refinement)
}

/// Axis-aligned rectangle [0, width] × [0, height] split into right triangles.
pub fn build_rectangle_mesh(width: f64, height: f64, refinement: u32) -> TriMesh {
    let nx = 2usize << refinement;
    let ny = nx;
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([width * i as f64 / nx as f64, height * j as f64 / ny as f64]);
        }
    }
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            cells.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    let mut boundary = Vec::new();
    for i in 0..nx {
        boundary.push((idx(i, 0), idx(i + 1, 0), TAG_WALL.to_string()));
        boundary.push((idx(i, ny), idx(i + 1, ny), TAG_WALL.to_string()));
    }
    for j in 0..ny {
        boundary.push((idx(0, j), idx(0, j + 1), TAG_WALL.to_string()));
        boundary.push((idx(nx, j), idx(nx, j + 1), TAG_WALL.to_string()));
    }
    TriMesh::new(vertices, cells, boundary, refinement)
        .expect("structured rectangle mesh is valid by construction")
}
