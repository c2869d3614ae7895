//! Plain-text mesh format.
//!
//! ```text
//! n_vertices n_cells n_boundary_edges
//! x y                  (one line per vertex)
//! i j k                (one line per cell, 0-based)
//! a b tag              (one line per boundary edge)
//! ```

use std::io::{BufRead, Write};

use super::TriMesh;
use crate::error::{Error, Result};

pub fn write_mesh(mesh: &TriMesh, mut out: impl Write) -> Result<()> {
    writeln!(
        out,
        "{} {} {}",
        mesh.n_vertices(),
        mesh.n_cells(),
        mesh.boundary_edges().len()
    )?;
    for v in mesh.vertices() {
        writeln!(out, "{} {}", v[0], v[1])?;
    }
    for c in mesh.cells() {
        writeln!(out, "{} {} {}", c[0], c[1], c[2])?;
    }
    for e in mesh.boundary_edges() {
        writeln!(out, "{} {} {}", e.a, e.b, e.tag)?;
    }
    Ok(())
}

pub fn read_mesh(input: impl BufRead) -> Result<TriMesh> {
    let mut lines = input
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let mut next = |what: &str| -> Result<(usize, Vec<String>)> {
        match lines.next() {
            Some((no, line)) => Ok((
                no + 1,
                line?.split_whitespace().map(str::to_string).collect(),
            )),
            None => Err(Error::Parse {
                line: 0,
                msg: format!("unexpected end of file, expected {what}"),
            }),
        }
    };
    fn field<T: std::str::FromStr>(line: usize, tok: &[String], k: usize) -> Result<T> {
        tok.get(k)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse {
                line,
                msg: format!("bad or missing field {k}"),
            })
    }

    let (no, head) = next("header")?;
    let nv: usize = field(no, &head, 0)?;
    let nc: usize = field(no, &head, 1)?;
    let nb: usize = field(no, &head, 2)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (no, t) = next("vertex")?;
        vertices.push([field(no, &t, 0)?, field(no, &t, 1)?]);
    }
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (no, t) = next("cell")?;
        cells.push([field(no, &t, 0)?, field(no, &t, 1)?, field(no, &t, 2)?]);
    }
    let mut boundary = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (no, t) = next("boundary edge")?;
        let tag: String = field(no, &t, 2)?;
        boundary.push((field(no, &t, 0)?, field(no, &t, 1)?, tag));
    }
    TriMesh::new(vertices, cells, boundary, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_half_disk_mesh, build_rectangle_mesh};

    #[test]
    fn text_format_preserves_geometry() {
        for mesh in [build_half_disk_mesh(2), build_rectangle_mesh(2.0, 1.0, 1)] {
            let mut buf = Vec::new();
            write_mesh(&mesh, &mut buf).unwrap();
            let back = read_mesh(buf.as_slice()).unwrap();
            assert_eq!(back.vertices(), mesh.vertices());
            assert_eq!(back.cells(), mesh.cells());
            assert_eq!(back.boundary_edges(), mesh.boundary_edges());
        }
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let text = "3 1 3\n0 0\n1 0\n";
        assert!(matches!(read_mesh(text.as_bytes()), Err(Error::Parse { .. })));
    }
}
