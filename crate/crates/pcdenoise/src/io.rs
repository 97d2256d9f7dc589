//! Mesh (OFF, OBJ) and point cloud (XYZ, ASCII PLY) files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use pcdenoise_core::geometry::Point;
use pcdenoise_core::{PointCloud, TriangleMesh};

use crate::error::{PipelineError, Result};

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> PipelineError {
    PipelineError::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn numbers<T: std::str::FromStr>(path: &Path, line: usize, fields: &[&str]) -> Result<Vec<T>> {
    fields
        .iter()
        .map(|f| f.parse::<T>().map_err(|_| parse_err(path, line, format!("cannot parse `{f}`"))))
        .collect()
}

/// Reads a triangle mesh, choosing the format from the file extension.
pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let text = read_text(path)?;
    match extension(path).as_str() {
        "off" => parse_off(path, &text),
        "obj" => parse_obj(path, &text),
        other => Err(PipelineError::Format { path: path.into(), message: format!("unsupported mesh format `{other}`") }),
    }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn parse_off(path: &Path, text: &str) -> Result<TriangleMesh> {
    let mut lines = content_lines(text);
    let (ln, first) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let rest = first.strip_prefix("OFF").ok_or_else(|| parse_err(path, ln, "missing OFF header"))?.trim();
    let (ln, counts) = if rest.is_empty() { lines.next().ok_or_else(|| parse_err(path, ln, "missing counts"))? } else { (ln, rest) };
    let counts: Vec<usize> = numbers(path, ln, &counts.split_whitespace().collect::<Vec<_>>())?;
    if counts.len() < 2 {
        return Err(parse_err(path, ln, "expected vertex and face counts"));
    }
    let (nv, nf) = (counts[0], counts[1]);
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(path, ln, "truncated vertex list"))?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() < 3 {
            return Err(parse_err(path, ln, "vertex needs three coordinates"));
        }
        let v: Vec<f64> = numbers(path, ln, &f[..3])?;
        vertices.push([v[0], v[1], v[2]]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(path, ln, "truncated face list"))?;
        let f: Vec<usize> = numbers(path, ln, &l.split_whitespace().take(4).collect::<Vec<_>>())?;
        if f.len() != 4 || f[0] != 3 {
            return Err(parse_err(path, ln, "only triangular faces are supported"));
        }
        faces.push([f[1], f[2], f[3]]);
    }
    Ok(TriangleMesh::new(vertices, faces)?)
}

pub fn parse_obj(path: &Path, text: &str) -> Result<TriangleMesh> {
    let mut vertices: Vec<Point> = Vec::new();
    let mut faces = Vec::new();
    for (ln, l) in content_lines(text) {
        let mut f = l.split_whitespace();
        match f.next() {
            Some("v") => {
                let v: Vec<f64> = numbers(path, ln, &f.take(3).collect::<Vec<_>>())?;
                if v.len() != 3 {
                    return Err(parse_err(path, ln, "vertex needs three coordinates"));
                }
                vertices.push([v[0], v[1], v[2]]);
            }
            Some("f") => {
                let refs: Vec<&str> = f.collect();
                if refs.len() != 3 {
                    return Err(parse_err(path, ln, "only triangular faces are supported"));
                }
                let mut tri = [0usize; 3];
                for (slot, r) in tri.iter_mut().zip(&refs) {
                    let head = r.split('/').next().unwrap_or("");
                    let i: i64 = head.parse().map_err(|_| parse_err(path, ln, format!("bad face index `{r}`")))?;
                    let resolved = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                    if resolved < 0 {
                        return Err(parse_err(path, ln, format!("face index `{r}` out of range")));
                    }
                    *slot = resolved as usize;
                }
                faces.push(tri);
            }
            _ => {}
        }
    }
    Ok(TriangleMesh::new(vertices, faces)?)
}

/// Reads a point cloud, choosing the format from the file extension.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let text = read_text(path)?;
    match extension(path).as_str() {
        "xyz" | "txt" => parse_xyz(path, &text),
        "ply" => parse_ply(path, &text),
        other => Err(PipelineError::Format { path: path.into(), message: format!("unsupported cloud format `{other}`") }),
    }
}

pub fn parse_xyz(path: &Path, text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (ln, l) in content_lines(text) {
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() < 3 {
            return Err(parse_err(path, ln, "expected `x y z`"));
        }
        let v: Vec<f64> = numbers(path, ln, &f[..3])?;
        points.push([v[0], v[1], v[2]]);
    }
    Ok(PointCloud::new(points)?)
}

pub fn parse_ply(path: &Path, text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_err(path, 1, "missing ply magic")),
    }
    // (element name, count, property names)
    let mut elements: Vec<(String, usize, Vec<String>)> = Vec::new();
    let mut header_end = None;
    for (ln, l) in lines.by_ref() {
        let f: Vec<&str> = l.split_whitespace().collect();
        match f.as_slice() {
            ["format", "ascii", ..] => {}
            ["format", other, ..] => return Err(parse_err(path, ln, format!("unsupported ply format `{other}`"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let n = count.parse().map_err(|_| parse_err(path, ln, "bad element count"))?;
                elements.push((name.to_string(), n, Vec::new()));
            }
            ["property", "list", ..] => {
                let e = elements.last_mut().ok_or_else(|| parse_err(path, ln, "property before element"))?;
                e.2.push("list".into());
            }
            ["property", _, name] => {
                let e = elements.last_mut().ok_or_else(|| parse_err(path, ln, "property before element"))?;
                e.2.push(name.to_string());
            }
            ["end_header"] => {
                header_end = Some(ln);
                break;
            }
            _ => return Err(parse_err(path, ln, format!("unexpected header line `{l}`"))),
        }
    }
    let header_end = header_end.ok_or_else(|| parse_err(path, 1, "missing end_header"))?;
    let mut points = Vec::new();
    let mut last_line = header_end;
    for (name, count, props) in &elements {
        if name != "vertex" {
            // Skip rows of other elements; they are not needed for clouds.
            for _ in 0..*count {
                lines.next().ok_or_else(|| parse_err(path, last_line, format!("truncated `{name}` element")))?;
            }
            continue;
        }
        let col = |axis: &str| props.iter().position(|p| p == axis).ok_or_else(|| parse_err(path, header_end, format!("vertex has no `{axis}`")));
        let (cx, cy, cz) = (col("x")?, col("y")?, col("z")?);
        for _ in 0..*count {
            let (ln, l) = lines.next().ok_or_else(|| parse_err(path, last_line, "truncated vertex list"))?;
            last_line = ln;
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() < props.len() {
                return Err(parse_err(path, ln, "too few vertex properties"));
            }
            let v: Vec<f64> = numbers(path, ln, &[f[cx], f[cy], f[cz]])?;
            points.push([v[0], v[1], v[2]]);
        }
    }
    Ok(PointCloud::new(points)?)
}

/// Writes a point cloud as XYZ or ASCII PLY depending on the extension.
/// Coordinates are printed with round-trip precision.
pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut s = String::new();
    match extension(path).as_str() {
        "xyz" | "txt" => {}
        "ply" => {
            writeln!(s, "ply\nformat ascii 1.0\nelement vertex {}", cloud.len()).unwrap();
            s.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
        }
        other => {
            return Err(PipelineError::Format { path: path.into(), message: format!("unsupported cloud format `{other}`") })
        }
    }
    for p in cloud.points() {
        writeln!(s, "{:?} {:?} {:?}", p[0], p[1], p[2]).unwrap();
    }
    write_file(path, s.as_bytes())
}

/// Writes an OFF mesh.
pub fn write_off(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut s = format!("OFF\n{} {} 0\n", mesh.vertices().len(), mesh.faces().len());
    for v in mesh.vertices() {
        writeln!(s, "{:?} {:?} {:?}", v[0], v[1], v[2]).unwrap();
    }
    for f in mesh.faces() {
        writeln!(s, "3 {} {} {}", f[0], f[1], f[2]).unwrap();
    }
    write_file(path, s.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| PipelineError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn off_and_obj_agree() {
        let off = "OFF\n# square\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n";
        let obj = "# square\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\nf -4 -2 -1\n";
        let a = parse_off(Path::new("a.off"), off).unwrap();
        let b = parse_obj(Path::new("a.obj"), obj).unwrap();
        assert_eq!(a, b);
        assert!((a.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn off_header_with_counts_and_polygon_rejection() {
        let m = parse_off(Path::new("a.off"), "OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
        assert_eq!(m.faces().len(), 1);
        let err = parse_off(Path::new("a.off"), "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n").unwrap_err();
        assert!(matches!(err, PipelineError::Parse { line: 7, .. }), "{err}");
        assert!(parse_off(Path::new("a.off"), "OFF\n3 1 0\n0 0 0\n").is_err());
    }

    #[test]
    fn ply_with_extra_properties_and_faces() {
        let text = "ply\nformat ascii 1.0\ncomment x\nelement vertex 2\nproperty float nx\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n9 1 2 3\n9 4 5 6\n3 0 1 1\n";
        let c = parse_ply(Path::new("a.ply"), text).unwrap();
        assert_eq!(c.points(), &[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let bin = "ply\nformat binary_little_endian 1.0\nend_header\n";
        assert!(parse_ply(Path::new("a.ply"), bin).is_err());
    }

    #[test]
    fn xyz_errors_report_lines() {
        let err = parse_xyz(Path::new("a.xyz"), "0 0 0\n\n1 x 2\n").unwrap_err();
        assert!(matches!(err, PipelineError::Parse { line: 3, .. }));
        assert!(parse_xyz(Path::new("a.xyz"), "# nothing\n").is_err());
    }

    #[test]
    fn clouds_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = PointCloud::new(vec![[0.1, -2.5e-7, 3.0], [1.0 / 3.0, 2.0, -0.7]]).unwrap();
        for name in ["c.xyz", "c.ply"] {
            let p = dir.path().join(name);
            write_cloud(&p, &cloud).unwrap();
            assert_eq!(read_cloud(&p).unwrap(), cloud);
        }
        let mesh = TriangleMesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 0.7, 0.1]], vec![[0, 1, 2]]).unwrap();
        let p = dir.path().join("m.off");
        write_off(&p, &mesh).unwrap();
        assert_eq!(read_mesh(&p).unwrap(), mesh);
    }
}
