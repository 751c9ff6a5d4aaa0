use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mesh::SimplicialMesh;
use crate::points::Points;

const TRIANGLE: u8 = 5;
const TETRA: u8 = 10;

/// A mesh with named scalar fields, as stored in a VTK file.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshFile {
    pub mesh: SimplicialMesh,
    pub point_data: Vec<(String, Vec<f64>)>,
    pub cell_data: Vec<(String, Vec<f64>)>,
}

impl MeshFile {
    pub fn new(mesh: SimplicialMesh) -> Self {
        MeshFile {
            mesh,
            point_data: Vec::new(),
            cell_data: Vec::new(),
        }
    }

    pub fn with_point_field(mut self, name: &str, values: Vec<f64>) -> Self {
        self.point_data.push((name.to_string(), values));
        self
    }

    pub fn with_cell_field(mut self, name: &str, values: Vec<f64>) -> Self {
        self.cell_data.push((name.to_string(), values));
        self
    }

    pub fn point_field(&self, name: &str) -> Option<&[f64]> {
        self.point_data.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn cell_field(&self, name: &str) -> Option<&[f64]> {
        self.cell_data.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

fn check_fields(file: &MeshFile) -> Result<()> {
    let (nv, ne) = (file.mesh.num_vertices(), file.mesh.num_elements());
    for (name, v) in &file.point_data {
        if v.len() != nv {
            return Err(Error::invalid(format!("point field {name} has {} values for {nv} points", v.len())));
        }
    }
    for (name, v) in &file.cell_data {
        if v.len() != ne {
            return Err(Error::invalid(format!("cell field {name} has {} values for {ne} cells", v.len())));
        }
    }
    for name in file.point_data.iter().chain(&file.cell_data).map(|(n, _)| n) {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::invalid(format!("field name {name:?} must be a nonempty word")));
        }
    }
    Ok(())
}

/// Legacy ASCII unstructured grid. Coordinates and field values are written
/// with 17 significant digits so that reading them back is lossless.
pub fn render_vtk(file: &MeshFile) -> Result<String> {
    check_fields(file)?;
    let mesh = &file.mesh;
    let dim = mesh.dim();
    let k = mesh.nodes_per_element();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "meshmorph dim={dim}");
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.num_vertices());
    for p in mesh.vertices().iter() {
        let z = if dim == 3 { p[2] } else { 0.0 };
        let _ = writeln!(s, "{:.16e} {:.16e} {:.16e}", p[0], p[1], z);
    }
    let ne = mesh.num_elements();
    let _ = writeln!(s, "CELLS {} {}", ne, ne * (k + 1));
    for el in mesh.elements() {
        s.push_str(&k.to_string());
        for i in el {
            let _ = write!(s, " {i}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {ne}");
    let ty = if dim == 2 { TRIANGLE } else { TETRA };
    for _ in 0..ne {
        let _ = writeln!(s, "{ty}");
    }
    write_fields(&mut s, "POINT_DATA", mesh.num_vertices(), &file.point_data);
    write_fields(&mut s, "CELL_DATA", ne, &file.cell_data);
    Ok(s)
}

fn write_fields(s: &mut String, section: &str, n: usize, fields: &[(String, Vec<f64>)]) {
    if fields.is_empty() {
        return;
    }
    let _ = writeln!(s, "{section} {n}");
    for (name, values) in fields {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in values {
            let _ = writeln!(s, "{v:.16e}");
        }
    }
}

pub fn write_mesh(path: impl AsRef<Path>, file: &MeshFile) -> Result<()> {
    let text = render_vtk(file)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<MeshFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_vtk(&text, path)
}

struct Lines<'a> {
    path: PathBuf,
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    /// Next non-blank line, trimmed, with its 1-based number.
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            let t = l.trim();
            if !t.is_empty() {
                self.line = i + 1;
                return Ok((i + 1, t));
            }
        }
        Err(self.err(self.line + 1, format!("unexpected end of file, expected {what}")))
    }

    fn at_end(&mut self) -> bool {
        while let Some((_, l)) = self.inner.peek() {
            if l.trim().is_empty() {
                self.inner.next();
            } else {
                return false;
            }
        }
        true
    }

    fn header(&mut self, keyword: &str, nums: usize) -> Result<(usize, Vec<&'a str>)> {
        let (n, l) = self.next(keyword)?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts[0] != keyword || parts.len() < nums + 1 {
            return Err(self.err(n, format!("expected `{keyword}` header, found `{l}`")));
        }
        Ok((n, parts))
    }

    fn num<T: std::str::FromStr>(&self, line: usize, tok: &str) -> Result<T> {
        tok.parse().map_err(|_| self.err(line, format!("cannot parse `{tok}` as a number")))
    }
}

/// Parses the subset of legacy VTK produced by [`render_vtk`]. Errors carry
/// the 1-based line number within `path`.
pub fn parse_vtk(text: &str, path: impl AsRef<Path>) -> Result<MeshFile> {
    let mut lines = Lines {
        path: path.as_ref().to_path_buf(),
        inner: text.lines().enumerate().peekable(),
        line: 0,
    };
    let (n, l) = lines.next("version line")?;
    if !l.starts_with("# vtk DataFile") {
        return Err(lines.err(n, "missing `# vtk DataFile` version line"));
    }
    let (n, title) = lines.next("title")?;
    let title_dim = title
        .split_whitespace()
        .find_map(|w| w.strip_prefix("dim="))
        .map(|d| lines.num::<usize>(n, d))
        .transpose()?;
    let (n, l) = lines.next("ASCII")?;
    if l != "ASCII" {
        return Err(lines.err(n, format!("only ASCII files are supported, found `{l}`")));
    }
    let (n, l) = lines.next("DATASET")?;
    if l != "DATASET UNSTRUCTURED_GRID" {
        return Err(lines.err(n, format!("expected `DATASET UNSTRUCTURED_GRID`, found `{l}`")));
    }

    let (n, parts) = lines.header("POINTS", 1)?;
    let np: usize = lines.num(n, parts[1])?;
    let mut coords = Vec::with_capacity(np * 3);
    for _ in 0..np {
        let (n, l) = lines.next("point coordinates")?;
        let xs: Vec<&str> = l.split_whitespace().collect();
        if xs.len() != 3 {
            return Err(lines.err(n, format!("expected 3 coordinates, found {}", xs.len())));
        }
        for x in xs {
            coords.push(lines.num::<f64>(n, x)?);
        }
    }

    let (n, parts) = lines.header("CELLS", 2)?;
    let ne: usize = lines.num(n, parts[1])?;
    let size: usize = lines.num(n, parts[2])?;
    let mut cells: Vec<Vec<usize>> = Vec::with_capacity(ne);
    let mut total = 0;
    for _ in 0..ne {
        let (n, l) = lines.next("cell")?;
        if l.starts_with("CELL_TYPES") {
            return Err(lines.err(n, format!("CELLS declares {ne} cells but fewer are listed")));
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        let k: usize = lines.num(n, toks[0])?;
        if toks.len() != k + 1 {
            return Err(lines.err(n, format!("cell lists {} indices, declares {k}", toks.len() - 1)));
        }
        let mut c = Vec::with_capacity(k);
        for t in &toks[1..] {
            c.push(lines.num::<usize>(n, t)?);
        }
        total += k + 1;
        cells.push(c);
    }
    if total != size {
        return Err(lines.err(n, format!("CELLS size {size} does not match the {total} listed entries")));
    }

    let (n, parts) = lines.header("CELL_TYPES", 1)?;
    let nt: usize = lines.num(n, parts[1])?;
    if nt != ne {
        return Err(lines.err(n, format!("CELL_TYPES count {nt} differs from CELLS count {ne}")));
    }
    let mut cell_dim = None;
    for c in &cells {
        let (n, l) = lines.next("cell type")?;
        let ty: u8 = lines.num(n, l)?;
        let d = match (ty, c.len()) {
            (TRIANGLE, 3) => 2,
            (TETRA, 4) => 3,
            _ => return Err(lines.err(n, format!("unsupported cell type {ty} with {} nodes", c.len()))),
        };
        if cell_dim.is_some_and(|cd| cd != d) {
            return Err(lines.err(n, "mixed triangle and tetrahedron cells"));
        }
        cell_dim = Some(d);
    }
    let dim = match (cell_dim, title_dim) {
        (Some(c), Some(t)) if c != t => {
            return Err(lines.err(2, format!("title declares dim={t} but cells are {c}D")));
        }
        (Some(d), _) | (None, Some(d)) => d,
        (None, None) => 3,
    };
    let points = if dim == 3 {
        Points::new(3, coords)
    } else {
        Points::from_rows(2, coords.chunks_exact(3).map(|c| [c[0], c[1]]))
    };
    let mesh = SimplicialMesh::new(points, cells.concat()).map_err(|e| lines.err(n, e.to_string()))?;

    let mut file = MeshFile::new(mesh);
    while !lines.at_end() {
        let (n, l) = lines.next("data section")?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        let (expected, is_point) = match parts[0] {
            "POINT_DATA" => (file.mesh.num_vertices(), true),
            "CELL_DATA" => (file.mesh.num_elements(), false),
            _ => return Err(lines.err(n, format!("unexpected section `{l}`"))),
        };
        let count: usize = lines.num(n, parts.get(1).copied().unwrap_or(""))?;
        if count != expected {
            return Err(lines.err(n, format!("{} count {count}, expected {expected}", parts[0])));
        }
        while let Some((_, next)) = lines.inner.peek() {
            if !next.trim_start().starts_with("SCALARS") {
                if next.trim().is_empty() {
                    lines.inner.next();
                    continue;
                }
                break;
            }
            let (n, l) = lines.next("SCALARS")?;
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() < 3 || parts.get(3).is_some_and(|c| *c != "1") {
                return Err(lines.err(n, format!("malformed SCALARS header `{l}`")));
            }
            let name = parts[1].to_string();
            let (n, l) = lines.next("LOOKUP_TABLE")?;
            if !l.starts_with("LOOKUP_TABLE") {
                return Err(lines.err(n, format!("expected LOOKUP_TABLE, found `{l}`")));
            }
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                let (n, l) = lines.next("scalar value")?;
                values.push(lines.num::<f64>(n, l)?);
            }
            if is_point {
                file.point_data.push((name, values));
            } else {
                file.cell_data.push((name, values));
            }
        }
    }
    Ok(file)
}
