//! Legacy VTK ASCII files: `UNSTRUCTURED_GRID` (classic `CELLS` layout and
//! the newer `OFFSETS`/`CONNECTIVITY` layout) and `STRUCTURED_POINTS`.
//!
//! Point data (`SCALARS`, `VECTORS`, `NORMALS`, `TENSORS`, `FIELD`) is
//! returned in the interleaved per-point layout. Cell data, lookup tables
//! and metadata blocks are skipped.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{cell_type, Cell, Grid};

#[derive(Debug, Clone, PartialEq)]
pub struct VtkField {
    pub name: String,
    pub components: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VtkDataset {
    pub title: String,
    pub grid: Grid,
    pub point_data: Vec<VtkField>,
}

impl VtkDataset {
    pub fn field_names(&self) -> Vec<String> {
        self.point_data.iter().map(|f| f.name.clone()).collect()
    }

    pub fn field(&self, name: &str) -> Result<&VtkField> {
        self.point_data.iter().find(|f| f.name == name).ok_or_else(|| Error::MissingField {
            name: name.to_string(),
            available: self.field_names(),
        })
    }
}

struct Tokens<'a> {
    path: &'a Path,
    toks: Vec<(usize, &'a str)>,
    blank_lines: Vec<usize>,
    last_line: usize,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(path: &'a Path, lines: &[(usize, &'a str)]) -> Self {
        let mut toks = Vec::new();
        let mut blank_lines = Vec::new();
        for &(n, l) in lines {
            if l.trim().is_empty() {
                blank_lines.push(n);
            }
            toks.extend(l.split_whitespace().map(|t| (n, t)));
        }
        Self {
            path,
            toks,
            blank_lines,
            last_line: lines.last().map_or(0, |l| l.0),
            pos: 0,
        }
    }

    fn error(&self, line: usize, section: &str, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            section: section.to_string(),
            message: message.into(),
        }
    }

    fn line(&self) -> usize {
        self.toks.get(self.pos).map_or(self.last_line + 1, |t| t.0)
    }

    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).map(|t| t.1)
    }

    fn next(&mut self, section: &str) -> Result<(usize, &'a str)> {
        match self.toks.get(self.pos) {
            Some(&t) => {
                self.pos += 1;
                Ok(t)
            }
            None => Err(self.error(self.last_line + 1, section, "unexpected end of file")),
        }
    }

    fn usize(&mut self, section: &str, what: &str) -> Result<usize> {
        let (line, t) = self.next(section)?;
        t.parse().map_err(|_| self.error(line, section, format!("expected {what}, found `{t}`")))
    }

    fn f64(&mut self, section: &str) -> Result<f64> {
        let (line, t) = self.next(section)?;
        t.parse().map_err(|_| self.error(line, section, format!("expected a number, found `{t}`")))
    }

    fn floats(&mut self, n: usize, section: &str) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64(section)).collect()
    }

    fn ints(&mut self, n: usize, section: &str) -> Result<Vec<usize>> {
        (0..n).map(|_| self.usize(section, "a nonnegative integer")).collect()
    }

    /// Drops everything up to the next blank line (end of a `METADATA` block).
    fn skip_block(&mut self) {
        let from = self.line();
        let stop = self.blank_lines.iter().copied().find(|&b| b > from).unwrap_or(usize::MAX);
        while self.toks.get(self.pos).is_some_and(|t| t.0 < stop) {
            self.pos += 1;
        }
    }
}

fn is_keyword(t: &str, k: &str) -> bool {
    t.eq_ignore_ascii_case(k)
}

/// Arrays of a `FIELD` block; the keyword itself is already consumed.
fn field_arrays(t: &mut Tokens, section: &str, tuples_expected: Option<usize>) -> Result<Vec<VtkField>> {
    let _name = t.next(section)?;
    let arrays = t.usize(section, "array count")?;
    let mut out = Vec::with_capacity(arrays);
    for _ in 0..arrays {
        let (line, name) = t.next(section)?;
        let comps = t.usize(section, "component count")?;
        let tuples = t.usize(section, "tuple count")?;
        let _dtype = t.next(section)?;
        let sub = format!("{section} {name}");
        if let Some(n) = tuples_expected.filter(|&n| n != tuples) {
            return Err(t.error(line, &sub, format!("array has {tuples} tuples, expected {n}")));
        }
        let values = t.floats(comps * tuples, &sub)?;
        out.push(VtkField {
            name: name.to_string(),
            components: comps,
            values,
        });
    }
    Ok(out)
}

/// Attribute arrays following a `POINT_DATA` or `CELL_DATA` header, up to
/// the next dataset-level keyword.
fn attributes(t: &mut Tokens, n: usize, owner: &str) -> Result<Vec<VtkField>> {
    let mut out = Vec::new();
    while let Some(kw) = t.peek() {
        let upper = kw.to_ascii_uppercase();
        let section = format!("{owner} {upper}");
        match upper.as_str() {
            "SCALARS" => {
                t.next(&section)?;
                let name = t.next(&section)?.1.to_string();
                let _dtype = t.next(&section)?;
                let mut comps = 1;
                if t.peek().is_some_and(|s| s.parse::<usize>().is_ok()) {
                    comps = t.usize(&section, "component count")?;
                }
                if t.peek().is_some_and(|s| is_keyword(s, "LOOKUP_TABLE")) {
                    t.next(&section)?;
                    t.next(&section)?;
                }
                let values = t.floats(n * comps, &format!("{section} {name}"))?;
                out.push(VtkField { name, components: comps, values });
            }
            "VECTORS" | "NORMALS" => {
                t.next(&section)?;
                let name = t.next(&section)?.1.to_string();
                let _dtype = t.next(&section)?;
                let values = t.floats(3 * n, &format!("{section} {name}"))?;
                out.push(VtkField { name, components: 3, values });
            }
            "TENSORS" => {
                t.next(&section)?;
                let name = t.next(&section)?.1.to_string();
                let _dtype = t.next(&section)?;
                let values = t.floats(9 * n, &format!("{section} {name}"))?;
                out.push(VtkField { name, components: 9, values });
            }
            "TEXTURE_COORDINATES" => {
                t.next(&section)?;
                let name = t.next(&section)?.1.to_string();
                let dim = t.usize(&section, "texture dimension")?;
                let _dtype = t.next(&section)?;
                let values = t.floats(dim * n, &format!("{section} {name}"))?;
                out.push(VtkField { name, components: dim, values });
            }
            "COLOR_SCALARS" => {
                t.next(&section)?;
                let _name = t.next(&section)?;
                let k = t.usize(&section, "value count")?;
                t.floats(k * n, &section)?;
            }
            "LOOKUP_TABLE" => {
                t.next(&section)?;
                let _name = t.next(&section)?;
                let k = t.usize(&section, "table size")?;
                t.floats(4 * k, &section)?;
            }
            "FIELD" => {
                t.next(&section)?;
                out.extend(field_arrays(t, &section, Some(n))?);
            }
            "METADATA" => {
                t.next(&section)?;
                t.skip_block();
            }
            _ => break,
        }
    }
    Ok(out)
}

#[derive(Default)]
struct Structured {
    dims: Option<[usize; 3]>,
    origin: [f64; 3],
    spacing: [f64; 3],
}

fn structured_grid(s: &Structured) -> Result<Grid> {
    let dims = s.dims.ok_or_else(|| Error::invalid("STRUCTURED_POINTS without DIMENSIONS"))?;
    let n = dims.iter().product::<usize>();
    let mut points = Vec::with_capacity(n);
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let idx = [i, j, k];
                points.push(std::array::from_fn(|a| s.origin[a] + idx[a] as f64 * s.spacing[a]));
            }
        }
    }
    let active: Vec<usize> = (0..3).filter(|&a| dims[a] > 1).collect();
    let id = |i: usize, j: usize, k: usize| (k * dims[1] + j) * dims[0] + i;
    let step = |corner: [usize; 3], a: usize| {
        let mut c = corner;
        c[active[a]] += 1;
        c
    };
    let at = |c: [usize; 3]| id(c[0], c[1], c[2]);
    let mut cells = Vec::new();
    let ranges: [usize; 3] = std::array::from_fn(|a| if dims[a] > 1 { dims[a] - 1 } else { 1 });
    for k in 0..ranges[2] {
        for j in 0..ranges[1] {
            for i in 0..ranges[0] {
                let c0 = [i, j, k];
                let cell = match active.len() {
                    1 => Cell::new(cell_type::LINE, vec![at(c0), at(step(c0, 0))]),
                    2 => {
                        let c1 = step(c0, 0);
                        let c3 = step(c0, 1);
                        let c2 = step(c1, 1);
                        Cell::new(cell_type::QUAD, vec![at(c0), at(c1), at(c2), at(c3)])
                    }
                    3 => {
                        let base = [c0, step(c0, 0), step(step(c0, 0), 1), step(c0, 1)];
                        let mut nodes: Vec<usize> = base.iter().map(|&c| at(c)).collect();
                        nodes.extend(base.iter().map(|&c| at(step(c, 2))));
                        Cell::new(cell_type::HEXAHEDRON, nodes)
                    }
                    _ => continue,
                };
                cells.push(cell);
            }
        }
    }
    let gdim = active.len().max(1);
    if cells.is_empty() {
        return Grid::new(points, cells, vec![1.0; n], gdim);
    }
    Grid::from_cells(points, cells, gdim)
}

fn spatial_dim(points: &[[f64; 3]], cells: &[Cell]) -> usize {
    let top = cells.iter().filter_map(Cell::dimension).max().unwrap_or(0);
    let coords = (0..3).filter(|&a| points.iter().any(|p| p[a] != 0.0)).max().map_or(1, |a| a + 1);
    top.max(coords).clamp(1, 3)
}

/// Parses legacy VTK text. `path` is only used in error messages.
pub fn parse_vtk(text: &str, path: &Path) -> Result<VtkDataset> {
    let lines: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l)).collect();
    let header_err = |line: usize, message: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        section: "header".into(),
        message: message.into(),
    };
    if lines.len() < 3 {
        return Err(header_err(lines.len() + 1, "file ends inside the header"));
    }
    if !lines[0].1.trim_start().to_ascii_lowercase().starts_with("# vtk datafile") {
        return Err(header_err(1, "missing `# vtk DataFile Version` line"));
    }
    let title = lines[1].1.trim().to_string();
    match lines[2].1.trim().to_ascii_uppercase().as_str() {
        "ASCII" => {}
        "BINARY" => return Err(Error::Unsupported(format!("{}: binary legacy VTK", path.display()))),
        other => return Err(header_err(3, &format!("expected ASCII or BINARY, found `{other}`"))),
    }

    let mut t = Tokens::new(path, &lines[3..]);
    let (line, kw) = t.next("DATASET")?;
    if !is_keyword(kw, "DATASET") {
        return Err(t.error(line, "DATASET", format!("expected DATASET, found `{kw}`")));
    }
    let (line, kind) = t.next("DATASET")?;
    let kind = kind.to_ascii_uppercase();
    if kind != "UNSTRUCTURED_GRID" && kind != "STRUCTURED_POINTS" {
        return Err(t.error(line, "DATASET", format!("dataset type {kind} is not supported")));
    }

    let mut points: Option<Vec<[f64; 3]>> = None;
    let mut cells: Option<Vec<Vec<usize>>> = None;
    let mut types: Option<(usize, Vec<usize>)> = None;
    let mut structured = Structured {
        spacing: [1.0; 3],
        ..Default::default()
    };
    let mut point_data: Option<(usize, usize, Vec<VtkField>)> = None;
    let mut cell_data_line = None;

    while let Some(kw) = t.peek() {
        let line = t.line();
        let upper = kw.to_ascii_uppercase();
        t.next(&upper)?;
        match upper.as_str() {
            "POINTS" => {
                let n = t.usize("POINTS", "point count")?;
                let _dtype = t.next("POINTS")?;
                let flat = t.floats(3 * n, "POINTS")?;
                points = Some(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect());
            }
            "CELLS" => {
                let a = t.usize("CELLS", "cell count")?;
                let b = t.usize("CELLS", "connectivity size")?;
                if t.peek().is_some_and(|s| is_keyword(s, "OFFSETS")) {
                    t.next("CELLS OFFSETS")?;
                    t.next("CELLS OFFSETS")?;
                    let offsets = t.ints(a, "CELLS OFFSETS")?;
                    let (cl, ck) = t.next("CELLS CONNECTIVITY")?;
                    if !is_keyword(ck, "CONNECTIVITY") {
                        return Err(t.error(cl, "CELLS", format!("expected CONNECTIVITY, found `{ck}`")));
                    }
                    t.next("CELLS CONNECTIVITY")?;
                    let conn = t.ints(b, "CELLS CONNECTIVITY")?;
                    if a == 0 || offsets[0] != 0 || offsets[a - 1] != b || offsets.windows(2).any(|w| w[1] < w[0]) {
                        return Err(t.error(line, "CELLS", "offsets do not describe the connectivity array"));
                    }
                    cells = Some(offsets.windows(2).map(|w| conn[w[0]..w[1]].to_vec()).collect());
                } else {
                    let flat = t.ints(b, "CELLS")?;
                    let mut list = Vec::with_capacity(a);
                    let mut k = 0;
                    while k < flat.len() {
                        let m = flat[k];
                        if k + 1 + m > flat.len() {
                            return Err(t.error(line, "CELLS", "cell list overruns the declared size"));
                        }
                        list.push(flat[k + 1..k + 1 + m].to_vec());
                        k += 1 + m;
                    }
                    if list.len() != a {
                        return Err(t.error(line, "CELLS", format!("declared {a} cells, found {}", list.len())));
                    }
                    cells = Some(list);
                }
            }
            "CELL_TYPES" => {
                let n = t.usize("CELL_TYPES", "cell count")?;
                types = Some((line, t.ints(n, "CELL_TYPES")?));
            }
            "DIMENSIONS" => {
                let d = t.ints(3, "DIMENSIONS")?;
                if d.contains(&0) {
                    return Err(t.error(line, "DIMENSIONS", "dimensions must be positive"));
                }
                structured.dims = Some([d[0], d[1], d[2]]);
            }
            "SPACING" | "ASPECT_RATIO" => {
                let s = t.floats(3, &upper)?;
                structured.spacing = [s[0], s[1], s[2]];
            }
            "ORIGIN" => {
                let o = t.floats(3, "ORIGIN")?;
                structured.origin = [o[0], o[1], o[2]];
            }
            "POINT_DATA" => {
                let n = t.usize("POINT_DATA", "point count")?;
                let fields = attributes(&mut t, n, "POINT_DATA")?;
                let entry = point_data.get_or_insert((line, n, Vec::new()));
                entry.2.extend(fields);
            }
            "CELL_DATA" => {
                let n = t.usize("CELL_DATA", "cell count")?;
                attributes(&mut t, n, "CELL_DATA")?;
                cell_data_line.get_or_insert(line);
            }
            "METADATA" => t.skip_block(),
            "FIELD" => {
                // dataset-level arrays are not attached to points
                field_arrays(&mut t, "FIELD", None)?;
            }
            _ => return Err(t.error(line, "DATASET", format!("unexpected keyword `{kw}`"))),
        }
    }

    let grid = if kind == "STRUCTURED_POINTS" {
        structured_grid(&structured)?
    } else {
        let points = points.ok_or_else(|| t.error(t.last_line + 1, "POINTS", "no POINTS section"))?;
        let cells = match (cells, types) {
            (None, None) => Vec::new(),
            (Some(c), Some((tl, ty))) => {
                if c.len() != ty.len() {
                    return Err(t.error(tl, "CELL_TYPES", format!("{} types for {} cells", ty.len(), c.len())));
                }
                let mut out = Vec::with_capacity(c.len());
                for (nodes, k) in c.into_iter().zip(ty) {
                    let kind = u8::try_from(k).map_err(|_| t.error(tl, "CELL_TYPES", format!("cell type {k} out of range")))?;
                    out.push(Cell::new(kind, nodes));
                }
                out
            }
            (Some(_), None) => return Err(t.error(t.last_line + 1, "CELL_TYPES", "CELLS without CELL_TYPES")),
            (None, Some((tl, _))) => return Err(t.error(tl, "CELL_TYPES", "CELL_TYPES without CELLS")),
        };
        let gdim = spatial_dim(&points, &cells);
        Grid::from_cells(points, cells, gdim)?
    };

    let point_data = match point_data {
        Some((line, n, fields)) => {
            if n != grid.len() {
                return Err(t.error(line, "POINT_DATA", format!("{n} values declared for {} points", grid.len())));
            }
            fields
        }
        None => {
            if let Some(line) = cell_data_line {
                return Err(t.error(line, "CELL_DATA", "file carries cell data only; point data is required"));
            }
            Vec::new()
        }
    };
    Ok(VtkDataset {
        title,
        grid,
        point_data,
    })
}

pub fn read_vtk(path: impl AsRef<Path>) -> Result<VtkDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vtk(&text, path)
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Unstructured-grid legacy VTK text with the given point data.
pub fn write_vtk(grid: &Grid, title: &str, fields: &[VtkField]) -> Result<String> {
    use std::fmt::Write;
    for f in fields {
        if f.components == 0 || f.values.len() != f.components * grid.len() {
            return Err(Error::DimensionMismatch {
                what: "VTK point data values",
                expected: f.components.max(1) * grid.len(),
                found: f.values.len(),
            });
        }
        if f.name.split_whitespace().count() != 1 {
            return Err(Error::invalid(format!("VTK array name `{}` must be one word", f.name)));
        }
    }
    let mut s = String::new();
    let title: String = title.chars().map(|c| if c == '\n' || c == '\r' { ' ' } else { c }).collect();
    writeln!(s, "# vtk DataFile Version 3.0").unwrap();
    writeln!(s, "{}", if title.trim().is_empty() { "romkit" } else { title.trim() }).unwrap();
    writeln!(s, "ASCII\nDATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(s, "POINTS {} double", grid.len()).unwrap();
    for p in grid.points() {
        writeln!(s, "{} {} {}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2])).unwrap();
    }
    let size: usize = grid.cells().iter().map(|c| c.nodes.len() + 1).sum();
    writeln!(s, "CELLS {} {size}", grid.cells().len()).unwrap();
    for c in grid.cells() {
        let nodes: Vec<String> = c.nodes.iter().map(usize::to_string).collect();
        writeln!(s, "{} {}", c.nodes.len(), nodes.join(" ")).unwrap();
    }
    writeln!(s, "CELL_TYPES {}", grid.cells().len()).unwrap();
    for c in grid.cells() {
        writeln!(s, "{}", c.kind).unwrap();
    }
    if !fields.is_empty() {
        writeln!(s, "POINT_DATA {}", grid.len()).unwrap();
    }
    for f in fields {
        if f.components == 3 {
            writeln!(s, "VECTORS {} double", f.name).unwrap();
        } else {
            writeln!(s, "SCALARS {} double {}\nLOOKUP_TABLE default", f.name, f.components).unwrap();
        }
        for row in f.values.chunks_exact(f.components) {
            let vals: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            writeln!(s, "{}", vals.join(" ")).unwrap();
        }
    }
    Ok(s)
}

pub fn write_vtk_file(path: impl AsRef<Path>, grid: &Grid, title: &str, fields: &[VtkField]) -> Result<()> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let text = write_vtk(grid, title, fields)?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
