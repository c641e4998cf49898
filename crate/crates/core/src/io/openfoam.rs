//! ASCII OpenFOAM cases: numeric time directories, `constant/polyMesh`, and
//! volume fields.
//!
//! Cells are the grid points: the grid is made of cell centres with cell
//! volumes as weights, and each field snapshot holds the `internalField`
//! values. Only reconstructed single-region cases are read.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::snapshots::SnapshotCollection;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Open,
    Close,
    BraceOpen,
    BraceClose,
    Semi,
}

struct Parser<'a> {
    path: &'a Path,
    toks: Vec<(usize, Tok)>,
    last_line: usize,
    pos: usize,
}

fn tokenize(text: &str) -> (Vec<(usize, Tok)>, usize) {
    let mut toks = Vec::new();
    let b = text.as_bytes();
    let mut i = 0;
    let mut line = 1;
    while i < b.len() {
        let c = b[i];
        match c {
            b'\n' => {
                line += 1;
                i += 1;
            }
            _ if c.is_ascii_whitespace() => i += 1,
            b'/' if b.get(i + 1) == Some(&b'/') => {
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if b.get(i + 1) == Some(&b'*') => {
                i += 2;
                while i < b.len() && !(b[i] == b'*' && b.get(i + 1) == Some(&b'/')) {
                    if b[i] == b'\n' {
                        line += 1;
                    }
                    i += 1;
                }
                i += 2;
            }
            b'"' => {
                let start = i + 1;
                i += 1;
                while i < b.len() && b[i] != b'"' {
                    if b[i] == b'\n' {
                        line += 1;
                    }
                    i += 1;
                }
                toks.push((line, Tok::Str(text[start..i.min(b.len())].to_string())));
                i += 1;
            }
            b'(' | b')' | b'{' | b'}' | b';' => {
                toks.push((
                    line,
                    match c {
                        b'(' => Tok::Open,
                        b')' => Tok::Close,
                        b'{' => Tok::BraceOpen,
                        b'}' => Tok::BraceClose,
                        _ => Tok::Semi,
                    },
                ));
                i += 1;
            }
            _ => {
                let start = i;
                while i < b.len() && !b[i].is_ascii_whitespace() && !b"(){};\"".contains(&b[i]) {
                    if b[i] == b'/' && matches!(b.get(i + 1), Some(b'/') | Some(b'*')) {
                        break;
                    }
                    i += 1;
                }
                toks.push((line, Tok::Word(text[start..i].to_string())));
            }
        }
    }
    (toks, line)
}

impl<'a> Parser<'a> {
    fn new(path: &'a Path, text: &str) -> Self {
        let (toks, last_line) = tokenize(text);
        Self {
            path,
            toks,
            last_line,
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
        self.toks.get(self.pos).map_or(self.last_line, |t| t.0)
    }

    fn next(&mut self, section: &str) -> Result<(usize, Tok)> {
        let t = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.error(self.last_line, section, "unexpected end of file"))?;
        self.pos += 1;
        Ok(t)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn expect(&mut self, want: Tok, section: &str) -> Result<()> {
        let (line, t) = self.next(section)?;
        if t != want {
            return Err(self.error(line, section, format!("expected {want:?}, found {t:?}")));
        }
        Ok(())
    }

    fn word(&mut self, section: &str) -> Result<(usize, String)> {
        match self.next(section)? {
            (line, Tok::Word(w)) => Ok((line, w)),
            (line, t) => Err(self.error(line, section, format!("expected a word, found {t:?}"))),
        }
    }

    fn number(&mut self, section: &str) -> Result<f64> {
        let (line, w) = self.word(section)?;
        w.parse().map_err(|_| self.error(line, section, format!("expected a number, found `{w}`")))
    }

    fn label(&mut self, section: &str) -> Result<usize> {
        let (line, w) = self.word(section)?;
        w.parse().map_err(|_| self.error(line, section, format!("expected a label, found `{w}`")))
    }

    /// Reads the `FoamFile { ... }` header, returning `(format, class)`.
    fn header(&mut self) -> Result<(String, String)> {
        let (line, w) = self.word("FoamFile")?;
        if w != "FoamFile" {
            return Err(self.error(line, "FoamFile", format!("expected FoamFile header, found `{w}`")));
        }
        self.expect(Tok::BraceOpen, "FoamFile")?;
        let (mut format, mut class) = (String::from("ascii"), String::new());
        loop {
            match self.next("FoamFile")? {
                (_, Tok::BraceClose) => break,
                (_, Tok::Word(key)) => {
                    let mut value = String::new();
                    loop {
                        match self.next("FoamFile")? {
                            (_, Tok::Semi) => break,
                            (_, Tok::Word(v)) | (_, Tok::Str(v)) => {
                                if value.is_empty() {
                                    value = v;
                                }
                            }
                            (l, t) => return Err(self.error(l, "FoamFile", format!("unexpected {t:?}"))),
                        }
                    }
                    match key.as_str() {
                        "format" => format = value,
                        "class" => class = value,
                        _ => {}
                    }
                }
                (l, t) => return Err(self.error(l, "FoamFile", format!("unexpected {t:?}"))),
            }
        }
        if format != "ascii" {
            return Err(Error::Unsupported(format!("{}: {format} OpenFOAM format", self.path.display())));
        }
        Ok((format, class))
    }

    /// `N ( item ... )` or the compact uniform form `N { item }`.
    fn list<T: Clone>(&mut self, section: &str, mut item: impl FnMut(&mut Self) -> Result<T>) -> Result<Vec<T>> {
        let line = self.line();
        let n = self.label(section)?;
        match self.next(section)? {
            (_, Tok::Open) => {
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    if self.peek() == Some(&Tok::Close) {
                        return Err(self.error(self.line(), section, format!("list declares {n} entries, found {}", out.len())));
                    }
                    out.push(item(self)?);
                }
                let (l, t) = self.next(section)?;
                if t != Tok::Close {
                    return Err(self.error(l, section, format!("list declares {n} entries but continues past them (started at line {line})")));
                }
                Ok(out)
            }
            (_, Tok::BraceOpen) => {
                let v = item(self)?;
                self.expect(Tok::BraceClose, section)?;
                Ok(vec![v; n])
            }
            (l, t) => Err(self.error(l, section, format!("expected list body, found {t:?}"))),
        }
    }

    fn tuple(&mut self, k: usize, section: &str) -> Result<Vec<f64>> {
        self.expect(Tok::Open, section)?;
        let v = (0..k).map(|_| self.number(section)).collect::<Result<Vec<_>>>()?;
        self.expect(Tok::Close, section)?;
        Ok(v)
    }

    /// Advances past the top-level entry `key`, leaving the cursor on its value.
    fn seek_entry(&mut self, key: &str, section: &str) -> Result<()> {
        let mut depth = 0usize;
        while let Some((_, t)) = self.toks.get(self.pos) {
            match t {
                Tok::Open | Tok::BraceOpen => depth += 1,
                Tok::Close | Tok::BraceClose => depth = depth.saturating_sub(1),
                Tok::Word(w) if depth == 0 && w == key => {
                    self.pos += 1;
                    return Ok(());
                }
                _ => {}
            }
            self.pos += 1;
        }
        Err(self.error(self.last_line, section, format!("no `{key}` entry")))
    }
}

fn components_of(type_name: &str) -> Option<usize> {
    match type_name {
        "scalar" => Some(1),
        "vector" => Some(3),
        "symmTensor" => Some(6),
        "tensor" => Some(9),
        "sphericalTensor" => Some(1),
        _ => None,
    }
}

/// Values of the `internalField` entry: `(components, flat values)`; a
/// uniform value is expanded to `n_cells` entries.
pub fn parse_internal_field(text: &str, path: &Path, n_cells: usize) -> Result<(usize, Vec<f64>)> {
    let mut p = Parser::new(path, text);
    p.header()?;
    const S: &str = "internalField";
    p.seek_entry(S, S)?;
    let (line, kind) = p.word(S)?;
    let (comps, values) = match kind.as_str() {
        "uniform" => {
            let value = if p.peek() == Some(&Tok::Open) {
                p.next(S)?;
                let mut v = Vec::new();
                while p.peek() != Some(&Tok::Close) {
                    v.push(p.number(S)?);
                }
                p.next(S)?;
                v
            } else {
                vec![p.number(S)?]
            };
            if value.is_empty() {
                return Err(p.error(line, S, "empty uniform value"));
            }
            let comps = value.len();
            (comps, value.iter().copied().cycle().take(comps * n_cells).collect())
        }
        "nonuniform" => {
            let (l, ty) = p.word(S)?;
            let inner = ty
                .strip_prefix("List<")
                .and_then(|s| s.strip_suffix('>'))
                .ok_or_else(|| p.error(l, S, format!("expected List<type>, found `{ty}`")))?;
            let comps = components_of(inner).ok_or_else(|| p.error(l, S, format!("unsupported list type `{inner}`")))?;
            let rows = if comps == 1 {
                p.list(S, |p| p.number(S).map(|v| vec![v]))?
            } else {
                p.list(S, |p| p.tuple(comps, S))?
            };
            if rows.len() != n_cells {
                return Err(p.error(l, S, format!("{} values for {n_cells} cells", rows.len())));
            }
            (comps, rows.concat())
        }
        other => return Err(p.error(line, S, format!("expected uniform or nonuniform, found `{other}`"))),
    };
    p.expect(Tok::Semi, S)?;
    Ok((comps, values))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn mesh_list<T: Clone>(path: &Path, item: impl FnMut(&mut Parser) -> Result<T>) -> Result<Vec<T>> {
    let text = read(path)?;
    let mut p = Parser::new(path, &text);
    let (_, class) = p.header()?;
    if class == "faceCompactList" {
        return Err(Error::Unsupported(format!("{}: faceCompactList layout", path.display())));
    }
    let section = path.file_name().and_then(|s| s.to_str()).unwrap_or("list").to_string();
    p.list(&section, item)
}

type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn axpy(acc: &mut Vec3, s: f64, x: Vec3) {
    for k in 0..3 {
        acc[k] += s * x[k];
    }
}

/// Face centre and area vector from a triangle fan around the vertex average.
fn face_geometry(points: &[Vec3], face: &[usize]) -> (Vec3, Vec3) {
    let p = |k: usize| points[face[k]];
    let n = face.len();
    if n == 3 {
        let c = std::array::from_fn(|k| (p(0)[k] + p(1)[k] + p(2)[k]) / 3.0);
        let s = cross(sub(p(1), p(0)), sub(p(2), p(0)));
        return (c, s.map(|v| 0.5 * v));
    }
    let mut est = [0.0; 3];
    for k in 0..n {
        axpy(&mut est, 1.0 / n as f64, p(k));
    }
    let (mut sum_n, mut sum_a, mut sum_ac) = ([0.0; 3], 0.0, [0.0; 3]);
    for k in 0..n {
        let (a, b) = (p(k), p((k + 1) % n));
        let c: Vec3 = std::array::from_fn(|d| a[d] + b[d] + est[d]);
        let nv = cross(sub(b, a), sub(est, a));
        let area = dot(nv, nv).sqrt();
        axpy(&mut sum_n, 1.0, nv);
        sum_a += area;
        axpy(&mut sum_ac, area, c);
    }
    if sum_a < 1e-300 {
        return (est, [0.0; 3]);
    }
    (sum_ac.map(|v| v / (3.0 * sum_a)), sum_n.map(|v| 0.5 * v))
}

/// Cell centres and volumes by pyramid decomposition about each cell's
/// face-centre average.
pub fn cell_geometry(points: &[Vec3], faces: &[Vec<usize>], owner: &[usize], neighbour: &[usize]) -> Result<(Vec<Vec3>, Vec<f64>)> {
    if owner.len() != faces.len() || neighbour.len() > faces.len() {
        return Err(Error::invalid(format!(
            "mesh has {} faces, {} owners and {} neighbours",
            faces.len(),
            owner.len(),
            neighbour.len()
        )));
    }
    if let Some(bad) = faces.iter().flatten().find(|&&i| i >= points.len()) {
        return Err(Error::invalid(format!("face references point {bad}, mesh has {} points", points.len())));
    }
    let n_cells = owner.iter().chain(neighbour).max().map_or(0, |m| m + 1);
    let geo: Vec<(Vec3, Vec3)> = faces.iter().map(|f| face_geometry(points, f)).collect();

    let mut est = vec![[0.0; 3]; n_cells];
    let mut count = vec![0usize; n_cells];
    let touch = |f: usize| std::iter::once(owner[f]).chain(neighbour.get(f).copied());
    for f in 0..faces.len() {
        for c in touch(f) {
            axpy(&mut est[c], 1.0, geo[f].0);
            count[c] += 1;
        }
    }
    for (e, &k) in est.iter_mut().zip(&count) {
        if k == 0 {
            return Err(Error::invalid("mesh has a cell without faces"));
        }
        *e = e.map(|v| v / k as f64);
    }

    let mut centre = vec![[0.0; 3]; n_cells];
    let mut volume = vec![0.0; n_cells];
    for f in 0..faces.len() {
        let (fc, sf) = geo[f];
        for (c, sign) in std::iter::once((owner[f], 1.0)).chain(neighbour.get(f).map(|&c| (c, -1.0))) {
            let pyr3 = sign * dot(sf, sub(fc, est[c]));
            let pc: Vec3 = std::array::from_fn(|d| 0.75 * fc[d] + 0.25 * est[c][d]);
            axpy(&mut centre[c], pyr3, pc);
            volume[c] += pyr3;
        }
    }
    for c in 0..n_cells {
        if !(volume[c] > 0.0) {
            return Err(Error::Numerical(format!("cell {c} has nonpositive volume; check face orientation")));
        }
        centre[c] = centre[c].map(|v| v / volume[c]);
        volume[c] /= 3.0;
    }
    Ok((centre, volume))
}

#[derive(Debug, Clone)]
pub struct OpenFoamCase {
    root: PathBuf,
    skip_zero_time: bool,
}

impl OpenFoamCase {
    pub fn new(root: impl Into<PathBuf>, skip_zero_time: bool) -> Self {
        Self {
            root: root.into(),
            skip_zero_time,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Numeric time directories in ascending order, as `(name, value)`.
    pub fn list_times(&self) -> Result<Vec<(String, f64)>> {
        let entries = std::fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let mut times = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.root, e))?;
            if !entry.path().is_dir() {
                continue;
            }
            let Some(name) = entry.file_name().to_str().map(str::to_string) else {
                continue;
            };
            let Ok(t) = name.parse::<f64>() else {
                continue;
            };
            if !t.is_finite() || (self.skip_zero_time && t == 0.0) {
                continue;
            }
            times.push((name, t));
        }
        times.sort_by(|a, b| a.1.total_cmp(&b.1));
        if let Some(w) = times.windows(2).find(|w| w[0].1 == w[1].1) {
            return Err(Error::invalid(format!(
                "time directories `{}` and `{}` denote the same time",
                w[0].0, w[1].0
            )));
        }
        if times.is_empty() {
            return Err(Error::invalid(format!("{}: no time directories", self.root.display())));
        }
        Ok(times)
    }

    fn mesh_dir(&self) -> PathBuf {
        self.root.join("constant").join("polyMesh")
    }

    fn owners(&self) -> Result<(Vec<usize>, Vec<usize>)> {
        let dir = self.mesh_dir();
        let owner = mesh_list(&dir.join("owner"), |p| p.label("owner"))?;
        let neighbour = mesh_list(&dir.join("neighbour"), |p| p.label("neighbour"))?;
        Ok((owner, neighbour))
    }

    pub fn n_cells(&self) -> Result<usize> {
        let (owner, neighbour) = self.owners()?;
        Ok(owner.iter().chain(&neighbour).max().map_or(0, |m| m + 1))
    }

    /// Grid of cell centres weighted by cell volumes.
    pub fn read_grid(&self) -> Result<Grid> {
        let dir = self.mesh_dir();
        let points: Vec<Vec3> = mesh_list(&dir.join("points"), |p| p.tuple(3, "points").map(|v| [v[0], v[1], v[2]]))?;
        let faces = mesh_list(&dir.join("faces"), |p| p.list("faces", |p| p.label("faces")))?;
        let (owner, neighbour) = self.owners()?;
        let (centres, volumes) = cell_geometry(&points, &faces, &owner, &neighbour)?;
        Grid::new(centres, Vec::new(), volumes, 3)
    }

    /// Regular files in a time directory, sorted.
    pub fn fields_at(&self, time: &str) -> Result<Vec<String>> {
        let dir = self.root.join(time);
        let mut names: Vec<String> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .filter_map(|e| e.file_name().to_str().map(str::to_string))
            .collect();
        names.sort();
        Ok(names)
    }

    /// One snapshot per time directory, plus the time values.
    pub fn import_field(&self, name: &str) -> Result<(SnapshotCollection, Vec<f64>)> {
        let times = self.list_times()?;
        let n_cells = self.n_cells()?;
        if !times.iter().any(|(t, _)| self.root.join(t).join(name).is_file()) {
            let mut available: Vec<String> = Vec::new();
            for (t, _) in &times {
                available.extend(self.fields_at(t)?);
            }
            available.sort();
            available.dedup();
            return Err(Error::MissingField {
                name: name.to_string(),
                available,
            });
        }
        let mut snaps: Option<SnapshotCollection> = None;
        let mut values = Vec::with_capacity(times.len());
        for (t, v) in &times {
            let path = self.root.join(t).join(name);
            if !path.is_file() {
                if path.with_extension("gz").is_file() || self.root.join(t).join(format!("{name}.gz")).is_file() {
                    return Err(Error::Unsupported(format!("{}: compressed field files", path.display())));
                }
                return Err(Error::invalid(format!("field `{name}` is missing at time {t}")));
            }
            let (comps, data) = parse_internal_field(&read(&path)?, &path, n_cells)?;
            let s = snaps.get_or_insert(SnapshotCollection::new(name, n_cells * comps, comps)?);
            if s.components() != comps {
                return Err(Error::Parse {
                    path,
                    line: 0,
                    section: "internalField".into(),
                    message: format!("{comps} components at time {t}, earlier times have {}", s.components()),
                });
            }
            s.push(data)?;
            values.push(*v);
        }
        Ok((snaps.expect("at least one time"), values))
    }
}
