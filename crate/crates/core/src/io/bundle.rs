//! Native bundle: `<name>.manifest` (JSON) next to `<name>.bin` (raw
//! little-endian `f64`, row-major, one row per entry).
//!
//! Writing and reading back is bit-exact. Grids, bases and interpolation
//! models are stored as bundles too, with their extra data in the manifest
//! attributes.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grid::{Cell, Grid};
use crate::interpolation::{EimModel, GreedyStatus, Selection};
use crate::reduction::{ReducedBasis, Weighting};
use crate::sensors::{sensors_csv, sensors_from_csv};
use crate::snapshots::{ParameterTable, SnapshotCollection};

pub const FORMAT: &str = "romkit-bundle";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    /// What the rows hold: `snapshots`, `grid`, `basis`, `eim`, ...
    pub kind: String,
    pub varname: String,
    pub dofs: usize,
    pub components: usize,
    pub count: usize,
    pub dtype: String,
    pub endianness: String,
    pub layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<ParameterTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singular_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub manifest: Manifest,
    pub data: SnapshotCollection,
}

impl Bundle {
    pub fn new(kind: &str, data: SnapshotCollection) -> Self {
        let manifest = Manifest {
            format: FORMAT.into(),
            version: VERSION,
            kind: kind.into(),
            varname: data.varname().to_string(),
            dofs: data.dofs(),
            components: data.components(),
            count: data.len(),
            dtype: "f64".into(),
            endianness: "little".into(),
            layout: "row-major".into(),
            parameters: None,
            singular_values: None,
            attributes: BTreeMap::new(),
        };
        Self { manifest, data }
    }

    pub fn attribute<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self
            .manifest
            .attributes
            .get(key)
            .ok_or_else(|| Error::invalid(format!("bundle attribute `{key}` is missing")))?;
        Ok(serde_json::from_value(v.clone())?)
    }

    pub fn set_attribute<T: Serialize>(&mut self, key: &str, value: &T) -> Result<()> {
        self.manifest.attributes.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.manifest.kind != kind {
            return Err(Error::invalid(format!("expected a `{kind}` bundle, found `{}`", self.manifest.kind)));
        }
        Ok(())
    }
}

/// `(manifest, payload)` paths for a base name; a trailing `.manifest` or
/// `.bin` on `base` is ignored.
pub fn bundle_paths(base: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let base = base.as_ref();
    let stem: PathBuf = match base.extension().and_then(|e| e.to_str()) {
        Some("manifest") | Some("bin") => base.with_extension(""),
        _ => base.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut s: OsString = stem.clone().into_os_string();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".manifest"), with(".bin"))
}

pub fn write_bundle(base: impl AsRef<Path>, bundle: &Bundle) -> Result<()> {
    let (mpath, bpath) = bundle_paths(base);
    let m = &bundle.manifest;
    if m.count != bundle.data.len() || m.dofs != bundle.data.dofs() || m.components != bundle.data.components() {
        return Err(Error::invalid("manifest does not describe the bundle data"));
    }
    if let Some(dir) = mpath.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(m)?;
    text.push('\n');
    std::fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
    let mut payload = Vec::with_capacity(m.count * m.dofs * 8);
    for row in bundle.data.iter() {
        for v in row {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(&bpath, payload).map_err(|e| Error::io(&bpath, e))
}

fn validate(m: &Manifest) -> Result<()> {
    let bad = |msg: String| Err(Error::invalid(format!("bundle manifest: {msg}")));
    if m.format != FORMAT {
        return bad(format!("format `{}` is not `{FORMAT}`", m.format));
    }
    if m.version != VERSION {
        return bad(format!("version {} is not supported", m.version));
    }
    if m.dtype != "f64" || m.endianness != "little" || m.layout != "row-major" {
        return bad(format!("payload encoding {}/{}/{} is not f64/little/row-major", m.dtype, m.endianness, m.layout));
    }
    if m.components == 0 || !m.dofs.is_multiple_of(m.components) {
        return bad(format!("{} dofs do not split into {} components", m.dofs, m.components));
    }
    if let Some(p) = &m.parameters {
        if p.len() != m.count {
            return bad(format!("{} parameter rows for {} entries", p.len(), m.count));
        }
        if p.rows.iter().any(|r| r.len() != p.p) {
            return bad("parameter rows of inconsistent length".into());
        }
    }
    Ok(())
}

pub fn read_bundle(base: impl AsRef<Path>) -> Result<Bundle> {
    let (mpath, bpath) = bundle_paths(base);
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    validate(&manifest)?;
    let expected = (manifest.count as u64) * (manifest.dofs as u64) * 8;
    let found = std::fs::metadata(&bpath).map_err(|e| Error::io(&bpath, e))?.len();
    if found != expected {
        return Err(Error::SizeMismatch { expected, found });
    }
    let bytes = std::fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: bytes.len() as u64,
        });
    }
    let mut data = SnapshotCollection::new(manifest.varname.clone(), manifest.dofs, manifest.components)?;
    if manifest.dofs > 0 {
        for row in bytes.chunks_exact(manifest.dofs * 8) {
            data.push(row.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())?;
        }
    } else {
        for _ in 0..manifest.count {
            data.push(Vec::new())?;
        }
    }
    Ok(Bundle { manifest, data })
}

pub fn write_snapshots(base: impl AsRef<Path>, snaps: &SnapshotCollection, params: Option<&ParameterTable>) -> Result<()> {
    if let Some(p) = params {
        if p.len() != snaps.len() {
            return Err(Error::invalid(format!("{} parameter rows for {} snapshots", p.len(), snaps.len())));
        }
    }
    let mut b = Bundle::new("snapshots", snaps.clone());
    b.manifest.parameters = params.cloned();
    write_bundle(base, &b)
}

pub fn read_snapshots(base: impl AsRef<Path>) -> Result<(SnapshotCollection, Option<ParameterTable>)> {
    let b = read_bundle(base)?;
    b.expect_kind("snapshots")?;
    Ok((b.data, b.manifest.parameters))
}

/// Rows are `[x, y, z, weight]` per point; cells and `gdim` go in the manifest.
pub fn write_grid(base: impl AsRef<Path>, grid: &Grid) -> Result<()> {
    let rows: Vec<Vec<f64>> = grid
        .points()
        .iter()
        .zip(grid.weights())
        .map(|(p, w)| vec![p[0], p[1], p[2], *w])
        .collect();
    let data = SnapshotCollection::from_entries("grid", 4, rows).or_else(|_| SnapshotCollection::new("grid", 4, 4))?;
    let mut b = Bundle::new("grid", data);
    b.set_attribute("gdim", &grid.gdim())?;
    b.set_attribute("cells", &grid.cells())?;
    write_bundle(base, &b)
}

pub fn read_grid(base: impl AsRef<Path>) -> Result<Grid> {
    let b = read_bundle(base)?;
    b.expect_kind("grid")?;
    if b.manifest.dofs != 4 {
        return Err(Error::invalid("grid bundle rows must hold x, y, z and weight"));
    }
    let gdim: usize = b.attribute("gdim")?;
    let cells: Vec<Cell> = b.attribute("cells")?;
    let points = b.data.iter().map(|r| [r[0], r[1], r[2]]).collect();
    let weights = b.data.iter().map(|r| r[3]).collect();
    Grid::new(points, cells, weights, gdim)
}

pub fn write_basis(base: impl AsRef<Path>, basis: &ReducedBasis) -> Result<()> {
    let data = SnapshotCollection::from_entries(basis.varname(), basis.components(), basis.modes().to_vec())
        .or_else(|_| SnapshotCollection::new(basis.varname(), 0, basis.components().max(1)))?;
    let mut b = Bundle::new("basis", data);
    b.manifest.singular_values = Some(basis.singular_values().to_vec());
    b.set_attribute("weighting", &basis.weighting().tag())?;
    write_bundle(base, &b)
}

/// A grid-weighted basis needs the grid it was built on.
pub fn read_basis(base: impl AsRef<Path>, grid: Option<&Grid>) -> Result<ReducedBasis> {
    let b = read_bundle(base)?;
    b.expect_kind("basis")?;
    let tag: String = b.attribute("weighting")?;
    let comps = b.manifest.components;
    let weighting = match tag.as_str() {
        "euclidean" => Weighting::Euclidean,
        "grid" => {
            let g = grid.ok_or_else(|| Error::invalid("a grid-weighted basis needs its grid"))?;
            Weighting::for_grid(g, comps)
        }
        other => return Err(Error::invalid(format!("unknown basis weighting `{other}`"))),
    };
    let sv = b.manifest.singular_values.clone().unwrap_or_default();
    ReducedBasis::from_parts(b.manifest.varname.clone(), comps, b.data.into_entries(), sv, weighting)
}

/// Magic functions as rows; sensors, training mean and greedy history in
/// the manifest.
pub fn write_eim(base: impl AsRef<Path>, model: &EimModel) -> Result<()> {
    let data = SnapshotCollection::from_entries(model.varname(), model.components(), model.magic_functions().to_vec())?;
    let mut b = Bundle::new("eim", data);
    b.set_attribute("sensors", &sensors_csv(model.sensors()))?;
    b.set_attribute("mean_coefficients", &model.mean_coefficients())?;
    b.set_attribute("max_abs_err", &model.max_abs_err())?;
    b.set_attribute("selection", &model.selection())?;
    b.set_attribute("status", &model.status())?;
    write_bundle(base, &b)
}

pub fn read_eim(base: impl AsRef<Path>, grid: &Grid) -> Result<EimModel> {
    let b = read_bundle(base)?;
    b.expect_kind("eim")?;
    let comps = b.manifest.components;
    let csv: String = b.attribute("sensors")?;
    let sensors = sensors_from_csv(grid, comps, &csv)?;
    let mean: Vec<f64> = b.attribute("mean_coefficients")?;
    let errs: Vec<f64> = b.attribute("max_abs_err")?;
    let selection: Vec<Selection> = b.attribute("selection")?;
    let status: GreedyStatus = b.attribute("status")?;
    EimModel::from_parts(b.manifest.varname.clone(), comps, b.data.into_entries(), sensors, mean)?
        .with_history(errs, selection, status)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Extent;
    use crate::interpolation::eim_fit;
    use crate::reduction::pod_fit;
    use crate::toy::{linspace, toy_dataset, ToyVariant};

    #[test]
    fn snapshots_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::image(6, 5, Extent::UNIT).unwrap();
        let (params, mut snaps) = toy_dataset(&g, &linspace(-5.0, 5.0, 7), ToyVariant::Snippet).unwrap();
        snaps.map_values(|v| v * std::f64::consts::PI);
        let base = dir.path().join("nested/toy.set");
        write_snapshots(&base, &snaps, Some(&params)).unwrap();
        let (back, p) = read_snapshots(dir.path().join("nested/toy.set.manifest")).unwrap();
        assert_eq!(p.unwrap(), params);
        for (a, b) in snaps.iter().zip(back.iter()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back, snaps);
    }

    #[test]
    fn empty_collection_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let snaps = SnapshotCollection::new("u", 12, 3).unwrap();
        write_snapshots(dir.path().join("e"), &snaps, None).unwrap();
        let (back, p) = read_snapshots(dir.path().join("e")).unwrap();
        assert_eq!(back, snaps);
        assert!(p.is_none());
    }

    #[test]
    fn corrupted_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let snaps = SnapshotCollection::from_entries("u", 1, vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let base = dir.path().join("c");
        write_snapshots(&base, &snaps, None).unwrap();
        let (_, bin) = bundle_paths(&base);
        let mut bytes = std::fs::read(&bin).unwrap();
        bytes.pop();
        std::fs::write(&bin, bytes).unwrap();
        assert!(matches!(
            read_snapshots(&base),
            Err(Error::SizeMismatch { expected: 32, found: 31 })
        ));
    }

    #[test]
    fn manifest_is_strict() {
        let dir = tempfile::tempdir().unwrap();
        let snaps = SnapshotCollection::from_entries("u", 1, vec![vec![1.0]]).unwrap();
        let base = dir.path().join("s");
        write_snapshots(&base, &snaps, None).unwrap();
        let (m, _) = bundle_paths(&base);
        let text = std::fs::read_to_string(&m).unwrap();
        std::fs::write(&m, text.replacen("\"dtype\"", "\"dtyp\"", 1)).unwrap();
        assert!(read_snapshots(&base).is_err());
        std::fs::write(&m, text.replacen("little", "big", 1)).unwrap();
        assert!(read_snapshots(&base).is_err());
    }

    #[test]
    fn models_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::image(8, 8, Extent::UNIT).unwrap();
        let (_, snaps) = toy_dataset(&g, &linspace(-2.0, 2.0, 12), ToyVariant::Snippet).unwrap();
        write_grid(dir.path().join("grid"), &g).unwrap();
        let g2 = read_grid(dir.path().join("grid")).unwrap();
        assert_eq!(g2, g);

        let basis = pod_fit(&snaps, &g, 5).unwrap();
        write_basis(dir.path().join("pod"), &basis).unwrap();
        assert_eq!(read_basis(dir.path().join("pod"), Some(&g2)).unwrap(), basis);
        assert!(read_basis(dir.path().join("pod"), None).is_err());
        assert!(read_grid(dir.path().join("pod")).is_err());

        let eim = eim_fit(&snaps, &g, 6).unwrap().model;
        write_eim(dir.path().join("eim"), &eim).unwrap();
        assert_eq!(read_eim(dir.path().join("eim"), &g2).unwrap(), eim);
    }
}
