//! Snapshot storage, parameter tables and dataset partitioning.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::Grid;

/// Ordered list of flattened fields sharing one layout.
///
/// Vector fields are interleaved per point: the components of point `i`
/// occupy `entries[k][i * components .. (i + 1) * components]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotCollection {
    varname: String,
    dofs: usize,
    components: usize,
    entries: Vec<Vec<f64>>,
}

impl SnapshotCollection {
    pub fn new(varname: impl Into<String>, dofs: usize, components: usize) -> Result<Self> {
        if components == 0 || !dofs.is_multiple_of(components) {
            return Err(Error::invalid(format!(
                "dofs {dofs} is not a multiple of the component count {components}"
            )));
        }
        Ok(Self {
            varname: varname.into(),
            dofs,
            components,
            entries: Vec::new(),
        })
    }

    pub fn from_entries(
        varname: impl Into<String>,
        components: usize,
        entries: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let dofs = entries.first().map_or(0, Vec::len);
        let mut out = Self::new(varname, dofs, components)?;
        for e in entries {
            out.push(e)?;
        }
        Ok(out)
    }

    pub fn push(&mut self, entry: Vec<f64>) -> Result<()> {
        check_len("snapshot dofs", self.dofs, entry.len())?;
        self.entries.push(entry);
        Ok(())
    }

    pub fn varname(&self) -> &str {
        &self.varname
    }

    pub fn set_varname(&mut self, name: impl Into<String>) {
        self.varname = name.into();
    }

    pub fn dofs(&self) -> usize {
        self.dofs
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&[f64]> {
        self.entries.get(i).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.entries.iter().map(Vec::as_slice)
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<Vec<f64>> {
        self.entries
    }

    /// Checks that the layout fits `grid`.
    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        check_len("snapshot dofs vs grid", grid.len() * self.components, self.dofs)
    }

    /// Subset in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            varname: self.varname.clone(),
            dofs: self.dofs,
            components: self.components,
            entries: indices.iter().map(|&i| self.entries[i].clone()).collect(),
        }
    }

    /// Snapshot matrix with one column per snapshot (`dofs × len`).
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_iterator(self.dofs, self.len(), self.entries.iter().flatten().copied())
    }

    /// Inverse of [`to_matrix`](Self::to_matrix).
    pub fn from_matrix(varname: impl Into<String>, components: usize, m: &DMatrix<f64>) -> Result<Self> {
        let mut out = Self::new(varname, m.nrows(), components)?;
        for col in m.column_iter() {
            out.push(col.iter().copied().collect())?;
        }
        Ok(out)
    }

    /// Applies `f` to every value in place (e.g. a reference offset).
    pub fn map_values(&mut self, f: impl Fn(f64) -> f64) {
        for e in &mut self.entries {
            for v in e.iter_mut() {
                *v = f(*v);
            }
        }
    }
}

/// Parameter vectors μ aligned with a snapshot collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterTable {
    pub p: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ParameterTable {
    pub fn new(p: usize, names: Vec<String>) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("parameter dimension must be positive"));
        }
        if !names.is_empty() {
            check_len("parameter names", p, names.len())?;
        }
        Ok(Self {
            p,
            names,
            rows: Vec::new(),
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let p = rows.first().map_or(1, Vec::len);
        let mut t = Self::new(p, Vec::new())?;
        for r in rows {
            t.push(r)?;
        }
        Ok(t)
    }

    /// One-dimensional table, e.g. a time vector.
    pub fn scalar(values: &[f64]) -> Self {
        Self {
            p: 1,
            names: Vec::new(),
            rows: values.iter().map(|&v| vec![v]).collect(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        check_len("parameter row", self.p, row.len())?;
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            p: self.p,
            names: self.names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// Result of [`train_test_split`], with the original indices of each side.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train_params: ParameterTable,
    pub test_params: ParameterTable,
    pub train: SnapshotCollection,
    pub test: SnapshotCollection,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Number of test samples for a split: `round(test_size · n)`.
pub fn test_count(n: usize, test_size: f64) -> usize {
    (test_size * n as f64).round() as usize
}

/// Shuffled index partition: the first `round(test_size · n)` indices of a
/// seeded PCG64 permutation form the test set, the rest the training set.
pub fn split_indices(n: usize, test_size: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_size > 0.0 && test_size < 1.0) {
        return Err(Error::invalid(format!("test_size must lie in (0, 1), got {test_size}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Pcg64::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let k = test_count(n, test_size);
    let train = order.split_off(k);
    Ok((train, order))
}

pub fn train_test_split(
    params: &ParameterTable,
    snaps: &SnapshotCollection,
    test_size: f64,
    seed: u64,
) -> Result<Split> {
    check_len("parameter rows vs snapshots", snaps.len(), params.len())?;
    let (train_idx, test_idx) = split_indices(snaps.len(), test_size, seed)?;
    Ok(Split {
        train_params: params.select(&train_idx),
        test_params: params.select(&test_idx),
        train: snaps.select(&train_idx),
        test: snaps.select(&test_idx),
        train_indices: train_idx,
        test_indices: test_idx,
    })
}
