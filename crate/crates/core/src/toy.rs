//! Parametric toy field on the unit square used by examples and tests.

use std::f64::consts::PI;

use crate::error::Result;
use crate::grid::Grid;
use crate::snapshots::{ParameterTable, SnapshotCollection};

/// Two forms of the toy function, differing in the first term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyVariant {
    /// `sin(μπx)·cos(πy) + cos(πx)·sin((1−μ)πy²)`
    #[default]
    Snippet,
    /// `sin(μπx)·cos(μπy) + cos(πx)·sin((1−μ)πy²)`
    Prose,
}

pub fn toy_function(x: f64, y: f64, mu: f64, variant: ToyVariant) -> f64 {
    let ky = match variant {
        ToyVariant::Snippet => PI,
        ToyVariant::Prose => mu * PI,
    };
    (mu * PI * x).sin() * (ky * y).cos() + (PI * x).cos() * ((1.0 - mu) * PI * y * y).sin()
}

pub fn toy_field(grid: &Grid, mu: f64, variant: ToyVariant) -> Vec<f64> {
    grid.points().iter().map(|p| toy_function(p[0], p[1], mu, variant)).collect()
}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n).map(|i| if i == n - 1 { b } else { a + i as f64 * h }).collect()
        }
    }
}

/// Snapshots of the toy function for every `mu`, plus the matching table.
pub fn toy_dataset(grid: &Grid, mus: &[f64], variant: ToyVariant) -> Result<(ParameterTable, SnapshotCollection)> {
    let mut params = ParameterTable::scalar(mus);
    params.names = vec!["mu".into()];
    let snaps = SnapshotCollection::from_entries("f", 1, mus.iter().map(|&m| toy_field(grid, m, variant)).collect())?;
    Ok((params, snaps))
}
