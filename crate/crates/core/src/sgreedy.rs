//! Stability-driven greedy sensor placement.
//!
//! For a reduced space spanned by the first `n` modes and `M` sensors with
//! unit-norm Riesz representers `ĝ_m`, the stability constant `β_{n,M}` is
//! the smallest singular value of the cross matrix `S_{mk} = ⟨ĝ_m, φ_k⟩`
//! (zero while `M < n`). The schedule grows `n` from 1 to `N`; at each `n`
//! sensors are added, each time the one maximizing `β_{n,M+1}`, until
//! `β_{n,M} ≥ tol` or the sensor budget is spent.

use nalgebra::{DMatrix, SymmetricEigen, SVD};

use crate::error::{check_len, Error, Result};
use crate::grid::Grid;
use crate::interpolation::GreedyStatus;
use crate::reduction::ReducedBasis;
use crate::sensors::SensorFunctional;
use crate::util::argmax;

/// Minimum gain in `β` for a pick to count as progress.
pub const STAGNATION_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SGreedyOptions {
    /// Largest reduced-space dimension `N`.
    pub n: usize,
    /// Sensor budget.
    pub mmax: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SGreedyStep {
    pub n: usize,
    pub m: usize,
    pub beta: f64,
    /// Position of the chosen sensor in the dictionary.
    pub sensor: usize,
}

#[derive(Debug, Clone)]
pub struct SGreedyResult {
    pub sensors: Vec<SensorFunctional>,
    pub indices: Vec<usize>,
    pub trace: Vec<SGreedyStep>,
    pub status: GreedyStatus,
}

/// Rows `⟨ĝ, φ_k⟩ = v(φ_k) / ‖g‖` of the cross matrix for each sensor.
pub fn cross_rows(basis: &ReducedBasis, sensors: &[SensorFunctional], grid: &Grid) -> Result<DMatrix<f64>> {
    let comps = grid.components(basis.dofs())?;
    let w = grid.dof_weights(comps);
    let mut rows = DMatrix::zeros(sensors.len(), basis.len());
    for (i, s) in sensors.iter().enumerate() {
        let nrm = s.riesz_norm(&w)?;
        if !(nrm > 0.0) {
            return Err(Error::Numerical(format!("sensor {i} is identically zero")));
        }
        for k in 0..basis.len() {
            rows[(i, k)] = s.apply_checked(basis.mode(k))? / nrm;
        }
    }
    Ok(rows)
}

/// Smallest singular value of the leading `n` columns of `cross`; zero
/// when there are fewer rows than columns.
pub fn smallest_singular_value(cross: &DMatrix<f64>, n: usize) -> f64 {
    if cross.nrows() < n || n == 0 {
        return 0.0;
    }
    let sub = cross.columns(0, n).into_owned();
    SVD::new(sub, false, false).singular_values.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `β_{n,M}` for a given sensor set.
pub fn inf_sup_constant(basis: &ReducedBasis, sensors: &[SensorFunctional], grid: &Grid, n: usize) -> Result<f64> {
    Ok(smallest_singular_value(&cross_rows(basis, sensors, grid)?, n))
}

/// Smallest singular value of `[S; r]` (first `n` columns) from the Gram
/// matrix of the smaller side. Screening only; reported values use an SVD.
fn screened_sigma_min(gram_cols: &DMatrix<f64>, rows: &DMatrix<f64>, cand: &[f64], n: usize) -> f64 {
    let m = rows.nrows() + 1;
    let lam = if m >= n {
        let mut g = gram_cols.clone();
        for a in 0..n {
            for b in 0..n {
                g[(a, b)] += cand[a] * cand[b];
            }
        }
        SymmetricEigen::new(g).eigenvalues.min()
    } else {
        let mut t = rows.clone().insert_row(m - 1, 0.0);
        for k in 0..n {
            t[(m - 1, k)] = cand[k];
        }
        SymmetricEigen::new(&t * t.transpose()).eigenvalues.min()
    };
    lam.max(0.0).sqrt()
}

pub fn sgreedy(
    basis: &ReducedBasis,
    dictionary: &[SensorFunctional],
    grid: &Grid,
    opts: SGreedyOptions,
) -> Result<SGreedyResult> {
    if opts.n == 0 || opts.n > basis.len() {
        return Err(Error::invalid(format!("N = {} outside 1..={}", opts.n, basis.len())));
    }
    if opts.mmax == 0 || opts.mmax > dictionary.len() {
        return Err(Error::invalid(format!(
            "Mmax = {} outside 1..={} (dictionary size)",
            opts.mmax,
            dictionary.len()
        )));
    }
    let all_rows = cross_rows(&basis.truncated(opts.n), dictionary, grid)?;
    let nmax = opts.n;

    let mut used = vec![false; dictionary.len()];
    let mut indices: Vec<usize> = Vec::new();
    let mut rows = DMatrix::<f64>::zeros(0, nmax);
    let mut trace = Vec::new();
    let mut status = GreedyStatus::Completed;

    'stages: for n in 1..=nmax {
        loop {
            let current = smallest_singular_value(&rows, n);
            if indices.len() >= n && current >= opts.tol {
                break;
            }
            if indices.len() == opts.mmax {
                break;
            }
            if indices.len() == dictionary.len() {
                status = GreedyStatus::DictionaryExhausted;
                break 'stages;
            }
            let sel = rows.columns(0, n).into_owned();
            let gram = sel.transpose() * &sel;
            let cand_rows: Vec<Vec<f64>> = (0..dictionary.len())
                .map(|c| (0..n).map(|k| all_rows[(c, k)]).collect())
                .collect();
            let best = argmax(dictionary.len(), |c| {
                if used[c] {
                    f64::NAN
                } else {
                    screened_sigma_min(&gram, &sel, &cand_rows[c], n)
                }
            });
            let Some((c, screened)) = best else {
                status = GreedyStatus::DictionaryExhausted;
                break 'stages;
            };
            if indices.len() >= n && screened - current < STAGNATION_TOLERANCE {
                status = GreedyStatus::Stagnated;
                break 'stages;
            }
            used[c] = true;
            indices.push(c);
            let nr = rows.nrows();
            rows = rows.insert_row(nr, 0.0);
            let last = rows.nrows() - 1;
            for k in 0..nmax {
                rows[(last, k)] = all_rows[(c, k)];
            }
            trace.push(SGreedyStep {
                n,
                m: indices.len(),
                beta: smallest_singular_value(&rows, n),
                sensor: c,
            });
        }
    }
    check_len("selected rows", indices.len(), rows.nrows())?;
    Ok(SGreedyResult {
        sensors: indices.iter().map(|&i| dictionary[i].clone()).collect(),
        indices,
        trace,
        status,
    })
}

/// CSV `n,m,beta,grid_index`.
pub fn sgreedy_csv(result: &SGreedyResult, dictionary: &[SensorFunctional]) -> String {
    let mut out = String::from("n,m,beta,grid_index\n");
    for s in &result.trace {
        out.push_str(&format!("{},{},{},{}\n", s.n, s.m, s.beta, dictionary[s.sensor].grid_index));
    }
    out
}
