//! Reduced bases from training snapshots.
//!
//! Three routes are available: a deterministic thin SVD of the snapshot
//! matrix, a randomized range-finder SVD, and POD by the method of snapshots
//! under the grid-weighted inner product. The SVD routes produce modes that
//! are orthonormal in the Euclidean dot product, POD modes are orthonormal in
//! the grid L² product. [`ReducedBasis::project`] always uses the product the
//! basis was built with.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use rand::{RngExt, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;

use crate::error::{check_len, Error, Result};
use crate::grid::Grid;
use crate::snapshots::SnapshotCollection;

/// Singular values below this fraction of the largest one are discarded.
pub const TRUNCATION_RATIO: f64 = 1e-12;

/// Inner product under which a basis is orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub enum Weighting {
    Euclidean,
    /// Grid-weighted; holds the quadrature weight of every dof.
    Grid(Vec<f64>),
}

impl Weighting {
    pub fn for_grid(grid: &Grid, components: usize) -> Self {
        Weighting::Grid(grid.dof_weights(components))
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Weighting::Euclidean => "euclidean",
            Weighting::Grid(_) => "grid",
        }
    }

    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Weighting::Euclidean => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Weighting::Grid(w) => w.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * x * y).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    varname: String,
    components: usize,
    modes: Vec<Vec<f64>>,
    singular_values: Vec<f64>,
    weighting: Weighting,
}

impl ReducedBasis {
    /// Assembles a basis from already orthonormal modes.
    pub fn from_parts(
        varname: impl Into<String>,
        components: usize,
        modes: Vec<Vec<f64>>,
        singular_values: Vec<f64>,
        weighting: Weighting,
    ) -> Result<Self> {
        check_len("singular values vs modes", modes.len(), singular_values.len())?;
        if let Some(first) = modes.first() {
            for m in &modes {
                check_len("mode dofs", first.len(), m.len())?;
            }
            if let Weighting::Grid(w) = &weighting {
                check_len("weighting dofs", first.len(), w.len())?;
            }
        }
        Ok(Self {
            varname: varname.into(),
            components,
            modes,
            singular_values,
            weighting,
        })
    }

    pub fn varname(&self) -> &str {
        &self.varname
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn dofs(&self) -> usize {
        self.modes.first().map_or(0, Vec::len)
    }

    pub fn modes(&self) -> &[Vec<f64>] {
        &self.modes
    }

    pub fn mode(&self, k: usize) -> &[f64] {
        &self.modes[k]
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn weighting(&self) -> &Weighting {
        &self.weighting
    }

    /// Keeps the leading `n` modes.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            varname: self.varname.clone(),
            components: self.components,
            modes: self.modes[..n].to_vec(),
            singular_values: self.singular_values[..n].to_vec(),
            weighting: self.weighting.clone(),
        }
    }

    /// Coefficients `αᵢ = ⟨f, φᵢ⟩` in the basis weighting.
    pub fn project(&self, field: &[f64]) -> Result<Vec<f64>> {
        check_len("projected field dofs", self.dofs(), field.len())?;
        Ok(self.modes.iter().map(|m| self.weighting.dot(field, m)).collect())
    }

    /// Projection using only the first `n` modes.
    pub fn project_n(&self, field: &[f64], n: usize) -> Result<Vec<f64>> {
        check_len("projected field dofs", self.dofs(), field.len())?;
        Ok(self.modes.iter().take(n).map(|m| self.weighting.dot(field, m)).collect())
    }

    /// `Σ αᵢ φᵢ` over the leading `α.len()` modes.
    pub fn reconstruct(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.len() > self.len() {
            return Err(Error::DimensionMismatch {
                what: "reconstruction coefficients (at most the basis size)",
                expected: self.len(),
                found: alpha.len(),
            });
        }
        let mut out = vec![0.0; self.dofs()];
        for (a, m) in alpha.iter().zip(&self.modes) {
            for (o, v) in out.iter_mut().zip(m) {
                *o += a * v;
            }
        }
        Ok(out)
    }

    /// Coefficient matrix (`len × snapshots`) of a whole collection.
    pub fn project_all(&self, snaps: &SnapshotCollection) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.len(), snaps.len());
        for (j, s) in snaps.iter().enumerate() {
            let a = self.project(s)?;
            out.column_mut(j).copy_from_slice(&a);
        }
        Ok(out)
    }

    /// Max deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            for j in 0..=i {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.weighting.dot(&self.modes[i], &self.modes[j]) - target).abs());
            }
        }
        worst
    }
}

/// Output of [`svd_fit`]: the basis plus the parametric side of the SVD.
#[derive(Debug, Clone)]
pub struct SvdFit {
    pub basis: ReducedBasis,
    /// Right singular vectors as columns (`snapshots × retained rank`).
    pub right_vectors: DMatrix<f64>,
    /// Every singular value of the snapshot matrix, nonincreasing.
    pub spectrum: Vec<f64>,
}

fn check_rank(rank: usize, dofs: usize, count: usize) -> Result<()> {
    let max = dofs.min(count);
    if rank == 0 || rank > max {
        return Err(Error::invalid(format!(
            "rank {rank} outside 1..={max} (dofs {dofs}, snapshots {count})"
        )));
    }
    Ok(())
}

/// Number of leading values to keep: at most `rank`, dropping values below
/// [`TRUNCATION_RATIO`] of the first.
fn retained(sigma: &[f64], rank: usize) -> Result<usize> {
    let top = sigma.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::Numerical("snapshot matrix is identically zero".into()));
    }
    Ok(sigma.iter().take(rank).take_while(|&&s| s >= TRUNCATION_RATIO * top).count())
}

/// Index of the first entry with the largest magnitude.
fn argmax_abs(v: &[f64]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best.1 {
            best = (i, x.abs());
        }
    }
    best.0
}

/// Sign convention: the largest-magnitude entry of every mode is positive.
/// Returns the applied signs so paired vectors can follow.
fn fix_signs(modes: &mut [Vec<f64>]) -> Vec<f64> {
    modes
        .iter_mut()
        .map(|m| {
            if m.is_empty() || m[argmax_abs(m)] >= 0.0 {
                1.0
            } else {
                m.iter_mut().for_each(|v| *v = -*v);
                -1.0
            }
        })
        .collect()
}

/// Thin SVD with columns sorted by nonincreasing singular value.
fn sorted_svd(a: DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let svd = SVD::new(a, true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Numerical("SVD did not converge".into())),
    };
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = DMatrix::from_columns(&order.iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>());
    let v = DMatrix::from_columns(&order.iter().map(|&i| vt.row(i).transpose()).collect::<Vec<_>>());
    Ok((u, sigma, v))
}

fn columns(m: &DMatrix<f64>, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|k| m.column(k).iter().copied().collect()).collect()
}

/// Deterministic thin SVD of the snapshot matrix; modes are the leading
/// left singular vectors.
pub fn svd_fit(train: &SnapshotCollection, rank: usize) -> Result<SvdFit> {
    check_rank(rank, train.dofs(), train.len())?;
    let (u, spectrum, v) = sorted_svd(train.to_matrix())?;
    let keep = retained(&spectrum, rank)?;
    let mut modes = columns(&u, keep);
    let signs = fix_signs(&mut modes);
    let mut right = v.columns(0, keep).into_owned();
    for (k, s) in signs.iter().enumerate() {
        right.column_mut(k).scale_mut(*s);
    }
    let basis = ReducedBasis::from_parts(
        train.varname(),
        train.components(),
        modes,
        spectrum[..keep].to_vec(),
        Weighting::Euclidean,
    )?;
    Ok(SvdFit {
        basis,
        right_vectors: right,
        spectrum,
    })
}

/// Options of the randomized SVD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsvdOptions {
    pub oversampling: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for RsvdOptions {
    fn default() -> Self {
        Self {
            oversampling: 10,
            power_iters: 2,
            seed: 0,
        }
    }
}

fn orthonormal_range(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().qr().q()
}

/// Randomized SVD: Gaussian sketch of the range, power iterations with a QR
/// re-orthonormalization after every product, then an exact SVD of the
/// small projected matrix.
///
/// The sketch width is `rank + oversampling`, clamped to the smallest matrix
/// dimension; a rank larger than that dimension is rejected.
pub fn rsvd_fit(train: &SnapshotCollection, rank: usize, opts: RsvdOptions) -> Result<ReducedBasis> {
    check_rank(rank, train.dofs(), train.len())?;
    let a = train.to_matrix();
    let (m, n) = a.shape();
    let width = (rank + opts.oversampling).min(m.min(n));

    let mut rng = Pcg64::seed_from_u64(opts.seed);
    let omega = DMatrix::from_fn(n, width, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut q = orthonormal_range(&(&a * omega));
    for _ in 0..opts.power_iters {
        let z = orthonormal_range(&(a.transpose() * &q));
        q = orthonormal_range(&(&a * z));
    }
    let small = q.transpose() * &a;
    let (u_small, sigma, _) = sorted_svd(small)?;
    let keep = retained(&sigma, rank)?;
    let u = q * u_small.columns(0, keep);
    let mut modes = columns(&u, keep);
    fix_signs(&mut modes);
    ReducedBasis::from_parts(
        train.varname(),
        train.components(),
        modes,
        sigma[..keep].to_vec(),
        Weighting::Euclidean,
    )
}

/// Gram-Schmidt pass (applied twice) in the given weighting.
fn reorthonormalize(modes: &mut [Vec<f64>], weighting: &Weighting) {
    for _ in 0..2 {
        for k in 0..modes.len() {
            let (done, rest) = modes.split_at_mut(k);
            let mk = &mut rest[0];
            for prev in done.iter() {
                let c = weighting.dot(mk, prev);
                mk.iter_mut().zip(prev).for_each(|(x, p)| *x -= c * p);
            }
            let nrm = weighting.dot(mk, mk).sqrt();
            mk.iter_mut().for_each(|x| *x /= nrm);
        }
    }
}

/// POD by the method of snapshots in the grid-weighted inner product.
///
/// The correlation matrix is `Cᵢⱼ = ⟨uᵢ, uⱼ⟩ / nₛ`; with eigenpairs
/// `(λₖ, ξₖ)` the modes are `φₖ = Σᵢ uᵢ ξₖᵢ / √(nₛ λₖ)` and
/// `σₖ = √(nₛ λₖ)`.
pub fn pod_fit(train: &SnapshotCollection, grid: &Grid, rank: usize) -> Result<ReducedBasis> {
    train.check_grid(grid)?;
    check_rank(rank, train.dofs(), train.len())?;
    let ns = train.len();
    let weighting = Weighting::for_grid(grid, train.components());
    let w = match &weighting {
        Weighting::Grid(w) => w,
        Weighting::Euclidean => unreachable!(),
    };
    let u = train.to_matrix();
    let mut wu = u.clone();
    for (mut row, &wi) in wu.row_iter_mut().zip(w) {
        row.scale_mut(wi);
    }
    let corr = (u.transpose() * wu) / ns as f64;
    let corr = (&corr + corr.transpose()) * 0.5;
    let trace = corr.trace();

    let eig = SymmetricEigen::new(corr);
    let mut order: Vec<usize> = (0..ns).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let lambda_min = eig.eigenvalues[order[ns - 1]];
    if lambda_min < -1e-10 * trace {
        return Err(Error::Numerical(format!(
            "correlation matrix has eigenvalue {lambda_min:e} below -1e-10·trace"
        )));
    }
    let sigma: Vec<f64> = order
        .iter()
        .map(|&i| (ns as f64 * eig.eigenvalues[i].max(0.0)).sqrt())
        .collect();
    let keep = retained(&sigma, rank)?;

    let mut modes: Vec<Vec<f64>> = order[..keep]
        .iter()
        .zip(&sigma)
        .map(|(&i, &s)| {
            let col = &u * eig.eigenvectors.column(i) / s;
            col.iter().copied().collect()
        })
        .collect();
    reorthonormalize(&mut modes, &weighting);
    fix_signs(&mut modes);
    ReducedBasis::from_parts(train.varname(), train.components(), modes, sigma[..keep].to_vec(), weighting)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub k: usize,
    pub sigma: f64,
    pub cumulative: f64,
    pub residual: f64,
}

/// Singular-value decay with cumulative energy `Σ_{j≤k} σⱼ² / Σ σ²`.
pub fn singular_value_report(basis: &ReducedBasis) -> Vec<EnergyRow> {
    let total: f64 = basis.singular_values().iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    basis
        .singular_values()
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            acc += s * s;
            let cumulative = if i + 1 == basis.len() { 1.0 } else { acc / total };
            EnergyRow {
                k: i + 1,
                sigma: s,
                cumulative,
                residual: 1.0 - cumulative,
            }
        })
        .collect()
}

pub fn energy_csv(rows: &[EnergyRow]) -> String {
    let mut out = String::from("k,sigma,cumulative_energy,residual_energy\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.k, r.sigma, r.cumulative, r.residual));
    }
    out
}
