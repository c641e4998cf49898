//! Online state estimation helpers: measurement noise, surrogate-driven POD
//! interpolation, indirect reconstruction of unobserved fields, and error
//! reports.

use nalgebra::DMatrix;
use rand::{Rng, RngExt, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;

use crate::error::{check_len, Error, Result};
use crate::grid::Grid;
use crate::interpolation::EimModel;
use crate::reduction::ReducedBasis;
use crate::snapshots::SnapshotCollection;
use crate::surrogate::SurrogateModel;

/// Relative error is reported as undefined below this truth norm.
pub const ZERO_NORM: f64 = 1e-14;

/// Noise levels of the default sweep.
pub const DEFAULT_NOISE_LEVELS: [f64; 5] = [0.0, 0.001, 0.01, 0.025, 0.05];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseDescriptor {
    pub level: f64,
    pub seed: u64,
    /// Standard deviation actually applied.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector {
    pub values: Vec<f64>,
    pub noise: Option<NoiseDescriptor>,
}

impl MeasurementVector {
    pub fn clean(values: Vec<f64>) -> Self {
        Self { values, noise: None }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sigma(&self) -> f64 {
        self.noise.map_or(0.0, |n| n.sigma)
    }
}

/// `σ = level · max |yₘ|`.
pub fn noise_sigma(y: &[f64], level: f64) -> f64 {
    level * y.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn check_level(level: f64) -> Result<()> {
    if level >= 0.0 && level.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("noise level must be a finite value ≥ 0, got {level}")))
    }
}

fn perturb<R: Rng>(y: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    if sigma == 0.0 {
        return y.to_vec();
    }
    y.iter()
        .map(|v| {
            let e: f64 = rng.sample(StandardNormal);
            v + sigma * e
        })
        .collect()
}

/// Adds i.i.d. Gaussian noise with `σ = level · max |yₘ|`. Level zero
/// returns `y` unchanged.
pub fn add_noise(y: &[f64], level: f64, seed: u64) -> Result<MeasurementVector> {
    check_level(level)?;
    let sigma = noise_sigma(y, level);
    let mut rng = Pcg64::seed_from_u64(seed);
    Ok(MeasurementVector {
        values: perturb(y, sigma, &mut rng),
        noise: Some(NoiseDescriptor { level, seed, sigma }),
    })
}

/// Fields for new parameters: `α̂ = surrogate(μ)`, decoded with the leading
/// modes of `basis`.
pub fn pod_interpolate(basis: &ReducedBasis, surrogate: &dyn SurrogateModel, params: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if surrogate.output_dim() > basis.len() {
        return Err(Error::DimensionMismatch {
            what: "surrogate outputs (at most the basis size)",
            expected: basis.len(),
            found: surrogate.output_dim(),
        });
    }
    let alpha = surrogate.predict(params)?;
    alpha
        .column_iter()
        .map(|c| basis.reconstruct(c.as_slice()))
        .collect()
}

/// Reconstructs an unobserved field from measurements of an observed one
/// through a learned map from interpolation coefficients `β` to reduced
/// coefficients `α` of the target basis.
#[derive(Debug)]
pub struct IndirectModel {
    observed: EimModel,
    target: ReducedBasis,
    map: Box<dyn SurrogateModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndirectEstimate {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub field: Vec<f64>,
}

impl IndirectModel {
    /// `fit_map` receives `β` of every training pair as inputs and the
    /// matching `α` as columns of the target matrix.
    pub fn fit<F>(
        observed: EimModel,
        target: ReducedBasis,
        train_observed: &SnapshotCollection,
        train_target: &SnapshotCollection,
        fit_map: F,
    ) -> Result<Self>
    where
        F: FnOnce(&[Vec<f64>], &DMatrix<f64>) -> Result<Box<dyn SurrogateModel>>,
    {
        if train_observed.is_empty() {
            return Err(Error::invalid("indirect reconstruction needs training pairs"));
        }
        check_len("paired training snapshots", train_observed.len(), train_target.len())?;
        check_len("observed snapshot dofs", observed.dofs(), train_observed.dofs())?;
        check_len("target snapshot dofs", target.dofs(), train_target.dofs())?;
        let mut betas = Vec::with_capacity(train_observed.len());
        for u in train_observed.iter() {
            betas.push(observed.coefficients(&observed.measure(u)?)?);
        }
        let alpha = target.project_all(train_target)?;
        let map = fit_map(&betas, &alpha)?;
        check_len("map input dimension", observed.len(), map.input_dim())?;
        if map.output_dim() > target.len() {
            return Err(Error::DimensionMismatch {
                what: "map outputs (at most the target basis size)",
                expected: target.len(),
                found: map.output_dim(),
            });
        }
        Ok(Self { observed, target, map })
    }

    pub fn observed(&self) -> &EimModel {
        &self.observed
    }

    pub fn target(&self) -> &ReducedBasis {
        &self.target
    }

    pub fn map(&self) -> &dyn SurrogateModel {
        self.map.as_ref()
    }

    /// `y` must hold one value per observed sensor. `lambda > 0` switches the
    /// coefficient step to the Tikhonov-regularized solve.
    pub fn reconstruct(&self, y: &[f64], lambda: f64) -> Result<IndirectEstimate> {
        check_len("observed measurements", self.observed.len(), y.len())?;
        let (beta, _) = self.observed.reconstruct_tikhonov(y, lambda)?;
        let alpha: Vec<f64> = self.map.predict(std::slice::from_ref(&beta))?.column(0).iter().copied().collect();
        let field = self.target.reconstruct(&alpha)?;
        Ok(IndirectEstimate { beta, alpha, field })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub index: usize,
    pub abs_err: f64,
    /// Zero when `rel_undefined` is set.
    pub rel_err: f64,
    pub rel_undefined: bool,
    pub eval_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
}

impl ErrorReport {
    pub fn mean_abs(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.abs_err))
    }

    pub fn max_abs(&self) -> f64 {
        self.rows.iter().map(|r| r.abs_err).fold(0.0, f64::max)
    }

    /// Mean over rows with a defined relative error.
    pub fn mean_rel(&self) -> f64 {
        mean(self.rows.iter().filter(|r| !r.rel_undefined).map(|r| r.rel_err))
    }

    pub fn max_rel(&self) -> f64 {
        self.rows.iter().filter(|r| !r.rel_undefined).map(|r| r.rel_err).fold(0.0, f64::max)
    }

    pub fn total_seconds(&self) -> f64 {
        self.rows.iter().map(|r| r.eval_seconds).sum()
    }

    /// CSV `index,abs_err,rel_err,rel_undefined_flag,eval_seconds`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,abs_err,rel_err,rel_undefined_flag,eval_seconds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.index,
                r.abs_err,
                r.rel_err,
                u8::from(r.rel_undefined),
                r.eval_seconds
            ));
        }
        out
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Absolute and relative grid-norm error of one estimate.
pub fn field_error(grid: &Grid, truth: &[f64], estimate: &[f64]) -> Result<(f64, f64, bool)> {
    check_len("estimate dofs", truth.len(), estimate.len())?;
    let diff: Vec<f64> = truth.iter().zip(estimate).map(|(a, b)| a - b).collect();
    let abs = grid.norm(&diff)?;
    let nrm = grid.norm(truth)?;
    Ok(if nrm < ZERO_NORM { (abs, 0.0, true) } else { (abs, abs / nrm, false) })
}

#[cfg(not(target_arch = "wasm32"))]
fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t0 = std::time::Instant::now();
    let out = f();
    (out, t0.elapsed().as_secs_f64())
}

#[cfg(target_arch = "wasm32")]
fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    (f(), 0.0)
}

/// Runs `estimator(i)` for every truth snapshot and records its error and
/// wall-clock time.
pub fn compute_errors<F>(grid: &Grid, truth: &SnapshotCollection, mut estimator: F) -> Result<ErrorReport>
where
    F: FnMut(usize) -> Result<Vec<f64>>,
{
    truth.check_grid(grid)?;
    let mut rows = Vec::with_capacity(truth.len());
    for (i, u) in truth.iter().enumerate() {
        let (estimate, secs) = timed(|| estimator(i));
        let (abs_err, rel_err, rel_undefined) = field_error(grid, u, &estimate?)?;
        rows.push(ErrorRow {
            index: i,
            abs_err,
            rel_err,
            rel_undefined,
            eval_seconds: secs,
        });
    }
    Ok(ErrorReport { rows })
}

/// Pointwise `|u − û|`.
pub fn residual_field(truth: &[f64], estimate: &[f64]) -> Result<Vec<f64>> {
    check_len("estimate dofs", truth.len(), estimate.len())?;
    Ok(truth.iter().zip(estimate).map(|(a, b)| (a - b).abs()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub noise_level: f64,
    pub seed: u64,
    pub m: usize,
    pub mean_rel_err: f64,
}

/// Mean relative error over `truth` for every `(level, seed, m)`.
///
/// `clean[i]` holds the noise-free measurements of snapshot `i` by all
/// sensors. For each `(level, seed)` one noisy copy of every vector is drawn
/// (a single generator seeded with `seed`, consumed in snapshot order) and
/// its leading `m` entries are passed to `estimate` together with the
/// applied `σ`.
pub fn noise_sweep<F>(
    grid: &Grid,
    truth: &SnapshotCollection,
    clean: &[Vec<f64>],
    levels: &[f64],
    seeds: &[u64],
    ms: &[usize],
    mut estimate: F,
) -> Result<Vec<SweepRow>>
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>>,
{
    check_len("measurement vectors", truth.len(), clean.len())?;
    for &level in levels {
        check_level(level)?;
    }
    for &m in ms {
        if let Some(y) = clean.iter().find(|y| m == 0 || m > y.len()) {
            return Err(Error::DimensionMismatch {
                what: "sweep measurement count (1..=M)",
                expected: y.len(),
                found: m,
            });
        }
    }
    let mut rows = Vec::new();
    for &level in levels {
        for &seed in seeds {
            let mut rng = Pcg64::seed_from_u64(seed);
            let noisy: Vec<(Vec<f64>, f64)> = clean
                .iter()
                .map(|y| {
                    let s = noise_sigma(y, level);
                    (perturb(y, s, &mut rng), s)
                })
                .collect();
            for &m in ms {
                let mut acc = Vec::with_capacity(truth.len());
                for (u, (y, s)) in truth.iter().zip(&noisy) {
                    let est = estimate(&y[..m], *s)?;
                    let (_, rel, undefined) = field_error(grid, u, &est)?;
                    if !undefined {
                        acc.push(rel);
                    }
                }
                rows.push(SweepRow {
                    noise_level: level,
                    seed,
                    m,
                    mean_rel_err: mean(acc.into_iter()),
                });
            }
        }
    }
    Ok(rows)
}

/// CSV `noise_level,seed,m,mean_rel_err`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("noise_level,seed,m,mean_rel_err\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.noise_level, r.seed, r.m, r.mean_rel_err));
    }
    out
}
