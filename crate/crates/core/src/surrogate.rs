//! Regression surrogates mapping input vectors to coefficient vectors.
//!
//! Targets are stored column-wise: a `DMatrix` with one row per output and
//! one column per sample, the same layout `ReducedBasis::project_all` and
//! the EIM coefficient trace use.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SVD};
use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;

use crate::error::{check_len, Error, Result};

pub trait SurrogateModel: Send + Sync + std::fmt::Debug {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// Predicted outputs, `output_dim × inputs.len()`.
    fn predict(&self, inputs: &[Vec<f64>]) -> Result<DMatrix<f64>>;
    /// Predictive spread, same shape as [`SurrogateModel::predict`]; never negative.
    fn predict_std(&self, inputs: &[Vec<f64>]) -> Result<DMatrix<f64>>;
}

fn check_inputs(inputs: &[Vec<f64>], dim: usize) -> Result<()> {
    for x in inputs {
        check_len("input dimension", dim, x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite surrogate input"));
        }
    }
    Ok(())
}

fn check_training(inputs: &[Vec<f64>], targets: &DMatrix<f64>) -> Result<usize> {
    if inputs.is_empty() {
        return Err(Error::invalid("surrogate needs at least one training sample"));
    }
    check_len("training targets (columns)", inputs.len(), targets.ncols())?;
    let dim = inputs[0].len();
    if dim == 0 {
        return Err(Error::invalid("surrogate inputs must have at least one component"));
    }
    check_inputs(inputs, dim)?;
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite surrogate target"));
    }
    Ok(dim)
}

/// Per-component affine map of the training inputs onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    lo: Vec<f64>,
    span: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(inputs: &[Vec<f64>]) -> Self {
        let dim = inputs.first().map_or(0, Vec::len);
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for x in inputs {
            for (k, v) in x.iter().enumerate() {
                lo[k] = lo[k].min(*v);
                hi[k] = hi[k].max(*v);
            }
        }
        let span = lo.iter().zip(&hi).map(|(l, h)| if h > l { h - l } else { 1.0 }).collect();
        Self { lo, span }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.lo).zip(&self.span).map(|((v, l), s)| (v - l) / s).collect()
    }
}

pub const CONSTANT_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const LENGTH_SCALE_BOUNDS: (f64, f64) = (1e-2, 1e2);

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpOptions {
    /// Diagonal jitter added to the kernel matrix, in standardized units.
    pub nugget: f64,
    /// Optimizer starts beyond the default `c = 1, ℓ = 1` one.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for GpOptions {
    fn default() -> Self {
        Self {
            nugget: 1e-4,
            restarts: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
enum OutputGp {
    Constant(f64),
    Process {
        mean: f64,
        scale: f64,
        constant: f64,
        length: f64,
        alpha: DVector<f64>,
        chol: Cholesky<f64, Dyn>,
        log_marginal_likelihood: f64,
    },
}

/// One independent Gaussian process per output, kernel
/// `c · exp(-|x - x'|² / (2ℓ²))` on min-max scaled inputs.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    scaler: MinMaxScaler,
    train: Vec<Vec<f64>>,
    outputs: Vec<OutputGp>,
    options: GpOptions,
}

fn rbf(d2: f64, c: f64, l: f64) -> f64 {
    c * (-0.5 * d2 / (l * l)).exp()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn clamp_log(theta: &[f64]) -> (f64, f64) {
    let c = theta[0].clamp(CONSTANT_BOUNDS.0.ln(), CONSTANT_BOUNDS.1.ln()).exp();
    let l = theta[1].clamp(LENGTH_SCALE_BOUNDS.0.ln(), LENGTH_SCALE_BOUNDS.1.ln()).exp();
    (c, l)
}

struct Factor {
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    lml: f64,
}

fn factor(d2: &DMatrix<f64>, z: &DVector<f64>, c: f64, l: f64, nugget: f64) -> Option<Factor> {
    let n = z.len();
    let k = DMatrix::from_fn(n, n, |i, j| rbf(d2[(i, j)], c, l) + if i == j { nugget } else { 0.0 });
    let chol = k.cholesky()?;
    let alpha = chol.solve(z);
    let logdet: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let lml = -0.5 * z.dot(&alpha) - logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    lml.is_finite().then_some(Factor { alpha, chol, lml })
}

/// Bounded Nelder–Mead: vertices are projected onto the box after every move.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], lo: &[f64], hi: &[f64], step: f64) -> (Vec<f64>, f64) {
    const MAX_ITER: usize = 400;
    let n = x0.len();
    let project = |x: &mut Vec<f64>| {
        for k in 0..n {
            x[k] = x[k].clamp(lo[k], hi[k]);
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut start = x0.to_vec();
    project(&mut start);
    simplex.push((start.clone(), f(&start)));
    for k in 0..n {
        let mut v = start.clone();
        v[k] += if v[k] + step <= hi[k] { step } else { -step };
        project(&mut v);
        let fv = f(&v);
        simplex.push((v, fv));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    for _ in 0..MAX_ITER {
        order(&mut simplex);
        let spread = simplex[n].1 - simplex[0].1;
        let size = simplex[1..]
            .iter()
            .map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if (spread.is_finite() && spread.abs() < 1e-10) && size < 1e-8 {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|(v, _)| v[k]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| {
            let mut p: Vec<f64> = (0..n).map(|k| centroid[k] + t * (simplex[n].0[k] - centroid[k])).collect();
            project(&mut p);
            let fp = f(&p);
            (p, fp)
        };
        let reflected = along(-1.0);
        if reflected.1 < simplex[0].1 {
            let expanded = along(-2.0);
            simplex[n] = if expanded.1 < reflected.1 { expanded } else { reflected };
        } else if reflected.1 < simplex[n - 1].1 {
            simplex[n] = reflected;
        } else {
            let contracted = if reflected.1 < simplex[n].1 { along(-0.5) } else { along(0.5) };
            if contracted.1 < simplex[n].1.min(reflected.1) {
                simplex[n] = contracted;
            } else {
                let best = simplex[0].0.clone();
                for (v, fv) in simplex.iter_mut().skip(1) {
                    for k in 0..n {
                        v[k] = best[k] + 0.5 * (v[k] - best[k]);
                    }
                    *fv = f(v);
                }
            }
        }
    }
    order(&mut simplex);
    simplex.swap_remove(0)
}

fn fit_output(d2: &DMatrix<f64>, y: &[f64], starts: &[[f64; 2]], nugget: f64) -> Result<OutputGp> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let scale = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    if scale == 0.0 || scale <= 1e-12 * mean.abs() {
        return Ok(OutputGp::Constant(mean));
    }
    let z = DVector::from_iterator(y.len(), y.iter().map(|v| (v - mean) / scale));
    let objective = |theta: &[f64]| {
        let (c, l) = clamp_log(theta);
        factor(d2, &z, c, l, nugget).map_or(f64::INFINITY, |fc| -fc.lml)
    };
    let lo = [CONSTANT_BOUNDS.0.ln(), LENGTH_SCALE_BOUNDS.0.ln()];
    let hi = [CONSTANT_BOUNDS.1.ln(), LENGTH_SCALE_BOUNDS.1.ln()];
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in starts {
        let (x, fx) = nelder_mead(objective, s, &lo, &hi, 0.5);
        if fx.is_finite() && best.as_ref().is_none_or(|b| fx < b.1) {
            best = Some((x, fx));
        }
    }
    let (theta, _) = best.ok_or_else(|| {
        Error::Numerical("kernel matrix is not positive definite for any hyperparameters; increase the nugget".into())
    })?;
    let (constant, length) = clamp_log(&theta);
    let fc = factor(d2, &z, constant, length, nugget)
        .ok_or_else(|| Error::Numerical("kernel factorization failed at the optimum".into()))?;
    Ok(OutputGp::Process {
        mean,
        scale,
        constant,
        length,
        alpha: fc.alpha,
        chol: fc.chol,
        log_marginal_likelihood: fc.lml,
    })
}

impl GpSurrogate {
    pub fn fit(inputs: &[Vec<f64>], targets: &DMatrix<f64>, options: GpOptions) -> Result<Self> {
        check_training(inputs, targets)?;
        if !(options.nugget >= 0.0 && options.nugget.is_finite()) {
            return Err(Error::invalid(format!("nugget must be a finite value ≥ 0, got {}", options.nugget)));
        }
        let scaler = MinMaxScaler::fit(inputs);
        let train: Vec<Vec<f64>> = inputs.iter().map(|x| scaler.transform(x)).collect();
        let ns = train.len();
        let d2 = DMatrix::from_fn(ns, ns, |i, j| sq_dist(&train[i], &train[j]));

        let mut rng = Pcg64::seed_from_u64(options.seed);
        let mut starts = vec![[0.0, 0.0]];
        for _ in 0..options.restarts {
            let c = rng.random_range(CONSTANT_BOUNDS.0.ln()..CONSTANT_BOUNDS.1.ln());
            let l = rng.random_range(LENGTH_SCALE_BOUNDS.0.ln()..LENGTH_SCALE_BOUNDS.1.ln());
            starts.push([c, l]);
        }

        let rows: Vec<Vec<f64>> = (0..targets.nrows()).map(|r| targets.row(r).iter().copied().collect()).collect();
        let fit_row = |y: &Vec<f64>| fit_output(&d2, y, &starts, options.nugget);
        #[cfg(feature = "parallel")]
        let outputs = {
            use rayon::prelude::*;
            rows.par_iter().map(fit_row).collect::<Result<Vec<_>>>()?
        };
        #[cfg(not(feature = "parallel"))]
        let outputs = rows.iter().map(fit_row).collect::<Result<Vec<_>>>()?;

        Ok(Self {
            scaler,
            train,
            outputs,
            options,
        })
    }

    pub fn options(&self) -> GpOptions {
        self.options
    }

    /// `(c, ℓ, log marginal likelihood)` per output; `None` for constant outputs.
    pub fn hyperparameters(&self) -> Vec<Option<(f64, f64, f64)>> {
        self.outputs
            .iter()
            .map(|o| match o {
                OutputGp::Constant(_) => None,
                OutputGp::Process {
                    constant,
                    length,
                    log_marginal_likelihood,
                    ..
                } => Some((*constant, *length, *log_marginal_likelihood)),
            })
            .collect()
    }

    fn evaluate(&self, inputs: &[Vec<f64>], with_std: bool) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        check_inputs(inputs, self.input_dim())?;
        let scaled: Vec<Vec<f64>> = inputs.iter().map(|x| self.scaler.transform(x)).collect();
        let d2 = DMatrix::from_fn(self.train.len(), scaled.len(), |i, j| sq_dist(&self.train[i], &scaled[j]));
        let mut mean = DMatrix::zeros(self.outputs.len(), inputs.len());
        let mut std = DMatrix::zeros(self.outputs.len(), inputs.len());
        for (r, out) in self.outputs.iter().enumerate() {
            match out {
                OutputGp::Constant(c) => mean.row_mut(r).fill(*c),
                OutputGp::Process {
                    mean: mu,
                    scale,
                    constant,
                    length,
                    alpha,
                    chol,
                    ..
                } => {
                    let kstar = d2.map(|d| rbf(d, *constant, *length));
                    let m = kstar.tr_mul(alpha);
                    for j in 0..inputs.len() {
                        mean[(r, j)] = mu + scale * m[j];
                    }
                    if with_std {
                        let v = chol.l_dirty().solve_lower_triangular(&kstar).ok_or_else(|| {
                            Error::Numerical("singular kernel factor".into())
                        })?;
                        for j in 0..inputs.len() {
                            let var = constant - v.column(j).norm_squared();
                            std[(r, j)] = scale * var.max(0.0).sqrt();
                        }
                    }
                }
            }
        }
        Ok((mean, std))
    }
}

impl SurrogateModel for GpSurrogate {
    fn input_dim(&self) -> usize {
        self.scaler.lo.len()
    }

    fn output_dim(&self) -> usize {
        self.outputs.len()
    }

    fn predict(&self, inputs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        Ok(self.evaluate(inputs, false)?.0)
    }

    fn predict_std(&self, inputs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        Ok(self.evaluate(inputs, true)?.1)
    }
}

/// Affine least-squares map `y ≈ W x + b`; the spread is the training RMS
/// residual of each output.
#[derive(Debug, Clone)]
pub struct LinearSurrogate {
    weights: DMatrix<f64>,
    residual_rms: Vec<f64>,
}

impl LinearSurrogate {
    pub fn fit(inputs: &[Vec<f64>], targets: &DMatrix<f64>) -> Result<Self> {
        let dim = check_training(inputs, targets)?;
        let ns = inputs.len();
        let design = DMatrix::from_fn(ns, dim + 1, |i, k| if k < dim { inputs[i][k] } else { 1.0 });
        let svd = SVD::new(design.clone(), true, true);
        let tol = 1e-12 * svd.singular_values.max();
        let coef = svd
            .solve(&targets.transpose(), tol)
            .map_err(|e| Error::Numerical(format!("linear surrogate solve failed: {e}")))?;
        let weights = coef.transpose();
        let resid = targets - &weights * design.transpose();
        let residual_rms = (0..resid.nrows())
            .map(|r| (resid.row(r).norm_squared() / ns as f64).sqrt())
            .collect();
        Ok(Self { weights, residual_rms })
    }

    /// `output_dim × (input_dim + 1)`; the last column is the intercept.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }
}

impl SurrogateModel for LinearSurrogate {
    fn input_dim(&self) -> usize {
        self.weights.ncols() - 1
    }

    fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn predict(&self, inputs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let dim = self.input_dim();
        check_inputs(inputs, dim)?;
        let x = DMatrix::from_fn(dim + 1, inputs.len(), |k, j| if k < dim { inputs[j][k] } else { 1.0 });
        Ok(&self.weights * x)
    }

    fn predict_std(&self, inputs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        check_inputs(inputs, self.input_dim())?;
        Ok(DMatrix::from_fn(self.output_dim(), inputs.len(), |r, _| self.residual_rms[r]))
    }
}

/// Which surrogate to fit, as written in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SurrogateSpec {
    Gp(GpOptions),
    Linear,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        SurrogateSpec::Gp(GpOptions::default())
    }
}

impl SurrogateSpec {
    pub fn fit(&self, inputs: &[Vec<f64>], targets: &DMatrix<f64>) -> Result<Box<dyn SurrogateModel>> {
        Ok(match self {
            SurrogateSpec::Gp(o) => Box::new(GpSurrogate::fit(inputs, targets, *o)?),
            SurrogateSpec::Linear => Box::new(LinearSurrogate::fit(inputs, targets)?),
        })
    }

    /// Tolerance within which predictions at training inputs should match
    /// their targets: `3√nugget` for the Gaussian process.
    pub fn nugget_tolerance(&self) -> f64 {
        match self {
            SurrogateSpec::Gp(o) => 3.0 * o.nugget.sqrt(),
            SurrogateSpec::Linear => 0.0,
        }
    }
}
