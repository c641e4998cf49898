//! Empirical interpolation (EIM) and its generalization to arbitrary sensor
//! functionals (GEIM).
//!
//! Both share one greedy loop. At every step the training snapshot whose
//! interpolation residual has the largest grid L² norm becomes the
//! generator; the sensor acting most strongly on that residual is selected
//! (largest pointwise magnitude for EIM, largest functional value for GEIM);
//! the residual scaled to unit measurement becomes the next magic function.
//! The interpolation matrix `Bᵢⱼ = vᵢ(qⱼ)` is unit lower triangular by
//! construction, so the online phase reduces to a forward substitution.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::grid::Grid;
use crate::sensors::SensorFunctional;
use crate::snapshots::SnapshotCollection;
use crate::util::argmax;

/// Greedy stops once every residual is below this fraction of the largest
/// snapshot norm.
pub const RESIDUAL_TOLERANCE: f64 = 1e-12;

/// Remaining functionals are considered vanishing below this fraction of the
/// residual's sup norm.
pub const DEGENERACY_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyStatus {
    /// Reached the requested size.
    Completed,
    /// Training residuals vanished before the requested size.
    TrainingSetExhausted,
    /// No candidate sensors left before the requested size.
    DictionaryExhausted,
    /// Stability did not improve over a full dictionary sweep.
    Stagnated,
}

impl GreedyStatus {
    pub fn is_warning(&self) -> bool {
        !matches!(self, GreedyStatus::Completed)
    }
}

/// Which training snapshot and which sensor a greedy step picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Selection {
    pub snapshot: usize,
    /// Dof for EIM, dictionary position for GEIM.
    pub sensor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EimModel {
    varname: String,
    components: usize,
    magic_functions: Vec<Vec<f64>>,
    sensors: Vec<SensorFunctional>,
    b: DMatrix<f64>,
    max_abs_err: Vec<f64>,
    selection: Vec<Selection>,
    mean_coefficients: Vec<f64>,
    status: GreedyStatus,
}

/// Output of [`eim_fit`] / [`geim_fit`].
#[derive(Debug, Clone)]
pub struct EimFit {
    pub model: EimModel,
    /// Interpolation coefficients of every training snapshot (`M × snapshots`).
    pub beta: DMatrix<f64>,
}

impl EimFit {
    /// Per-step maximum training error (grid L² norm), after `m = 1..=M` functions.
    pub fn max_abs_err(&self) -> &[f64] {
        &self.model.max_abs_err
    }
}

fn col_norms(r: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
    r.column_iter()
        .map(|c| c.iter().zip(w).map(|(x, w)| w * x * x).sum::<f64>().sqrt())
        .collect()
}

enum Candidates<'a> {
    /// Point evaluation at any dof not yet used.
    Dofs { grid: &'a Grid, used: Vec<bool> },
    Dictionary { list: &'a [SensorFunctional], used: Vec<bool> },
}

enum Pick {
    Sensor(usize, SensorFunctional),
    Empty,
    Degenerate,
}

impl Candidates<'_> {
    fn pick(&mut self, residual: &[f64], components: usize) -> Result<Pick> {
        let sup = residual.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        match self {
            Candidates::Dofs { grid, used } => {
                let best = argmax(residual.len(), |i| if used[i] { f64::NAN } else { residual[i].abs() });
                match best {
                    None => Ok(Pick::Empty),
                    Some((_, v)) if v <= DEGENERACY_TOLERANCE * sup => Ok(Pick::Degenerate),
                    Some((i, _)) => {
                        used[i] = true;
                        let s = SensorFunctional::point(grid, components, i / components, i % components)?;
                        Ok(Pick::Sensor(i, s))
                    }
                }
            }
            Candidates::Dictionary { list, used } => {
                let best = argmax(list.len(), |i| {
                    if used[i] {
                        f64::NAN
                    } else {
                        list[i].apply(residual).abs()
                    }
                });
                match best {
                    None => Ok(Pick::Empty),
                    Some((_, v)) if v <= DEGENERACY_TOLERANCE * sup => Ok(Pick::Degenerate),
                    Some((i, _)) => {
                        used[i] = true;
                        Ok(Pick::Sensor(i, list[i].clone()))
                    }
                }
            }
        }
    }
}

fn greedy(train: &SnapshotCollection, grid: &Grid, mmax: usize, mut candidates: Candidates<'_>) -> Result<EimFit> {
    train.check_grid(grid)?;
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if mmax == 0 {
        return Err(Error::invalid("Mmax must be positive"));
    }
    let comps = train.components();
    let w = grid.dof_weights(comps);
    let mut r = train.to_matrix();
    let scale = col_norms(&r, &w).into_iter().fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::Numerical("training snapshots are identically zero".into()));
    }

    let mut magic = Vec::new();
    let mut sensors = Vec::new();
    let mut selection = Vec::new();
    let mut trace = Vec::new();
    let mut status = GreedyStatus::Completed;
    loop {
        let norms = col_norms(&r, &w);
        let (gen, gmax) = argmax(norms.len(), |j| norms[j]).expect("nonempty training set");
        if !magic.is_empty() {
            trace.push(gmax);
        }
        if magic.len() == mmax {
            break;
        }
        if gmax < RESIDUAL_TOLERANCE * scale {
            status = GreedyStatus::TrainingSetExhausted;
            break;
        }
        let residual: Vec<f64> = r.column(gen).iter().copied().collect();
        let (index, sensor) = match candidates.pick(&residual, comps)? {
            Pick::Sensor(i, s) => (i, s),
            Pick::Empty => {
                status = GreedyStatus::DictionaryExhausted;
                break;
            }
            Pick::Degenerate => {
                if matches!(candidates, Candidates::Dictionary { .. }) {
                    return Err(Error::DegenerateDictionary);
                }
                status = GreedyStatus::TrainingSetExhausted;
                break;
            }
        };
        let value = sensor.apply(&residual);
        let q: Vec<f64> = residual.iter().map(|x| x / value).collect();
        // r ← r − q ⊗ v(r)
        let hits: Vec<f64> = r.column_iter().map(|c| sensor.apply(c.as_slice())).collect();
        for (mut col, h) in r.column_iter_mut().zip(&hits) {
            col.iter_mut().zip(&q).for_each(|(x, qi)| *x -= h * qi);
        }
        magic.push(q);
        sensors.push(sensor);
        selection.push(Selection {
            snapshot: gen,
            sensor: index,
        });
    }

    let m = magic.len();
    let b = DMatrix::from_fn(m, m, |i, j| sensors[i].apply(&magic[j]));
    let mut model = EimModel {
        varname: train.varname().to_string(),
        components: comps,
        magic_functions: magic,
        sensors,
        b,
        max_abs_err: trace,
        selection,
        mean_coefficients: Vec::new(),
        status,
    };
    let mut beta = DMatrix::zeros(m, train.len());
    for (j, u) in train.iter().enumerate() {
        let y = model.measure(u)?;
        beta.column_mut(j).copy_from_slice(&model.coefficients(&y)?);
    }
    model.mean_coefficients = beta.column_mean().iter().copied().collect();
    Ok(EimFit { model, beta })
}

/// Classic EIM with point evaluations at grid dofs.
pub fn eim_fit(train: &SnapshotCollection, grid: &Grid, mmax: usize) -> Result<EimFit> {
    let max = train.len().min(train.dofs());
    if mmax > max {
        return Err(Error::invalid(format!("Mmax {mmax} exceeds min(snapshots, dofs) = {max}")));
    }
    let used = vec![false; train.dofs()];
    greedy(train, grid, mmax, Candidates::Dofs { grid, used })
}

/// GEIM over a sensor dictionary. Selected sensors leave the dictionary; if
/// it runs dry before `mmax` the fit stops with
/// [`GreedyStatus::DictionaryExhausted`].
pub fn geim_fit(
    train: &SnapshotCollection,
    grid: &Grid,
    dictionary: &[SensorFunctional],
    mmax: usize,
) -> Result<EimFit> {
    if dictionary.is_empty() {
        return Err(Error::invalid("empty sensor dictionary"));
    }
    for s in dictionary {
        s.apply_checked(train.get(0).unwrap_or(&vec![0.0; train.dofs()]))?;
    }
    let used = vec![false; dictionary.len()];
    greedy(train, grid, mmax, Candidates::Dictionary { list: dictionary, used })
}

impl EimModel {
    /// Assembles a model from stored magic functions and sensors.
    pub fn from_parts(
        varname: impl Into<String>,
        components: usize,
        magic_functions: Vec<Vec<f64>>,
        sensors: Vec<SensorFunctional>,
        mean_coefficients: Vec<f64>,
    ) -> Result<Self> {
        check_len("sensors vs magic functions", magic_functions.len(), sensors.len())?;
        if !mean_coefficients.is_empty() {
            check_len("mean coefficients", magic_functions.len(), mean_coefficients.len())?;
        }
        let m = magic_functions.len();
        let mut b = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                b[(i, j)] = sensors[i].apply_checked(&magic_functions[j])?;
            }
        }
        Ok(Self {
            varname: varname.into(),
            components,
            magic_functions,
            sensors,
            b,
            max_abs_err: Vec::new(),
            selection: Vec::new(),
            mean_coefficients,
            status: GreedyStatus::Completed,
        })
    }

    /// Attaches the training diagnostics of a stored model.
    pub fn with_history(mut self, max_abs_err: Vec<f64>, selection: Vec<Selection>, status: GreedyStatus) -> Result<Self> {
        if !max_abs_err.is_empty() {
            check_len("greedy error trace", self.len(), max_abs_err.len())?;
        }
        if !selection.is_empty() {
            check_len("greedy selections", self.len(), selection.len())?;
        }
        self.max_abs_err = max_abs_err;
        self.selection = selection;
        self.status = status;
        Ok(self)
    }

    pub fn varname(&self) -> &str {
        &self.varname
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Rank `M`.
    pub fn len(&self) -> usize {
        self.magic_functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magic_functions.is_empty()
    }

    pub fn dofs(&self) -> usize {
        self.magic_functions.first().map_or(0, Vec::len)
    }

    pub fn magic_functions(&self) -> &[Vec<f64>] {
        &self.magic_functions
    }

    pub fn sensors(&self) -> &[SensorFunctional] {
        &self.sensors
    }

    pub fn b_matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn max_abs_err(&self) -> &[f64] {
        &self.max_abs_err
    }

    pub fn selection(&self) -> &[Selection] {
        &self.selection
    }

    pub fn mean_coefficients(&self) -> &[f64] {
        &self.mean_coefficients
    }

    pub fn status(&self) -> GreedyStatus {
        self.status
    }

    /// Noise-free measurements of `field` by all `M` sensors.
    pub fn measure(&self, field: &[f64]) -> Result<Vec<f64>> {
        check_len("measured field dofs", self.dofs(), field.len())?;
        Ok(self.sensors.iter().map(|s| s.apply(field)).collect())
    }

    fn check_measurements(&self, y: &[f64]) -> Result<usize> {
        if y.is_empty() || y.len() > self.len() {
            return Err(Error::DimensionMismatch {
                what: "measurement count (1..=M)",
                expected: self.len(),
                found: y.len(),
            });
        }
        Ok(y.len())
    }

    /// Solves `B_m β = y` by forward substitution, `m = y.len()`.
    pub fn coefficients(&self, y: &[f64]) -> Result<Vec<f64>> {
        let m = self.check_measurements(y)?;
        let mut beta = vec![0.0; m];
        for i in 0..m {
            let mut acc = y[i];
            for j in 0..i {
                acc -= self.b[(i, j)] * beta[j];
            }
            beta[i] = acc / self.b[(i, i)];
        }
        Ok(beta)
    }

    /// `Σ βⱼ qⱼ` over the leading `β.len()` magic functions.
    pub fn expand(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dofs()];
        for (b, q) in beta.iter().zip(&self.magic_functions) {
            out.iter_mut().zip(q).for_each(|(o, x)| *o += b * x);
        }
        out
    }

    /// Interpolant of the measurements `y` (length `m ≤ M`, leading sensors).
    pub fn reconstruct(&self, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let beta = self.coefficients(y)?;
        let field = self.expand(&beta);
        Ok((beta, field))
    }

    /// Tikhonov-regularized reconstruction,
    /// `β = argmin ‖B_m β − y‖² + λ ‖β − β̄‖²` with `β̄` the training mean
    /// (zero when the model carries no training statistics).
    pub fn reconstruct_tikhonov(&self, y: &[f64], lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if !(lambda >= 0.0) {
            return Err(Error::invalid(format!("Tikhonov weight must be ≥ 0, got {lambda}")));
        }
        if lambda == 0.0 {
            return self.reconstruct(y);
        }
        let m = self.check_measurements(y)?;
        let b = self.b.view((0, 0), (m, m)).into_owned();
        let prior = if self.mean_coefficients.is_empty() {
            DVector::zeros(m)
        } else {
            DVector::from_column_slice(&self.mean_coefficients[..m])
        };
        let lhs = b.transpose() * &b + DMatrix::identity(m, m) * lambda;
        let rhs = b.transpose() * DVector::from_column_slice(y) + prior * lambda;
        let beta = lhs
            .cholesky()
            .ok_or_else(|| Error::Numerical("regularized normal matrix is not positive definite".into()))?
            .solve(&rhs);
        let beta: Vec<f64> = beta.iter().copied().collect();
        let field = self.expand(&beta);
        Ok((beta, field))
    }

    /// Lebesgue constants `Λ_m = max_x Σⱼ |hⱼ(x)|` for `m = 1..=M`, with
    /// Lagrange functions `hⱼ = Σₖ qₖ (B_m⁻¹)ₖⱼ` evaluated at every dof.
    pub fn lebesgue_constants(&self) -> Result<Vec<f64>> {
        let m = self.len();
        if m == 0 {
            return Ok(Vec::new());
        }
        if (0..m).any(|i| self.b[(i, i)].abs() < 1e-300) {
            return Err(Error::Numerical("interpolation matrix has a zero pivot".into()));
        }
        let lower = self.b.lower_triangle();
        let inv = lower
            .solve_lower_triangular(&DMatrix::identity(m, m))
            .ok_or_else(|| Error::Numerical("interpolation matrix is singular".into()))?;
        let q = DMatrix::from_fn(self.dofs(), m, |i, j| self.magic_functions[j][i]);
        let mut out = Vec::with_capacity(m);
        for k in 1..=m {
            // the leading block of the inverse inverts the leading block
            let h = q.columns(0, k) * inv.view((0, 0), (k, k));
            let lam = h.row_iter().map(|row| row.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
            out.push(lam);
        }
        Ok(out)
    }
}

/// CSV `m,max_abs_err,lebesgue`.
pub fn greedy_errors_csv(max_abs_err: &[f64], lebesgue: &[f64]) -> String {
    let mut out = String::from("m,max_abs_err,lebesgue\n");
    for (i, (e, l)) in max_abs_err.iter().zip(lebesgue).enumerate() {
        out.push_str(&format!("{},{e},{l}\n", i + 1));
    }
    out
}

/// CSV `m,lebesgue`.
pub fn lebesgue_csv(lebesgue: &[f64]) -> String {
    let mut out = String::from("m,lebesgue\n");
    for (i, l) in lebesgue.iter().enumerate() {
        out.push_str(&format!("{},{l}\n", i + 1));
    }
    out
}
