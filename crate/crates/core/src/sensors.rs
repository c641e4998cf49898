//! Discrete sensor functionals and candidate dictionaries.

use crate::error::{check_len, Error, Result};
use crate::grid::{dist2, Grid};

/// Gaussian weights smaller than this fraction of the peak are dropped.
const GAUSSIAN_CUTOFF: f64 = 1e-16;

/// Meshes above this size get a coarsened default dictionary lattice.
pub const DENSE_DICTIONARY_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensorKind {
    Point,
    Gaussian { width: f64 },
    /// Arbitrary functional given by its Riesz representer.
    Custom,
}

impl SensorKind {
    pub fn name(&self) -> &'static str {
        match self {
            SensorKind::Point => "point",
            SensorKind::Gaussian { .. } => "gaussian",
            SensorKind::Custom => "custom",
        }
    }
}

/// Linear functional `v(u) = Σ cᵢ uᵢ` over the dofs of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorFunctional {
    pub kind: SensorKind,
    pub location: [f64; 3],
    /// Dof nearest to the sensor centre.
    pub grid_index: usize,
    pub component: usize,
    /// Sparse `(dof, coefficient)` pairs, ascending dof order.
    weights: Vec<(usize, f64)>,
}

impl SensorFunctional {
    /// Point evaluation of `component` at grid point `point`.
    pub fn point(grid: &Grid, components: usize, point: usize, component: usize) -> Result<Self> {
        if point >= grid.len() || component >= components {
            return Err(Error::invalid(format!(
                "point sensor at ({point}, {component}) outside grid of {} points × {components} components",
                grid.len()
            )));
        }
        let dof = point * components + component;
        Ok(Self {
            kind: SensorKind::Point,
            location: grid.points()[point],
            grid_index: dof,
            component,
            weights: vec![(dof, 1.0)],
        })
    }

    /// Point evaluation at the grid point nearest to `x`.
    pub fn point_at(grid: &Grid, components: usize, x: [f64; 3], component: usize) -> Result<Self> {
        Self::point(grid, components, grid.nearest_point(x), component)
    }

    /// Gaussian local average centred at `x` with width `s`:
    /// coefficients `∝ wᵢ exp(−‖xᵢ − x‖² / 2s²)`, scaled so that the
    /// functional maps the constant 1 to 1.
    pub fn gaussian(grid: &Grid, components: usize, x: [f64; 3], width: f64, component: usize) -> Result<Self> {
        if !(width > 0.0) || component >= components {
            return Err(Error::invalid(format!(
                "gaussian sensor needs width > 0 and component < {components}"
            )));
        }
        let logs: Vec<f64> = grid.points().iter().map(|p| -dist2(*p, x) / (2.0 * width * width)).collect();
        let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut weights = Vec::new();
        let mut total = 0.0;
        for (i, (l, w)) in logs.iter().zip(grid.weights()).enumerate() {
            let e = (l - peak).exp();
            if e >= GAUSSIAN_CUTOFF && *w > 0.0 {
                weights.push((i * components + component, w * e));
                total += w * e;
            }
        }
        if !(total > 0.0) {
            return Err(Error::Numerical(format!("gaussian sensor at {x:?} has no weighted support")));
        }
        weights.iter_mut().for_each(|(_, c)| *c /= total);
        Ok(Self {
            kind: SensorKind::Gaussian { width },
            location: x,
            grid_index: grid.nearest_point(x) * components + component,
            component,
            weights,
        })
    }

    /// Functional whose grid Riesz representer is `field`, `v(u) = ⟨field, u⟩`.
    pub fn from_representer(grid: &Grid, field: &[f64]) -> Result<Self> {
        let components = grid.components(field.len())?;
        let dw = grid.dof_weights(components);
        let weights: Vec<(usize, f64)> = field
            .iter()
            .zip(&dw)
            .enumerate()
            .filter(|(_, (f, _))| **f != 0.0)
            .map(|(i, (f, w))| (i, f * w))
            .collect();
        let mut peak = (0, 0.0);
        for (i, f) in field.iter().enumerate() {
            if f.abs() > peak.1 {
                peak = (i, f.abs());
            }
        }
        Ok(Self {
            kind: SensorKind::Custom,
            location: grid.points()[peak.0 / components],
            grid_index: peak.0,
            component: peak.0 % components,
            weights,
        })
    }

    pub fn coefficients(&self) -> &[(usize, f64)] {
        &self.weights
    }

    pub fn width(&self) -> Option<f64> {
        match self.kind {
            SensorKind::Gaussian { width } => Some(width),
            _ => None,
        }
    }

    /// `v(field)`. The field must cover every dof the sensor touches.
    pub fn apply(&self, field: &[f64]) -> f64 {
        self.weights.iter().map(|&(i, c)| c * field[i]).sum()
    }

    pub fn apply_checked(&self, field: &[f64]) -> Result<f64> {
        match self.weights.last() {
            Some(&(i, _)) if i >= field.len() => Err(Error::DimensionMismatch {
                what: "field dofs for sensor",
                expected: i + 1,
                found: field.len(),
            }),
            _ => Ok(self.apply(field)),
        }
    }

    pub fn dense(&self, dofs: usize) -> Vec<f64> {
        let mut out = vec![0.0; dofs];
        for &(i, c) in &self.weights {
            out[i] = c;
        }
        out
    }

    /// Grid norm of the Riesz representer `g = c / w` (entrywise).
    pub fn riesz_norm(&self, dof_weights: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for &(i, c) in &self.weights {
            let w = dof_weights[i];
            if !(w > 0.0) {
                return Err(Error::Numerical(format!("sensor touches dof {i} with zero quadrature weight")));
            }
            acc += c * c / w;
        }
        Ok(acc.sqrt())
    }

    /// Riesz representer normalized to unit grid norm, with the norm of the
    /// unnormalized representer.
    pub fn riesz_representer(&self, dof_weights: &[f64]) -> Result<(Vec<f64>, f64)> {
        let nrm = self.riesz_norm(dof_weights)?;
        if !(nrm > 0.0) {
            return Err(Error::Numerical("sensor functional is identically zero".into()));
        }
        let mut g = vec![0.0; dof_weights.len()];
        for &(i, c) in &self.weights {
            g[i] = c / dof_weights[i] / nrm;
        }
        Ok((g, nrm))
    }
}

/// Default lattice stride: every point on small meshes, coarsened so the
/// dictionary holds at most about [`DENSE_DICTIONARY_LIMIT`] centres otherwise.
pub fn default_stride(points: usize) -> usize {
    if points <= DENSE_DICTIONARY_LIMIT {
        1
    } else {
        points.div_ceil(DENSE_DICTIONARY_LIMIT)
    }
}

fn lattice<'a>(grid: &'a Grid, stride: usize, mask: &'a dyn Fn(&[f64; 3]) -> bool) -> impl Iterator<Item = usize> + 'a {
    (0..grid.len()).step_by(stride.max(1)).filter(move |&i| mask(&grid.points()[i]))
}

/// Point sensors at every `stride`-th grid point accepted by `mask`, one per
/// component, in dof order.
pub fn point_dictionary(
    grid: &Grid,
    components: usize,
    stride: usize,
    mask: &dyn Fn(&[f64; 3]) -> bool,
) -> Result<Vec<SensorFunctional>> {
    let mut out = Vec::new();
    for i in lattice(grid, stride, mask) {
        for c in 0..components {
            out.push(SensorFunctional::point(grid, components, i, c)?);
        }
    }
    Ok(out)
}

/// Gaussian sensors of fixed width centred on a lattice of grid points.
pub fn gaussian_dictionary(
    grid: &Grid,
    components: usize,
    width: f64,
    stride: usize,
    mask: &dyn Fn(&[f64; 3]) -> bool,
) -> Result<Vec<SensorFunctional>> {
    let mut out = Vec::new();
    for i in lattice(grid, stride, mask) {
        for c in 0..components {
            out.push(SensorFunctional::gaussian(grid, components, grid.points()[i], width, c)?);
        }
    }
    Ok(out)
}

pub fn accept_all(_: &[f64; 3]) -> bool {
    true
}

/// Measurements `v_m(field)` of every sensor.
pub fn measure(sensors: &[SensorFunctional], field: &[f64]) -> Result<Vec<f64>> {
    sensors.iter().map(|s| s.apply_checked(field)).collect()
}

pub fn sensors_csv(sensors: &[SensorFunctional]) -> String {
    let mut out = String::from("kind,x,y,z,width,grid_index\n");
    for s in sensors {
        let [x, y, z] = s.location;
        let width = s.width().map_or(String::new(), |w| w.to_string());
        out.push_str(&format!("{},{x},{y},{z},{width},{}\n", s.kind.name(), s.grid_index));
    }
    out
}

/// Rebuilds point and gaussian sensors from [`sensors_csv`] output.
pub fn sensors_from_csv(grid: &Grid, components: usize, text: &str) -> Result<Vec<SensorFunctional>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("kind,x,y,z,width,grid_index") => {}
        other => return Err(Error::invalid(format!("unexpected sensor CSV header {other:?}"))),
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        check_len("sensor CSV columns", 6, cols.len())?;
        let bad = |what: &str| Error::invalid(format!("sensor CSV row {}: bad {what}", n + 2));
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
        let location = [num(cols[1], "x")?, num(cols[2], "y")?, num(cols[3], "z")?];
        let dof: usize = cols[5].parse().map_err(|_| bad("grid_index"))?;
        let (point, component) = (dof / components, dof % components);
        let s = match cols[0] {
            "point" => SensorFunctional::point(grid, components, point, component)?,
            "gaussian" => SensorFunctional::gaussian(grid, components, location, num(cols[4], "width")?, component)?,
            other => return Err(Error::Unsupported(format!("sensor kind `{other}` cannot be rebuilt from CSV"))),
        };
        out.push(s);
    }
    Ok(out)
}
