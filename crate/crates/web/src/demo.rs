use romkit::estimation::{add_noise, field_error};
use romkit::grid::{Extent, Grid};
use romkit::interpolation::{eim_fit, EimModel};
use romkit::reduction::{pod_fit, ReducedBasis};
use romkit::toy::{linspace, toy_dataset, toy_field, ToyVariant};
use romkit::Result;

/// Toy snapshots on an `nx × nx`-element unit-square image, a POD basis and an EIM
/// sensor placement fitted on them.
#[derive(Debug, Clone)]
pub struct Demo {
    grid: Grid,
    side: usize,
    variant: ToyVariant,
    basis: ReducedBasis,
    eim: EimModel,
}

impl Demo {
    pub fn new(nx: usize, count: usize, rank: usize, sensors: usize, variant: ToyVariant) -> Result<Self> {
        let grid = Grid::image(nx, nx, Extent::UNIT)?;
        let (_, snaps) = toy_dataset(&grid, &linspace(-5.0, 5.0, count), variant)?;
        let basis = pod_fit(&snaps, &grid, rank.min(count))?;
        let eim = eim_fit(&snaps, &grid, sensors.min(count))?.model;
        Ok(Self { grid, side: nx + 1, variant, basis, eim })
    }

    /// Points per side; fields are `side × side`, x varying fastest.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn sensor_count(&self) -> usize {
        self.eim.len()
    }

    pub fn singular_values(&self) -> &[f64] {
        self.basis.singular_values()
    }

    pub fn field(&self, mu: f64) -> Vec<f64> {
        toy_field(&self.grid, mu, self.variant)
    }

    /// Projection onto the leading `n` POD modes.
    pub fn compress(&self, mu: f64, n: usize) -> Result<Vec<f64>> {
        let u = self.field(mu);
        self.basis.reconstruct(&self.basis.project_n(&u, n.min(self.rank()))?)
    }

    /// `[x0, y0, x1, y1, …]` of the first `m` magic points.
    pub fn sensor_points(&self, m: usize) -> Vec<f64> {
        let pts = self.grid.points();
        self.eim.selection()[..m.min(self.sensor_count())]
            .iter()
            .flat_map(|s| [pts[s.sensor][0], pts[s.sensor][1]])
            .collect()
    }

    /// EIM reconstruction from the first `m` point values, perturbed with
    /// relative noise `level`. `regularize` switches to the Tikhonov form
    /// with weight `m·σ²`.
    pub fn interpolate(&self, mu: f64, m: usize, level: f64, seed: u64, regularize: bool) -> Result<Vec<f64>> {
        let m = m.clamp(1, self.sensor_count());
        let y = self.eim.measure(&self.field(mu))?;
        let noisy = add_noise(&y[..m], level, seed)?;
        let sigma = noisy.sigma();
        let (_, field) = if regularize {
            self.eim.reconstruct_tikhonov(&noisy.values, m as f64 * sigma * sigma)?
        } else {
            self.eim.reconstruct(&noisy.values)?
        };
        Ok(field)
    }

    /// Relative L² error of `estimate` against the field at `mu`.
    pub fn relative_error(&self, mu: f64, estimate: &[f64]) -> Result<f64> {
        Ok(field_error(&self.grid, &self.field(mu), estimate)?.1)
    }
}
