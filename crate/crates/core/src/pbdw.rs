//! Parameterized-background data-weak state estimation.
//!
//! The estimate is `u* = Σ zₙ φₙ + Σ ηₘ ĝₘ`: a background part in the
//! reduced space plus an update in the span of the sensors' unit-norm Riesz
//! representers. The coefficients solve the saddle system
//!
//! ```text
//! [ A + ξ·M·I   K ] [η]   [ŷ]
//! [ Kᵀ          0 ] [z] = [0]
//! ```
//!
//! with `A = ⟨ĝₘ, ĝₘ'⟩`, `K = ⟨ĝₘ, φₙ⟩` and `ŷₘ = yₘ / ‖gₘ‖` (the
//! measurement a unit-norm representer would report).
//!
//! The first block row is divided by `s = 1 + ξ·M` (and `η` multiplied by
//! it) before solving, so large `ξ` does not wreck the conditioning.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{check_len, Error, Result};
use crate::grid::Grid;
use crate::reduction::ReducedBasis;
use crate::sensors::SensorFunctional;

/// Threshold on the smallest singular value of `K` (and of the saddle
/// matrix) below which the problem is declared ill-posed.
pub const SOLVABILITY_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PbdwModel {
    basis: ReducedBasis,
    sensors: Vec<SensorFunctional>,
    representers: Vec<Vec<f64>>,
    representer_norms: Vec<f64>,
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    xi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PbdwEstimate {
    pub z: Vec<f64>,
    pub eta: Vec<f64>,
    pub field: Vec<f64>,
}

impl PbdwModel {
    pub fn new(basis: ReducedBasis, sensors: Vec<SensorFunctional>, grid: &Grid, xi: f64) -> Result<Self> {
        if !(xi >= 0.0) {
            return Err(Error::invalid(format!("regularization weight ξ must be ≥ 0, got {xi}")));
        }
        let (n, m) = (basis.len(), sensors.len());
        if n == 0 || m < n {
            return Err(Error::invalid(format!("PBDW needs M ≥ N ≥ 1, got M = {m}, N = {n}")));
        }
        let comps = grid.components(basis.dofs())?;
        let w = grid.dof_weights(comps);
        let mut representers = Vec::with_capacity(m);
        let mut norms = Vec::with_capacity(m);
        for s in &sensors {
            let (g, nrm) = s.riesz_representer(&w)?;
            representers.push(g);
            norms.push(nrm);
        }
        let gram = DMatrix::from_fn(m, m, |i, j| {
            representers[i].iter().zip(&representers[j]).zip(&w).map(|((a, b), w)| a * b * w).sum()
        });
        let cross = DMatrix::from_fn(m, n, |i, k| sensors[i].apply(basis.mode(k)) / norms[i]);
        let smin = SVD::new(cross.clone(), false, false).singular_values.min();
        if smin < SOLVABILITY_THRESHOLD {
            return Err(Error::IllPosed { sigma_min: smin });
        }
        Ok(Self {
            basis,
            sensors,
            representers,
            representer_norms: norms,
            gram,
            cross,
            xi,
        })
    }

    pub fn basis(&self) -> &ReducedBasis {
        &self.basis
    }

    pub fn sensors(&self) -> &[SensorFunctional] {
        &self.sensors
    }

    pub fn representers(&self) -> &[Vec<f64>] {
        &self.representers
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn cross(&self) -> &DMatrix<f64> {
        &self.cross
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn with_xi(mut self, xi: f64) -> Result<Self> {
        if !(xi >= 0.0) {
            return Err(Error::invalid(format!("regularization weight ξ must be ≥ 0, got {xi}")));
        }
        self.xi = xi;
        Ok(self)
    }

    /// Measurements of `field` by every sensor.
    pub fn measure(&self, field: &[f64]) -> Result<Vec<f64>> {
        check_len("measured field dofs", self.basis.dofs(), field.len())?;
        Ok(self.sensors.iter().map(|s| s.apply(field)).collect())
    }

    /// Measurements rescaled to unit-norm representers.
    pub fn normalized(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("PBDW measurements", self.sensors.len(), y.len())?;
        Ok(y.iter().zip(&self.representer_norms).map(|(v, n)| v / n).collect())
    }

    pub fn estimate(&self, y: &[f64]) -> Result<PbdwEstimate> {
        let yhat = self.normalized(y)?;
        let (m, n) = (self.sensors.len(), self.basis.len());
        let reg = self.xi * m as f64;
        let s = 1.0 + reg;
        let mut lhs = DMatrix::zeros(m + n, m + n);
        lhs.view_mut((0, 0), (m, m)).copy_from(&(&self.gram / s));
        for i in 0..m {
            lhs[(i, i)] += reg / s;
        }
        lhs.view_mut((0, m), (m, n)).copy_from(&self.cross);
        lhs.view_mut((m, 0), (n, m)).copy_from(&self.cross.transpose());
        let mut rhs = DVector::zeros(m + n);
        rhs.rows_mut(0, m).copy_from_slice(&yhat);

        let svd = SVD::new(lhs.clone(), false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > SOLVABILITY_THRESHOLD * smax) {
            return Err(Error::IllPosed { sigma_min: smin });
        }
        let sol = lhs
            .full_piv_lu()
            .solve(&rhs)
            .ok_or(Error::IllPosed { sigma_min: smin })?;
        let eta: Vec<f64> = sol.rows(0, m).iter().map(|e| e / s).collect();
        let z: Vec<f64> = sol.rows(m, n).iter().copied().collect();

        let mut field = self.basis.reconstruct(&z)?;
        for (e, g) in eta.iter().zip(&self.representers) {
            field.iter_mut().zip(g).for_each(|(f, gi)| *f += e * gi);
        }
        Ok(PbdwEstimate { z, eta, field })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Extent;
    use crate::reduction::pod_fit;
    use crate::sensors::{accept_all, gaussian_dictionary};
    use crate::toy::{linspace, toy_dataset, ToyVariant};

    fn setup(xi: f64) -> PbdwModel {
        let g = Grid::image(12, 12, Extent::UNIT).unwrap();
        let (_, snaps) = toy_dataset(&g, &linspace(-3.0, 3.0, 20), ToyVariant::Snippet).unwrap();
        let basis = pod_fit(&snaps, &g, 4).unwrap();
        let sensors = gaussian_dictionary(&g, 1, 0.08, 17, &accept_all).unwrap();
        PbdwModel::new(basis, sensors, &g, xi).unwrap()
    }

    #[test]
    fn first_mode_is_recovered_exactly() {
        let model = setup(0.0);
        let y = model.measure(model.basis().mode(0)).unwrap();
        let est = model.estimate(&y).unwrap();
        assert!((est.z[0] - 1.0).abs() < 1e-8);
        assert!(est.z[1..].iter().all(|z| z.abs() < 1e-8));
        assert!(est.eta.iter().all(|e| e.abs() < 1e-8));
    }

    #[test]
    fn needs_enough_sensors() {
        let g = Grid::image(6, 6, Extent::UNIT).unwrap();
        let (_, snaps) = toy_dataset(&g, &linspace(-3.0, 3.0, 10), ToyVariant::Snippet).unwrap();
        let basis = pod_fit(&snaps, &g, 4).unwrap();
        let sensors = gaussian_dictionary(&g, 1, 0.08, 20, &accept_all).unwrap();
        assert!(sensors.len() < 4);
        assert!(PbdwModel::new(basis.clone(), sensors, &g, 0.0).is_err());
        let same = vec![SensorFunctional::point(&g, 1, 3, 0).unwrap(); 4];
        assert!(matches!(PbdwModel::new(basis, same, &g, 0.0), Err(Error::IllPosed { .. })));
    }

    #[test]
    fn large_xi_gives_least_squares_background() {
        let model = setup(1e12);
        let y: Vec<f64> = (0..model.sensors().len()).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let est = model.estimate(&y).unwrap();
        let k = model.cross();
        let yhat = DVector::from_vec(model.normalized(&y).unwrap());
        let z = (k.transpose() * k).cholesky().unwrap().solve(&(k.transpose() * yhat));
        for (a, b) in est.z.iter().zip(z.iter()) {
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
        assert!(est.eta.iter().all(|e| e.abs() < 1e-9));
    }

    #[test]
    fn measurement_length_is_checked() {
        let model = setup(0.0);
        assert!(model.estimate(&[1.0]).is_err());
        assert!(setup(0.0).with_xi(-1.0).is_err());
    }
}
