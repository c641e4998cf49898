use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64;

use romkit::estimation::{add_noise, compute_errors};
use romkit::grid::{Extent, Grid};
use romkit::interpolation::{eim_fit, geim_fit};
use romkit::io::bundle::{read_snapshots, write_snapshots};
use romkit::pbdw::PbdwModel;
use romkit::reduction::pod_fit;
use romkit::sensors::{accept_all, gaussian_dictionary, SensorFunctional};
use romkit::sgreedy::inf_sup_constant;
use romkit::snapshots::SnapshotCollection;
use romkit::surrogate::{GpOptions, GpSurrogate, SurrogateModel};
use romkit::toy::{linspace, toy_dataset, ToyVariant};

fn gaussian_rows(rng: &mut Pcg64, count: usize, dofs: usize) -> Vec<Vec<f64>> {
    (0..count).map(|_| (0..dofs).map(|_| StandardNormal.sample(&mut *rng)).collect()).collect()
}

/// `count` random combinations of `rank` smooth patterns on `g`.
fn low_rank(g: &Grid, rank: usize, count: usize, seed: u64) -> SnapshotCollection {
    let mut rng = Pcg64::seed_from_u64(seed);
    let patterns: Vec<Vec<f64>> = (0..rank)
        .map(|k| {
            let (a, b) = (1.0 + k as f64, 0.5 + 0.7 * k as f64);
            g.points().iter().map(|p| (a * p[0] + 0.3).sin() * (b * p[1] - 0.2).cos() + 0.1 * k as f64 * p[0]).collect()
        })
        .collect();
    let rows = (0..count)
        .map(|_| {
            let c: Vec<f64> = (0..rank).map(|_| StandardNormal.sample(&mut rng)).collect();
            (0..g.len()).map(|i| patterns.iter().zip(&c).map(|(p, c)| c * p[i]).sum()).collect()
        })
        .collect();
    SnapshotCollection::from_entries("u", 1, rows).unwrap()
}

fn sym_min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bundle_round_trip_preserves_bits(
        rows in prop::collection::vec(prop::collection::vec(any::<f64>(), 6), 1..8),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let snaps = SnapshotCollection::from_entries("f", 2, rows).unwrap();
        write_snapshots(dir.path().join("b"), &snaps, None).unwrap();
        let (back, params) = read_snapshots(dir.path().join("b")).unwrap();
        prop_assert!(params.is_none());
        prop_assert_eq!(back.len(), snaps.len());
        for (x, y) in snaps.iter().zip(back.iter()) {
            let xb: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(xb, yb);
        }
    }

    #[test]
    fn pbdw_gram_is_positive_semidefinite(seed in any::<u64>(), m in 2usize..12, width in 0.03f64..0.4) {
        let g = Grid::image(10, 10, Extent::UNIT).unwrap();
        let snaps = low_rank(&g, 3, 8, seed);
        let basis = pod_fit(&snaps, &g, 2).unwrap();
        let mut rng = Pcg64::seed_from_u64(seed);
        let sensors: Vec<SensorFunctional> = (0..m)
            .map(|_| {
                let x = [rng.random::<f64>(), rng.random::<f64>(), 0.0];
                SensorFunctional::gaussian(&g, 1, x, width, 0).unwrap()
            })
            .collect();
        let model = PbdwModel::new(basis, sensors, &g, 1.0).unwrap();
        let gram = model.gram();
        prop_assert!((gram - gram.transpose()).amax() <= 1e-12 * gram.amax());
        prop_assert!(sym_min_eig(gram) >= -1e-10 * gram.amax());
    }

    #[test]
    fn pod_modes_orthonormal_errors_monotone_energy_conserved(seed in any::<u64>(), count in 3usize..12) {
        let g = Grid::image(9, 7, Extent::new(0.0, 2.0, 0.0, 1.0)).unwrap();
        let mut rng = Pcg64::seed_from_u64(seed);
        let snaps = SnapshotCollection::from_entries("u", 1, gaussian_rows(&mut rng, count, g.len())).unwrap();
        let basis = pod_fit(&snaps, &g, count).unwrap();
        prop_assert!(basis.orthonormality_defect() <= 1e-10);

        let energy: f64 = snaps.iter().map(|u| g.norm(u).unwrap().powi(2)).sum();
        let sv2: f64 = basis.singular_values().iter().map(|s| s * s).sum();
        prop_assert!((energy - sv2).abs() <= 1e-8 * energy, "{} vs {}", energy, sv2);

        for u in snaps.iter() {
            let mut last = f64::INFINITY;
            for n in 0..=basis.len() {
                let r = basis.reconstruct(&basis.project_n(u, n).unwrap()).unwrap();
                let d: Vec<f64> = u.iter().zip(&r).map(|(a, b)| a - b).collect();
                let e = g.norm(&d).unwrap() / g.norm(u).unwrap();
                prop_assert!(e <= last + 1e-12, "n = {}: {} > {}", n, e, last);
                last = e;
            }
        }
    }

    #[test]
    fn eim_is_deterministic_and_exact_on_generators(seed in any::<u64>(), count in 2usize..10) {
        let g = Grid::image(8, 6, Extent::UNIT).unwrap();
        let mut rng = Pcg64::seed_from_u64(seed);
        let snaps = SnapshotCollection::from_entries("u", 1, gaussian_rows(&mut rng, count, g.len())).unwrap();
        let a = eim_fit(&snaps, &g, count).unwrap().model;
        let b = eim_fit(&snaps, &g, count).unwrap().model;
        prop_assert_eq!(a.selection(), b.selection());
        prop_assert_eq!(a.max_abs_err(), b.max_abs_err());
        for (k, sel) in a.selection().iter().enumerate() {
            let u = snaps.get(sel.snapshot).unwrap();
            let y = a.measure(u).unwrap();
            for r in k + 1..=a.len() {
                let (_, f) = a.reconstruct(&y[..r]).unwrap();
                let err = u.iter().zip(&f).fold(0.0f64, |m, (x, z)| m.max((x - z).abs()));
                prop_assert!(err <= 1e-10 * u.iter().fold(1.0f64, |m, x| m.max(x.abs())));
            }
        }
    }

    #[test]
    fn geim_reproduces_fields_in_the_magic_span(seed in any::<u64>()) {
        let g = Grid::image(12, 12, Extent::UNIT).unwrap();
        let snaps = low_rank(&g, 5, 12, seed);
        let dict = gaussian_dictionary(&g, 1, 0.12, 2, &accept_all).unwrap();
        let model = geim_fit(&snaps, &g, &dict, 5).unwrap().model;
        let mut rng = Pcg64::seed_from_u64(seed ^ 1);
        let c: Vec<f64> = (0..model.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let u: Vec<f64> = (0..g.len())
            .map(|i| model.magic_functions().iter().zip(&c).map(|(q, c)| c * q[i]).sum())
            .collect();
        let (_, f) = model.reconstruct(&model.measure(&u).unwrap()).unwrap();
        let scale = u.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let err = u.iter().zip(&f).fold(0.0f64, |m, (x, z)| m.max((x - z).abs()));
        prop_assert!(err <= 1e-9 * scale, "{}", err);
    }

    #[test]
    fn tikhonov_endpoints(seed in any::<u64>(), level in 0.0f64..0.1) {
        let g = Grid::image(12, 12, Extent::UNIT).unwrap();
        let snaps = low_rank(&g, 4, 15, seed);
        let dict = gaussian_dictionary(&g, 1, 0.1, 3, &accept_all).unwrap();
        let model = geim_fit(&snaps, &g, &dict, 4).unwrap().model;
        let clean = model.measure(snaps.get(0).unwrap()).unwrap();
        let y = add_noise(&clean, level, seed).unwrap().values;
        let (plain, _) = model.reconstruct(&y).unwrap();
        let (zero, _) = model.reconstruct_tikhonov(&y, 0.0).unwrap();
        prop_assert_eq!(&plain, &zero);
        let (big, _) = model.reconstruct_tikhonov(&y, 1e12).unwrap();
        for (b, mean) in big.iter().zip(model.mean_coefficients()) {
            prop_assert!((b - mean).abs() <= 1e-6 * (1.0 + mean.abs()), "{} vs {}", b, mean);
        }
    }

    #[test]
    fn inf_sup_is_nonincreasing_in_n(seed in any::<u64>(), m in 6usize..14) {
        let g = Grid::image(12, 12, Extent::UNIT).unwrap();
        let snaps = low_rank(&g, 6, 12, seed);
        let basis = pod_fit(&snaps, &g, 6).unwrap();
        let dict = gaussian_dictionary(&g, 1, 0.08, 1, &accept_all).unwrap();
        let mut rng = Pcg64::seed_from_u64(seed);
        let sensors: Vec<SensorFunctional> = (0..m)
            .map(|_| dict[rng.random_range(0..dict.len())].clone())
            .collect();
        let mut last = f64::INFINITY;
        for n in 1..=6 {
            let b = inf_sup_constant(&basis, &sensors, &g, n).unwrap();
            prop_assert!(b <= last + 1e-12, "n = {}: {} > {}", n, b, last);
            last = b;
        }
    }

    #[test]
    fn add_noise_has_the_requested_spread(seed in any::<u64>(), level in 0.001f64..0.2, peak in 0.1f64..100.0) {
        let y: Vec<f64> = (0..100_000).map(|i| peak * ((i as f64) * 0.001).sin()).collect();
        let noisy = add_noise(&y, level, seed).unwrap();
        let sigma = noisy.noise.as_ref().unwrap().sigma;
        let max = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!((sigma - level * max).abs() <= 1e-15 * sigma);
        let d: Vec<f64> = noisy.values.iter().zip(&y).map(|(a, b)| a - b).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let std = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
        prop_assert!((std / sigma - 1.0).abs() <= 0.02, "{} vs {}", std, sigma);
    }

    #[test]
    fn compute_errors_is_reproducible_and_nonnegative(seed in any::<u64>(), count in 1usize..6) {
        let g = Grid::image(6, 5, Extent::UNIT).unwrap();
        let mut rng = Pcg64::seed_from_u64(seed);
        let mut rows = gaussian_rows(&mut rng, count, g.len());
        rows[0] = vec![0.0; g.len()];
        let truth = SnapshotCollection::from_entries("u", 1, rows).unwrap();
        let est = gaussian_rows(&mut rng, count, g.len());
        let a = compute_errors(&g, &truth, |i| Ok(est[i].clone())).unwrap();
        let b = compute_errors(&g, &truth, |i| Ok(est[i].clone())).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            prop_assert!(x.rel_err >= 0.0 && x.abs_err >= 0.0);
            prop_assert_eq!(x.abs_err.to_bits(), y.abs_err.to_bits());
            prop_assert_eq!(x.rel_err.to_bits(), y.rel_err.to_bits());
            prop_assert_eq!(x.rel_undefined, y.rel_undefined);
        }
        prop_assert!(a.rows[0].rel_undefined);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn gp_surrogate_is_deterministic_with_nonnegative_std(seed in any::<u64>(), n in 4usize..12) {
        let mut rng = Pcg64::seed_from_u64(seed);
        let inputs: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64, StandardNormal.sample(&mut rng)]).collect();
        let targets = DMatrix::from_fn(2, n, |r, j| (3.0 * inputs[j][0]).sin() + r as f64 * inputs[j][1]);
        let opts = GpOptions { restarts: 2, seed, ..GpOptions::default() };
        let a = GpSurrogate::fit(&inputs, &targets, opts).unwrap();
        let b = GpSurrogate::fit(&inputs, &targets, opts).unwrap();
        let probe: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random_range(-0.5..1.5), StandardNormal.sample(&mut rng)]).collect();
        let (pa, pb) = (a.predict(&probe).unwrap(), b.predict(&probe).unwrap());
        prop_assert!(pa.iter().zip(pb.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let std = a.predict_std(&probe).unwrap();
        prop_assert!(std.iter().all(|s| *s >= 0.0 && s.is_finite()));
        prop_assert_eq!(std, b.predict_std(&probe).unwrap());
    }
}

/// Mean PBDW error over 20 noise seeds should not grow as sensors are added.
#[test]
fn pbdw_noisy_error_trend_in_m() {
    let g = Grid::image(30, 30, Extent::UNIT).unwrap();
    let (_, snaps) = toy_dataset(&g, &linspace(-5.0, 5.0, 40), ToyVariant::Prose).unwrap();
    let basis = pod_fit(&snaps, &g, 5).unwrap();
    let dict = gaussian_dictionary(&g, 1, 0.05, 1, &accept_all).unwrap();
    let mut rng = Pcg64::seed_from_u64(3);
    let mut order: Vec<usize> = (0..dict.len()).collect();
    order.shuffle(&mut rng);
    let truth = toy_dataset(&g, &[-2.3, 0.7, 3.9], ToyVariant::Prose).unwrap().1;
    let mut means = Vec::new();
    for m in [10, 20, 40, 80] {
        let sensors: Vec<SensorFunctional> = order[..m].iter().map(|&i| dict[i].clone()).collect();
        let model = PbdwModel::new(basis.clone(), sensors, &g, 0.0).unwrap();
        let mut total = 0.0;
        for seed in 0..20u64 {
            for u in truth.iter() {
                let y = add_noise(&model.measure(u).unwrap(), 0.01, seed).unwrap().values;
                let est = model.estimate(&y).unwrap();
                let d: Vec<f64> = u.iter().zip(&est.field).map(|(a, b)| a - b).collect();
                total += g.norm(&d).unwrap() / g.norm(u).unwrap();
            }
        }
        means.push(total / (20.0 * truth.len() as f64));
    }
    for w in means.windows(2) {
        assert!(w[1] <= w[0] * 1.02, "{means:?}");
    }
    assert!(means[3] < means[0], "{means:?}");
}
