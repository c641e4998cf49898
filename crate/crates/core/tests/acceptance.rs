//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! (written straight to stdout so it shows without `--nocapture`).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64;

use romkit::estimation::{noise_sweep, field_error};
use romkit::grid::{Extent, Grid};
use romkit::interpolation::{eim_fit, geim_fit, EimModel};
use romkit::io::bundle::{read_snapshots, write_snapshots};
use romkit::io::openfoam::OpenFoamCase;
use romkit::io::vtk::read_vtk;
use romkit::pbdw::PbdwModel;
use romkit::reduction::{pod_fit, rsvd_fit, RsvdOptions};
use romkit::sensors::{accept_all, gaussian_dictionary, point_dictionary, SensorFunctional};
use romkit::sgreedy::{inf_sup_constant, sgreedy, SGreedyOptions};
use romkit::snapshots::{train_test_split, SnapshotCollection};
use romkit::surrogate::{GpOptions, GpSurrogate, SurrogateModel};
use romkit::toy::{linspace, toy_dataset, ToyVariant};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ------------------------------------------------------------------ oracles

/// One-sided Jacobi SVD of a tall matrix: left singular vectors (columns)
/// and singular values, sorted decreasingly.
fn jacobi_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let mut u = a.clone();
    let n = u.ncols();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..u.nrows() {
                    let (x, y) = (u[(i, p)], u[(i, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..u.nrows() {
                    let (x, y) = (u[(i, p)], u[(i, q)]);
                    u[(i, p)] = c * x - s * y;
                    u[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut pairs: Vec<(f64, usize)> = (0..n).map(|j| (u.column(j).norm(), j)).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let sig: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let left = DMatrix::from_fn(u.nrows(), n, |i, k| {
        let (s, j) = pairs[k];
        if s > 0.0 {
            u[(i, j)] / s
        } else {
            0.0
        }
    });
    (left, sig)
}

/// `Λ_m` from Lagrange functions built by a dense solve on the span of the
/// selected generators.
fn brute_lebesgue(generators: &[Vec<f64>], points: &[usize]) -> f64 {
    let m = points.len();
    let dofs = generators[0].len();
    let v = DMatrix::from_fn(m, m, |i, j| generators[j][points[i]]);
    let c = v.lu().solve(&DMatrix::identity(m, m)).expect("unisolvent points");
    (0..dofs)
        .map(|x| {
            (0..m)
                .map(|j| (0..m).map(|k| generators[k][x] * c[(k, j)]).sum::<f64>().abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Unit-norm representer rows `v(φ) / ‖g‖` computed from scratch.
fn cross_oracle(sensors: &[SensorFunctional], modes: &[Vec<f64>], w: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(sensors.len(), modes.len(), |i, k| {
        let c = sensors[i].coefficients();
        let norm = c.iter().map(|(j, v)| v * v / w[*j]).sum::<f64>().sqrt();
        c.iter().map(|(j, v)| v * modes[k][*j]).sum::<f64>() / norm
    })
}

fn smallest_sv(m: &DMatrix<f64>) -> f64 {
    let (_, s) = jacobi_svd(m);
    s.last().copied().unwrap_or(0.0)
}

fn toy(nx: usize, count: usize, variant: ToyVariant) -> (Grid, SnapshotCollection, romkit::snapshots::ParameterTable) {
    let g = Grid::image(nx, nx, Extent::UNIT).unwrap();
    let (p, s) = toy_dataset(&g, &linspace(-5.0, 5.0, count), variant).unwrap();
    (g, s, p)
}

// --------------------------------------------------------------- criteria

fn toy_end_to_end() -> Check {
    let t0 = Instant::now();
    let (g, snaps, params) = toy(50, 100, ToyVariant::Snippet);
    ensure(g.len() == 2601, format!("{} grid points", g.len()))?;
    let split = train_test_split(&params, &snaps, 0.2, 42).map_err(|e| e.to_string())?;
    ensure(split.test.len() == 20, "test size")?;
    let basis = rsvd_fit(&split.train, 20, RsvdOptions { oversampling: 10, power_iters: 2, seed: 0 })
        .map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed().as_secs_f64();
    let defect = basis.orthonormality_defect();
    ensure(defect < 1e-8, format!("orthonormality defect {defect:e}"))?;
    let sv = basis.singular_values();
    ensure(sv.windows(2).all(|w| w[1] <= w[0]), "singular values increase")?;

    let rel = |proj: &dyn Fn(&[f64]) -> Vec<f64>| -> f64 {
        split
            .test
            .iter()
            .map(|u| {
                let p = proj(u);
                let e: f64 = u.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                e / u.iter().map(|a| a * a).sum::<f64>().sqrt()
            })
            .sum::<f64>()
            / split.test.len() as f64
    };
    let ours = rel(&|u| basis.reconstruct(&basis.project(u).unwrap()).unwrap());
    let (u_oracle, _) = jacobi_svd(&split.train.to_matrix());
    let q = u_oracle.columns(0, 20).into_owned();
    let oracle = rel(&|u| {
        let v = DVector::from_column_slice(u);
        (&q * (q.transpose() * v)).as_slice().to_vec()
    });
    let gap = (ours - oracle).abs() / oracle;
    ensure(gap <= 0.05, format!("projection error {ours:e} vs oracle {oracle:e}"))?;
    ensure(elapsed < 10.0, format!("took {elapsed:.2} s"))?;
    Ok(format!("rel. proj. error {ours:.3e} vs oracle {oracle:.3e} ({:.2}%), defect {defect:.1e}, {elapsed:.2} s", 100.0 * gap))
}

fn rsvd_oracle() -> Check {
    let (m, n, r) = (200, 60, 12);
    let mut rng = Pcg64::seed_from_u64(2024);
    let mut gauss = |rows, cols| DMatrix::<f64>::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
    let u = gauss(m, n).qr().q();
    let v = gauss(n, n).qr().q();
    let sigma: Vec<f64> = (1..=n).map(|k| 2f64.powi(-(k as i32))).collect();
    let a = &u * DMatrix::from_diagonal(&DVector::from_vec(sigma.clone())) * v.transpose();
    let snaps = SnapshotCollection::from_matrix("a", 1, &a).map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let basis = rsvd_fit(&snaps, r, RsvdOptions { oversampling: 10, power_iters: 2, seed: 7 }).map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed().as_secs_f64();
    let sv_err = basis
        .singular_values()
        .iter()
        .zip(&sigma)
        .map(|(s, t)| (s - t).abs() / t)
        .fold(0.0, f64::max);
    let q = DMatrix::from_fn(m, r, |i, k| basis.mode(k)[i]);
    let ut: DMatrix<f64> = u.columns(0, r).into_owned();
    let dist = (&q * q.transpose() - &ut * ut.transpose()).norm();
    ensure(basis.len() == r, "rank")?;
    ensure(sv_err <= 1e-8, format!("sigma rel. error {sv_err:e}"))?;
    ensure(dist <= 1e-6, format!("projector distance {dist:e}"))?;
    ensure(elapsed < 1.0, format!("took {elapsed:.3} s"))?;
    Ok(format!("sigma rel. err {sv_err:.1e}, projector dist {dist:.1e}, {:.1} ms", 1e3 * elapsed))
}

fn random_sets() -> Vec<(Grid, SnapshotCollection)> {
    let mut out = Vec::new();
    let mut rng = Pcg64::seed_from_u64(11);
    for (k, n) in [(0usize, 20usize), (1, 30)] {
        let g = Grid::image(8 + 4 * k, 7, Extent::UNIT).unwrap();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..g.len()).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        out.push((g, SnapshotCollection::from_entries("r", 1, rows).unwrap()));
    }
    let (g, s, _) = toy(20, 40, ToyVariant::Prose);
    out.push((g, s));
    out
}

struct StructureReport {
    tri: f64,
    exact: f64,
    trace_vs_oracle: f64,
    increases: usize,
    worst_increase: f64,
}

fn check_eim_structure(model: &EimModel, g: &Grid, train: &SnapshotCollection, tag: &str) -> Result<StructureReport, String> {
    let m = model.len();
    let b = model.b_matrix();
    let mut tri = 0.0f64;
    for i in 0..m {
        tri = tri.max((b[(i, i)] - 1.0).abs());
        for j in i + 1..m {
            tri = tri.max(b[(i, j)].abs());
        }
    }
    ensure(tri <= 1e-10, format!("{tag}: |B - unit lower| = {tri:e}"))?;
    let mut exact = 0.0f64;
    for (k, sel) in model.selection().iter().enumerate() {
        let u = train.get(sel.snapshot).unwrap();
        let y = model.measure(u).unwrap();
        let scale = u.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        for r in k + 1..=m {
            let (_, f) = model.reconstruct(&y[..r]).unwrap();
            let e = u.iter().zip(&f).fold(0.0f64, |a, (x, z)| a.max((x - z).abs())) / scale;
            exact = exact.max(e);
        }
    }
    ensure(exact <= 1e-10, format!("{tag}: generator interpolation error {exact:e}"))?;

    // brute force: max training residual after each step
    let w = g.weights();
    let trace = model.max_abs_err();
    let mut trace_vs_oracle = 0.0f64;
    for r in 1..=m {
        let mut worst = 0.0f64;
        for u in train.iter() {
            let (_, f) = model.reconstruct(&model.measure(u).unwrap()[..r]).unwrap();
            let e: f64 = u.iter().zip(&f).zip(w).map(|((a, b), w)| w * (a - b) * (a - b)).sum();
            worst = worst.max(e.sqrt());
        }
        trace_vs_oracle = trace_vs_oracle.max((trace[r - 1] - worst).abs() / trace[0]);
    }
    ensure(trace_vs_oracle <= 1e-8, format!("{tag}: trace differs from brute force by {trace_vs_oracle:e}"))?;
    let steps: Vec<f64> = trace.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(StructureReport {
        tri,
        exact,
        trace_vs_oracle,
        increases: steps.iter().filter(|d| **d > 0.0).count(),
        worst_increase: steps.iter().copied().fold(0.0, f64::max),
    })
}

fn eim_structure() -> Check {
    let (mut tri, mut exact, mut oracle) = (0.0f64, 0.0f64, 0.0f64);
    let mut rising = Vec::new();
    let mut fits = 0;
    for (k, (g, s)) in random_sets().into_iter().enumerate() {
        let mmax = s.len().min(20);
        let eim = eim_fit(&s, &g, mmax).map_err(|e| e.to_string())?.model;
        let dict = gaussian_dictionary(&g, 1, 0.1, 1, &accept_all).map_err(|e| e.to_string())?;
        let geim = geim_fit(&s, &g, &dict, mmax).map_err(|e| e.to_string())?.model;
        for (model, tag) in [(&eim, "eim"), (&geim, "geim")] {
            let tag = format!("set {k} {tag}");
            let r = check_eim_structure(model, &g, &s, &tag)?;
            tri = tri.max(r.tri);
            exact = exact.max(r.exact);
            oracle = oracle.max(r.trace_vs_oracle);
            if r.increases > 0 {
                rising.push(format!("{tag}: {} rises, largest {:.2e}", r.increases, r.worst_increase));
            }
            fits += 1;
        }
    }
    let structure = format!(
        "{fits} fits: generator error <= {exact:.1e}, |B - unit lower| <= {tri:.1e}, trace vs brute force <= {oracle:.1e}"
    );
    ensure(rising.is_empty(), format!("{structure}; max_abs_err trace not nonincreasing ({})", rising.join("; ")))?;
    Ok(format!("{structure}, traces nonincreasing"))
}

fn geim_degeneracy() -> Check {
    let (g, snaps, params) = toy(50, 100, ToyVariant::Snippet);
    let split = train_test_split(&params, &snaps, 0.2, 42).map_err(|e| e.to_string())?;
    let eim = eim_fit(&split.train, &g, 25).map_err(|e| e.to_string())?.model;
    let dict = point_dictionary(&g, 1, 1, &accept_all).map_err(|e| e.to_string())?;
    let geim = geim_fit(&split.train, &g, &dict, 25).map_err(|e| e.to_string())?.model;
    let picks = |m: &EimModel| -> Vec<(usize, usize)> {
        m.selection().iter().zip(m.sensors()).map(|(s, f)| (s.snapshot, f.grid_index)).collect()
    };
    let (a, b) = (picks(&eim), picks(&geim));
    ensure(a == b, format!("selections differ:\n eim  {a:?}\n geim {b:?}"))?;
    Ok(format!("{} identical (snapshot, point) selections", a.len()))
}

fn lebesgue_bound() -> Check {
    let mut min_lam = f64::INFINITY;
    let mut models = 0;
    for (g, s) in random_sets() {
        let mmax = s.len().min(20);
        let dict = gaussian_dictionary(&g, 1, 0.1, 1, &accept_all).unwrap();
        for m in [eim_fit(&s, &g, mmax).unwrap().model, geim_fit(&s, &g, &dict, mmax).unwrap().model] {
            let lam = m.lebesgue_constants().map_err(|e| e.to_string())?;
            min_lam = lam.iter().copied().fold(min_lam, f64::min);
            models += 1;
        }
    }
    ensure(min_lam >= 1.0 - 1e-12, format!("Λ = {min_lam}"))?;

    // monomials x^k on [-1, 1]
    let g = Grid::line(201, -1.0, 1.0).unwrap();
    let gens: Vec<Vec<f64>> = (0..8).map(|k| g.points().iter().map(|p| p[0].powi(k)).collect()).collect();
    let snaps = SnapshotCollection::from_entries("x", 1, gens.clone()).unwrap();
    let model = eim_fit(&snaps, &g, 8).map_err(|e| e.to_string())?.model;
    let lam = model.lebesgue_constants().map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for m in 1..=model.len() {
        let selected: Vec<Vec<f64>> = model.selection()[..m].iter().map(|s| gens[s.snapshot].clone()).collect();
        let points: Vec<usize> = model.selection()[..m].iter().map(|s| s.sensor).collect();
        let oracle = brute_lebesgue(&selected, &points);
        worst = worst.max((lam[m - 1] - oracle).abs() / oracle);
    }
    ensure(worst <= 1e-8, format!("Lebesgue vs brute force: {worst:e}"))?;
    Ok(format!("min Λ over {models} models {min_lam:.6}; monomial oracle agreement {worst:.1e}"))
}

fn pbdw_recovery() -> Check {
    let (g, snaps, _) = toy(30, 40, ToyVariant::Snippet);
    let basis = pod_fit(&snaps, &g, 6).map_err(|e| e.to_string())?;
    let sensors = gaussian_dictionary(&g, 1, 0.06, 37, &accept_all).unwrap();
    let model = PbdwModel::new(basis.clone(), sensors.clone(), &g, 0.0).map_err(|e| e.to_string())?;
    let mut rng = Pcg64::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let c: Vec<f64> = (0..6).map(|_| StandardNormal.sample(&mut rng)).collect();
        let u = basis.reconstruct(&c).unwrap();
        let est = model.estimate(&model.measure(&u).unwrap()).map_err(|e| e.to_string())?;
        let (_, rel, _) = field_error(&g, &u, &est.field).unwrap();
        worst = worst.max(rel);
    }
    ensure(worst < 1e-8, format!("in-space relative error {worst:e}"))?;

    // ξ → ∞: background fit is the least-squares solution of K z = ŷ
    let big = model.with_xi(1e12).unwrap();
    let w = g.dof_weights(1);
    let k = cross_oracle(&sensors, basis.modes(), &w);
    let truth = snaps.get(17).unwrap();
    let y = big.measure(truth).unwrap();
    let yhat: Vec<f64> = y
        .iter()
        .zip(&sensors)
        .map(|(v, s)| v / s.coefficients().iter().map(|(j, c)| c * c / w[*j]).sum::<f64>().sqrt())
        .collect();
    let z_ls = k.clone().svd(true, true).solve(&DVector::from_vec(yhat), 1e-14).unwrap();
    let est = big.estimate(&y).map_err(|e| e.to_string())?;
    let diff = est.z.iter().zip(z_ls.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / z_ls.amax();
    ensure(diff <= 1e-6, format!("ξ=1e12 vs least squares: {diff:e}"))?;
    Ok(format!("in-space error {worst:.1e} (M = {}, N = 6); ξ=1e12 vs least squares {diff:.1e}", sensors.len()))
}

fn noise_robustness() -> Check {
    let (g, snaps, params) = toy(50, 100, ToyVariant::Prose);
    let split = train_test_split(&params, &snaps, 0.2, 42).map_err(|e| e.to_string())?;
    let dict = gaussian_dictionary(&g, 1, 0.05, 1, &accept_all).unwrap();
    let model = geim_fit(&split.train, &g, &dict, 30).map_err(|e| e.to_string())?.model;
    ensure(model.len() == 30, format!("GEIM stopped at M = {}", model.len()))?;
    let clean: Vec<Vec<f64>> = split.test.iter().map(|u| model.measure(u).unwrap()).collect();
    let seeds: Vec<u64> = (0..20).collect();
    let levels = [0.001, 0.01, 0.025, 0.05];
    let plain = noise_sweep(&g, &split.test, &clean, &levels, &seeds, &[30], |y, _| Ok(model.reconstruct(y)?.1))
        .map_err(|e| e.to_string())?;
    let tr = noise_sweep(&g, &split.test, &clean, &levels, &seeds, &[30], |y, s| {
        Ok(model.reconstruct_tikhonov(y, y.len() as f64 * s * s)?.1)
    })
    .map_err(|e| e.to_string())?;
    let wins = plain.iter().zip(&tr).filter(|(p, t)| t.mean_rel_err < p.mean_rel_err).count();
    let frac = wins as f64 / plain.len() as f64;

    let zero_p = noise_sweep(&g, &split.test, &clean, &[0.0], &[0], &[30], |y, _| Ok(model.reconstruct(y)?.1)).unwrap();
    let zero_t = noise_sweep(&g, &split.test, &clean, &[0.0], &[0], &[30], |y, s| {
        Ok(model.reconstruct_tikhonov(y, y.len() as f64 * s * s)?.1)
    })
    .unwrap();
    let gap0 = (zero_p[0].mean_rel_err - zero_t[0].mean_rel_err).abs();
    let by_level: Vec<String> = levels
        .iter()
        .map(|l| {
            let w = plain
                .iter()
                .zip(&tr)
                .filter(|(p, t)| p.noise_level == *l && t.mean_rel_err < p.mean_rel_err)
                .count();
            format!("{l}: {w}/20")
        })
        .collect();
    ensure(gap0 <= 1e-12, format!("level 0 differs by {gap0:e}"))?;
    ensure(frac >= 0.8, format!("TR-GEIM wins {wins}/{} trials ({})", plain.len(), by_level.join(", ")))?;
    Ok(format!("TR-GEIM wins {wins}/{} trials ({}); level-0 gap {gap0:.1e}", plain.len(), by_level.join(", ")))
}

fn sgreedy_monotone() -> Check {
    let (g, snaps, _) = toy(24, 50, ToyVariant::Snippet);
    let basis = pod_fit(&snaps, &g, 10).map_err(|e| e.to_string())?;
    let dict = gaussian_dictionary(&g, 1, 0.06, 3, &accept_all).unwrap();
    let res = sgreedy(&basis, &dict, &g, SGreedyOptions { n: 10, mmax: 25, tol: 0.2 }).map_err(|e| e.to_string())?;
    let w = g.dof_weights(1);
    let k = cross_oracle(&res.sensors, basis.modes(), &w);
    let mut worst = 0.0f64;
    let mut prev: Option<(usize, f64)> = None;
    for step in &res.trace {
        let oracle = smallest_sv(&k.view((0, 0), (step.m, step.n)).into_owned());
        let oracle = if step.m < step.n { 0.0 } else { oracle };
        worst = worst.max((step.beta - oracle).abs());
        if let Some((n, b)) = prev {
            if n == step.n {
                ensure(step.beta >= b - 1e-12, format!("β drops at n = {n}, M = {}", step.m))?;
            }
        }
        prev = Some((step.n, step.beta));
    }
    ensure(worst <= 1e-10, format!("trace vs dense σ_min: {worst:e}"))?;
    // every prefix, every n
    let mut checked = 0;
    for n in 1..=10 {
        let mut last = 0.0;
        for m in n..=res.sensors.len() {
            let b = inf_sup_constant(&basis, &res.sensors[..m], &g, n).map_err(|e| e.to_string())?;
            ensure(b >= last - 1e-12, format!("β_{{{n},{m}}} < β_{{{n},{}}}", m - 1))?;
            last = b;
            checked += 1;
        }
    }
    Ok(format!(
        "{} trace steps match dense σ_min to {worst:.1e}; {checked} (n, M) prefixes nondecreasing in M",
        res.trace.len()
    ))
}

fn surrogate_contract() -> Check {
    let t = linspace(0.0, 1.0, 30);
    let inputs: Vec<Vec<f64>> = t.iter().map(|&x| vec![x]).collect();
    let y = DMatrix::from_fn(1, 30, |_, j| (2.0 * std::f64::consts::PI * t[j]).sin());
    let opts = GpOptions { nugget: 1e-4, restarts: 5, seed: 0 };
    let gp = GpSurrogate::fit(&inputs, &y, opts).map_err(|e| e.to_string())?;
    let held: Vec<Vec<f64>> = (0..100).map(|i| vec![(i as f64 + 0.5) / 100.0]).collect();
    let pred = gp.predict(&held).unwrap();
    let err = held
        .iter()
        .enumerate()
        .map(|(j, x)| (pred[(0, j)] - (2.0 * std::f64::consts::PI * x[0]).sin()).abs())
        .fold(0.0, f64::max);
    let std_min = gp.predict_std(&held).unwrap().min().min(gp.predict_std(&inputs).unwrap().min());
    let train = gp.predict(&inputs).unwrap();
    let repro = (0..30).map(|j| (train[(0, j)] - y[(0, j)]).abs()).fold(0.0, f64::max);
    let tol = 3.0 * opts.nugget.sqrt();
    ensure(err < 0.05, format!("held-out error {err}"))?;
    ensure(std_min >= 0.0, format!("negative std {std_min}"))?;
    ensure(repro <= tol, format!("training reproduction {repro} > {tol}"))?;
    Ok(format!("held-out max error {err:.2e}, training error {repro:.2e} ≤ {tol}, min std {std_min:.1e}"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn ingestion_golden() -> Check {
    let floats = |v: &serde_json::Value| -> Vec<f64> { v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect() };
    let read = |p: PathBuf| -> serde_json::Value { serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap() };

    let exp = read(fixtures().join("vtk/expected.json"));
    let mut arrays = 0;
    for (name, e) in exp.as_object().unwrap() {
        let ds = read_vtk(fixtures().join(format!("vtk/{name}.vtk"))).map_err(|e| e.to_string())?;
        for (fname, f) in e["fields"].as_object().unwrap() {
            ensure(ds.field(fname).map_err(|e| e.to_string())?.values == floats(&f["values"]), format!("{name}/{fname}"))?;
            arrays += 1;
        }
        let pts: Vec<f64> = ds.grid.points().iter().flatten().copied().collect();
        let want: Vec<f64> = e["points"].as_array().unwrap().iter().flat_map(floats).collect();
        ensure(pts == want, format!("{name} points"))?;
    }

    let exp = read(fixtures().join("openfoam/cavity2x2.expected.json"));
    let root = fixtures().join("openfoam/cavity2x2");
    for (skip, key, from) in [(false, "times_all", 0), (true, "times_skip_zero", 1)] {
        let case = OpenFoamCase::new(&root, skip);
        for field in ["T", "U"] {
            let (snaps, times) = case.import_field(field).map_err(|e| e.to_string())?;
            ensure(times == floats(&exp[key]), format!("{key}: {times:?}"))?;
            let rows: Vec<Vec<f64>> = exp[field].as_array().unwrap().iter().map(floats).collect();
            ensure(snaps.entries() == &rows[from..], format!("{field} (skip_zero_time = {skip})"))?;
            arrays += snaps.len();
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let (_, snaps, params) = toy(10, 7, ToyVariant::Prose);
    write_snapshots(dir.path().join("b"), &snaps, Some(&params)).map_err(|e| e.to_string())?;
    let (back, p) = read_snapshots(dir.path().join("b")).map_err(|e| e.to_string())?;
    let bits = |s: &SnapshotCollection| -> Vec<u64> { s.iter().flatten().map(|v| v.to_bits()).collect() };
    ensure(bits(&back) == bits(&snaps) && p.as_ref() == Some(&params), "bundle round trip")?;
    Ok(format!("{arrays} golden arrays exact; numeric time order and skip_zero_time ok; bundle bit-identical"))
}

fn cli_determinism() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "source": { "kind": "toy", "nx": 16, "ny": 16, "count": 40 },
        "reduction": { "method": "rsvd", "rank": 10 },
        "eim": { "mmax": 12 },
        "geim": { "mmax": 12, "dictionary": { "kind": "gaussian", "width": 0.08, "stride": 2 } },
        "sgreedy": { "n": 5, "mmax": 12, "tol": 0.01, "dictionary": { "kind": "gaussian", "width": 0.08, "stride": 2 } },
        "pbdw": { "xi": 1e-3 },
        "surrogate": { "kind": "gp", "restarts": 2, "seed": 3 },
        "indirect": { "observed": "u", "target": "v", "mmax": 3, "rank": 5 },
        "online": { "noise": { "levels": [0.0, 0.01, 0.05], "seeds": [0, 1, 2], "m": [5, 12] } }
    });
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        for stage in ["ingest", "offline", "online", "report"] {
            let o = Command::new(env!("CARGO_BIN_EXE_romkit"))
                .args([stage, "--config"])
                .arg(&path)
                .arg("--output")
                .arg(&out)
                .output()
                .unwrap();
            ensure(o.status.success(), format!("{stage} failed:\n{}", String::from_utf8_lossy(&o.stdout)))?;
        }
        let mut csvs = Vec::new();
        let mut stack = vec![out.clone()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else if p.extension().is_some_and(|x| x == "csv") {
                    let text = std::fs::read_to_string(&p).unwrap();
                    let text = if p.file_name().unwrap() == "errors.csv" {
                        text.lines().map(|l| l.rsplit_once(',').unwrap().0).collect::<Vec<_>>().join("\n")
                    } else {
                        text
                    };
                    csvs.push((p.strip_prefix(&out).unwrap().to_path_buf(), text));
                }
            }
        }
        csvs.sort();
        outputs.push(csvs);
    }
    ensure(outputs[0].len() == outputs[1].len(), "different CSV sets")?;
    for ((pa, a), (pb, b)) in outputs[0].iter().zip(&outputs[1]) {
        ensure(pa == pb && a == b, format!("{} differs", pa.display()))?;
    }
    Ok(format!("{} CSVs byte-identical across two runs of every stage", outputs[0].len()))
}

/// Criteria known to fail: the EIM greedy error trace is not monotone on
/// generic training sets (the exactness and structure parts of 3 still
/// have to hold, otherwise the failure message changes and this test fails).
const EXPECTED_RED: &[(usize, &str)] = &[(3, "max_abs_err trace not nonincreasing")];

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("toy problem end-to-end", toy_end_to_end),
        ("rSVD oracle equivalence", rsvd_oracle),
        ("EIM exactness and structure", eim_structure),
        ("GEIM reduces to EIM", geim_degeneracy),
        ("Lebesgue bound and oracle", lebesgue_bound),
        ("PBDW exact recovery", pbdw_recovery),
        ("noise robustness sweep", noise_robustness),
        ("SGreedy monotonicity", sgreedy_monotone),
        ("surrogate contract", surrogate_contract),
        ("ingestion golden files", ingestion_golden),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = Vec::new();
    let mut unexpected = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let known = EXPECTED_RED.iter().find(|(n, _)| *n == i + 1);
        let line = match run() {
            Ok(detail) => {
                if known.is_some() {
                    unexpected.push(format!("{} now passes; update EXPECTED_RED", i + 1));
                }
                format!("criterion {:>2} PASS  {name}: {detail}", i + 1)
            }
            Err(why) => {
                failed.push(i + 1);
                if !known.is_some_and(|(_, m)| why.contains(m)) {
                    unexpected.push(format!("{} failed: {why}", i + 1));
                }
                format!("criterion {:>2} FAIL  {name}: {why}", i + 1)
            }
        };
        let mut out = std::io::stdout().lock();
        writeln!(out, "{line}").unwrap();
        out.flush().unwrap();
    }
    let mut out = std::io::stdout().lock();
    writeln!(out, "acceptance: {} of {} criteria pass; failing: {failed:?}", criteria.len() - failed.len(), criteria.len()).unwrap();
    assert!(unexpected.is_empty(), "{unexpected:#?}");
}
