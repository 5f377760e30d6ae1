use ard_core::dq::*;
use ard_core::linalg::{DqMatrix, C64};
use ard_core::surrogate::*;
use ard_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn builder() -> VsgBuilder {
    VsgBuilder {
        filter: FilterParams { rf: 0.01, lf: 3.18e-4 },
        omega0: 2.0 * std::f64::consts::PI * 50.0,
    }
}

fn nominal() -> [f64; N_COORDS] {
    [8e5, 1e5, 1000.0, 400.0, 8000.0, 5e-5, 0.02, 0.02, 3.18e-4]
}

/// P0, Q0, J and Dp vary; everything else fixed.
fn bounds() -> ParamBounds {
    let n = nominal();
    let mut lo = n;
    let mut hi = n;
    for (k, w) in [(0, 1e5), (1, 1e5), (3, 100.0), (4, 4000.0)] {
        lo[k] -= w;
        hi[k] += w;
    }
    ParamBounds::new(lo, hi).unwrap()
}

fn random_surrogate(seed: u64, grid: &FrequencyGrid) -> RationalSurrogate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = RationalSurrogate::structure(&bounds(), grid.omega_max(), 1, 1).unwrap();
    let nx = s.x_basis.len();
    for t in 0..s.rho_basis.len() {
        for i in 0..nx {
            for j in i..nx {
                for e in 0..4 {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    s.a[e][t][(i, j)] = v;
                    s.a[e][t][(j, i)] = v;
                }
                let v: f64 = 0.05 * rng.random_range(-1.0..1.0);
                s.a0[t][(i, j)] = v;
                s.a0[t][(j, i)] = v;
            }
        }
    }
    s.a0[0][(0, 0)] = 2.0;
    s
}

#[test]
fn realizable_data_recovered() {
    let grid = FrequencyGrid::log_spaced_hz(1.0, 200.0, 40).unwrap();
    let truth = random_surrogate(5, &grid);
    let params = lhs_sample(&bounds(), 60, 11).unwrap();
    let samples = params
        .iter()
        .map(|v| (*v, ImpedanceSpectrum::from_fn(&grid, |s| truth.eval(v, s)).unwrap()))
        .collect();
    let d = TrainingDataset::new(samples, 11, bounds()).unwrap();
    let fit = fit_surrogate(&d, 1, 1, 0.0).unwrap();
    let rep = fit.report.clone().unwrap();
    assert!(rep.validation_rms <= 1e-6, "{rep:?}");
    let v = ParameterVector::from_array(&nominal());
    let s = C64::new(-5.0, 80.0);
    assert!((fit.eval(&v, s).unwrap() - truth.eval(&v, s).unwrap()).norm_fro() < 1e-6);
}

#[test]
fn identical_numerator_and_denominator_give_unity() {
    let grid = FrequencyGrid::default_band();
    let mut s = random_surrogate(1, &grid);
    for e in 0..4 {
        s.a[e] = s.a0.clone();
    }
    let z = s.eval(&ParameterVector::from_array(&nominal()), C64::new(0.0, 300.0)).unwrap();
    for e in 0..4 {
        assert!((z.get(e / 2, e % 2) - C64::new(1.0, 0.0)).norm() < 1e-12);
    }
}

fn demo_dataset(n: usize, grid: &FrequencyGrid) -> TrainingDataset {
    let params = lhs_sample(&bounds(), n, 3).unwrap();
    generate_dataset(&builder(), &params, grid, DatasetMode::Direct, &bounds(), 3).unwrap()
}

#[test]
fn large_ridge_shrinks_numerator() {
    let grid = FrequencyGrid::log_spaced_hz(1.0, 200.0, 40).unwrap();
    let d = demo_dataset(40, &grid);
    let fit = fit_surrogate(&d, 1, 1, 1e12).unwrap();
    let z = fit.eval(&ParameterVector::from_array(&nominal()), C64::new(0.0, 100.0)).unwrap();
    assert!(z.norm_fro() < 1e-6, "{}", z.norm_fro());
}

#[test]
fn demo_fit_within_five_percent() {
    let grid = FrequencyGrid::default_band();
    let d = demo_dataset(200, &grid);
    let fit = fit_surrogate(&d, 2, 2, 1e-10).unwrap();
    let rep = fit.report.clone().unwrap();
    assert!(rep.validation_rms <= 0.05, "{rep:?}");
    assert!(rep.train_rms <= rep.validation_rms);

    // analytic gradient against central differences in normalized coordinates
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let b = bounds();
    for _ in 0..20 {
        let a: [f64; N_COORDS] = std::array::from_fn(|k| b.lo[k] + rng.random::<f64>() * b.width(k));
        let v = ParameterVector::from_array(&a);
        let s = C64::new(rng.random_range(-20.0..0.0), rng.random_range(20.0..600.0));
        let g = fit.grad(&v, s).unwrap();
        for k in 0..N_COORDS {
            if b.is_degenerate(k) {
                assert_eq!(g[k], DqMatrix::zeros());
                continue;
            }
            let h = 1e-6 * b.width(k) / 2.0;
            let (mut up, mut dn) = (a, a);
            up[k] += h;
            dn[k] -= h;
            let fd = (fit.eval(&ParameterVector::from_array(&up), s).unwrap()
                - fit.eval(&ParameterVector::from_array(&dn), s).unwrap())
            .scale(C64::new(0.5 / h, 0.0));
            let err = (fd - g[k]).norm_fro() / g[k].norm_fro().max(1e-300);
            assert!(err < 1e-5, "coordinate {k}: {err}");
        }
    }

    let back = RationalSurrogate::from_json(&fit.to_json().unwrap()).unwrap();
    let v = ParameterVector::from_array(&nominal());
    assert_eq!(back.eval(&v, C64::new(-3.0, 70.0)).unwrap(), fit.eval(&v, C64::new(-3.0, 70.0)).unwrap());
}

#[test]
fn era_dataset_matches_direct() {
    let grid = FrequencyGrid::default_band();
    let params = lhs_sample(&bounds(), 4, 2).unwrap();
    let a = generate_dataset(&builder(), &params, &grid, DatasetMode::Direct, &bounds(), 2).unwrap();
    let b = generate_dataset(&builder(), &params, &grid, DatasetMode::ViaEra, &bounds(), 2).unwrap();
    for ((_, za), (_, zb)) in a.samples.iter().zip(&b.samples) {
        assert!(zb.relative_rms(za) < 1e-5);
    }
}

#[test]
fn empty_params_rejected() {
    let r = generate_dataset(&builder(), &[], &FrequencyGrid::default_band(), DatasetMode::Direct, &bounds(), 0);
    assert!(matches!(r, Err(Error::Dataset(_))));
}

#[test]
fn too_few_samples_rejected() {
    let grid = FrequencyGrid::log_spaced_hz(1.0, 200.0, 8).unwrap();
    let d = demo_dataset(3, &grid);
    assert!(matches!(fit_surrogate(&d, 2, 2, 0.0), Err(Error::InsufficientData { .. })));
}

#[test]
fn lhs_means_near_midpoints() {
    let b = bounds();
    let pts = lhs_sample(&b, 100, 21).unwrap();
    for k in 0..N_COORDS {
        let mean = pts.iter().map(|p| p.to_array()[k]).sum::<f64>() / 100.0;
        let mid = 0.5 * (b.lo[k] + b.hi[k]);
        assert!((mean - mid).abs() <= 0.05 * b.width(k).max(1e-300) || b.is_degenerate(k));
    }
}

#[test]
fn dataset_directory_roundtrip() {
    let grid = FrequencyGrid::log_spaced_hz(1.0, 200.0, 16).unwrap();
    let d = demo_dataset(5, &grid);
    let dir = tempfile::tempdir().unwrap();
    d.write(dir.path()).unwrap();
    let back = TrainingDataset::read(dir.path()).unwrap();
    assert_eq!(back.len(), 5);
    for ((va, za), (vb, zb)) in d.samples.iter().zip(&back.samples) {
        assert_eq!(va, vb);
        assert!(zb.relative_rms(za) < 1e-15);
    }
}

#[test]
fn white_box_gradient_matches_model_shift() {
    let wb = WhiteBoxSurrogate::new(builder());
    let v = ParameterVector::from_array(&nominal());
    let s = C64::new(-7.8, 69.6);
    let g = wb.grad(&v, s).unwrap();
    let mut a = nominal();
    a[4] += 1.0;
    let dz = wb.eval(&ParameterVector::from_array(&a), s).unwrap() - wb.eval(&v, s).unwrap();
    assert!((dz - g[4]).norm_fro() <= 1e-3 * g[4].norm_fro());
}
