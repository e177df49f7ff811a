use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rmor::dmd::{cdmd, exact_dmd, measurement_matrix, realify_modes, Ensemble};
use rmor::linalg::{qr_thin, DenseMatrix};
use rmor::models::{build_parabolic_fom, generate_snapshots_parabolic, Grid2d, ParabolicSpec};
use rmor::rom::{integrate_steps, project_model, NonlinearMode};

fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// `y_{j+1} = A y_j` for `steps` steps, returned as the shifted pair.
fn trajectory(a: &DenseMatrix, y0: &[f64], steps: usize) -> (DenseMatrix, DenseMatrix) {
    let mut cols = vec![y0.to_vec()];
    for _ in 0..steps {
        let next = a.matvec(cols.last().unwrap());
        cols.push(next);
    }
    (
        DenseMatrix::from_columns(&cols[..steps]).unwrap(),
        DenseMatrix::from_columns(&cols[1..]).unwrap(),
    )
}

/// Largest distance from an expected eigenvalue to its nearest recovered one.
fn spectrum_error(found: &[Complex64], expected: &[Complex64]) -> f64 {
    expected
        .iter()
        .map(|e| found.iter().map(|f| (f - e).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Rank-2 map `Q diag(0.9, 0.5) Qᵀ` embedded in `n` dimensions.
fn rank_two_data(n: usize, seed: u64) -> (DenseMatrix, DenseMatrix) {
    let q = qr_thin(&random(n, 2, seed)).unwrap().0;
    let a = q.scale_columns(&[0.9, 0.5]).matmul(&q.transpose());
    let y0 = q.matvec(&[1.0, 0.8]);
    trajectory(&a, &y0, 12)
}

#[test]
fn compressive_recovers_rank_two_generator() {
    let (y, yp) = rank_two_data(60, 1);
    let expected = [Complex64::new(0.9, 0.0), Complex64::new(0.5, 0.0)];
    for seed in 0..20 {
        let c = measurement_matrix(10, 60, Ensemble::Gaussian, seed).unwrap();
        let m = cdmd(&y, &yp, &c, 2).unwrap();
        let err = spectrum_error(&m.eigenvalues, &expected);
        assert!(err <= 1e-6, "seed {seed}: {err}");
    }
}

#[test]
fn compressive_error_shrinks_with_measurements_on_noisy_data() {
    // Exact data carries no information about p; additive noise does: the
    // fraction of noise energy captured by the rank-r fit scales like r/p.
    let n = 128;
    let (mut y, mut yp) = rank_two_data(n, 2);
    let noise = random(n, y.cols() + 1, 99).scaled(1e-3);
    for j in 0..y.cols() {
        for i in 0..n {
            y[(i, j)] += noise[(i, j)];
            yp[(i, j)] += noise[(i, j + 1)];
        }
    }
    let expected = [Complex64::new(0.9, 0.0), Complex64::new(0.5, 0.0)];
    let mean_error = |p: usize| {
        (0..20u64)
            .map(|seed| {
                let c = measurement_matrix(p, n, Ensemble::Gaussian, 1000 + seed).unwrap();
                spectrum_error(&cdmd(&y, &yp, &c, 2).unwrap().eigenvalues, &expected)
            })
            .sum::<f64>()
            / 20.0
    };
    let errors: Vec<f64> = [4, 8, 16, 32].iter().map(|&p| mean_error(p)).collect();
    for w in errors.windows(2) {
        assert!(w[1] <= w[0], "mean errors over p = 4, 8, 16, 32: {errors:?}");
    }
}

#[test]
fn full_row_subsample_matches_exact() {
    let (y, yp) = rank_two_data(30, 3);
    let exact = exact_dmd(&y, &yp, 2).unwrap();
    for ensemble in [Ensemble::RowSubsample, Ensemble::Gaussian, Ensemble::SparseBernoulli] {
        let c = measurement_matrix(30, 30, ensemble, 5).unwrap();
        let m = cdmd(&y, &yp, &c, 2).unwrap();
        assert!(spectrum_error(&m.eigenvalues, &exact.eigenvalues) <= 1e-10, "{ensemble:?}");
    }
}

#[test]
fn realified_parabolic_modes_drive_a_reduced_model() {
    let grid = Grid2d::new(16).unwrap();
    let spec = ParabolicSpec::default();
    let dt = spec.t_final / 200.0;
    let pair = generate_snapshots_parabolic(&grid, &spec, dt, 200).unwrap();
    let data = pair.states.data();
    let y = data.columns_range(0, data.cols() - 1);
    let yp = data.columns_range(1, data.cols());
    let model = exact_dmd(&y, &yp, 10).unwrap();
    let basis = realify_modes(&model, 10).unwrap();
    assert!(basis.modes.orthonormality_defect() <= 1e-10);
    let fom = build_parabolic_fom(&grid, &spec).unwrap();
    let rom = project_model(&fom, &basis.modes, NonlinearMode::FullLift).unwrap();
    let traj = integrate_steps(&rom, dt, 199).unwrap();
    assert!(traj.states.is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn real_data_gives_conjugate_symmetric_spectrum(seed in 0u64..10_000, n in 4usize..12) {
        let a = random(n, n, seed).scaled(0.4);
        let y0 = random(n, 1, seed + 1).into_vec();
        let (y, yp) = trajectory(&a, &y0, 2 * n);
        let rank = rmor::linalg::svd_thin(&y).unwrap().numerical_rank();
        let m = exact_dmd(&y, &yp, rank).unwrap();
        for z in &m.eigenvalues {
            let partner = m.eigenvalues.iter().map(|w| (w - z.conj()).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(partner <= 1e-10 * z.norm().max(1.0));
        }
    }

    #[test]
    fn exact_dmd_recovers_full_rank_maps(seed in 0u64..10_000) {
        // Well-separated real spectrum with a generic basis.
        let n = 5;
        let lambdas = [0.95, 0.8, 0.6, -0.5, 0.3];
        let v = random(n, n, seed).add(&DenseMatrix::identity(n).scaled(2.0));
        let vinv = rmor::linalg::solve_linear(&v, &DenseMatrix::identity(n)).unwrap();
        let a = v.scale_columns(&lambdas).matmul(&vinv);
        let y0 = v.matvec(&[1.0; 5]);
        let (y, yp) = trajectory(&a, &y0, 8);
        let m = exact_dmd(&y, &yp, n).unwrap();
        let expected: Vec<Complex64> = lambdas.iter().map(|&l| Complex64::new(l, 0.0)).collect();
        prop_assert!(spectrum_error(&m.eigenvalues, &expected) <= 1e-8);
    }

    #[test]
    fn measurement_matrices_are_deterministic(seed in any::<u64>(), p in 1usize..8) {
        for e in [Ensemble::Gaussian, Ensemble::SparseBernoulli, Ensemble::RowSubsample] {
            let a = measurement_matrix(p, 8, e, seed).unwrap();
            let b = measurement_matrix(p, 8, e, seed).unwrap();
            prop_assert_eq!(a.c, b.c);
        }
        let rows = measurement_matrix(p, 8, Ensemble::RowSubsample, seed).unwrap().c;
        let mut hit = [false; 8];
        for i in 0..p {
            let ones: Vec<usize> = (0..8).filter(|&j| rows[(i, j)] == 1.0).collect();
            prop_assert_eq!(ones.len(), 1);
            prop_assert!(!hit[ones[0]]);
            hit[ones[0]] = true;
        }
    }
}
