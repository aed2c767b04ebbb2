//! Oracle tests: every estimator output is checked against an independent
//! computation built from explicit normal equations and Gauss-Jordan
//! inversion, sharing no code with the library paths under test.

#![allow(clippy::needless_range_loop)]

mod common;

use approx::assert_abs_diff_eq;
use common::{gauss_jordan_inverse, mat_mul, mat_vec, normal_equations, transpose, Mat};
use mediv::dataset::{build_designs, Dataset};
use mediv::estimators::{
    fit_direct_adjusted, fit_standard, fit_two_stage, partial_f, sandwich_covariance,
};
use mediv::linalg::solve_least_squares;
use mediv::simlab::{generate, MediatorKind, ScenarioSpec};
use mediv::DenseMatrix;

/// Deterministic pseudo-noise that owes nothing to the library RNG.
fn wobble(i: usize, phase: f64) -> f64 {
    ((i as f64) * 2.399963 + phase).sin()
}

fn to_dense(rows: &Mat) -> DenseMatrix {
    DenseMatrix::from_rows(rows).unwrap()
}

#[test]
fn least_squares_matches_normal_equations_oracle() {
    let design: Mat = vec![
        vec![1.0, 0.5, -1.2],
        vec![1.0, -0.3, 0.8],
        vec![1.0, 2.1, 0.4],
        vec![1.0, 1.7, -0.9],
        vec![1.0, -1.5, 1.3],
        vec![1.0, 0.9, 2.2],
        vec![1.0, -0.7, -1.8],
        vec![1.0, 1.2, 0.1],
    ];
    let response = vec![2.3, -0.4, 5.1, 3.3, -2.2, 4.0, -1.7, 2.9];

    let solution = solve_least_squares(&to_dense(&design), &response).unwrap();
    let (coef, xtx_inv, residuals, rss) = normal_equations(&design, &response);

    for j in 0..3 {
        assert_abs_diff_eq!(solution.coefficients[j], coef[j], epsilon = 1e-10);
        for i in 0..3 {
            assert_abs_diff_eq!(solution.xtx_inverse.get(i, j), xtx_inv[i][j], epsilon = 1e-10);
        }
    }
    for i in 0..8 {
        assert_abs_diff_eq!(solution.residuals[i], residuals[i], epsilon = 1e-10);
    }
    assert_abs_diff_eq!(solution.rss, rss, epsilon = 1e-10);
}

fn small_dataset() -> Dataset {
    let x_vals = [0.5, -1.0, 2.0, 1.5, -0.5, 0.0, 1.0, -2.0, 0.7, -0.3];
    let r_vals = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
    let m_vals: Vec<f64> = (0..10)
        .map(|i| 0.3 + 0.9 * r_vals[i] + 0.6 * x_vals[i] + 1.1 * r_vals[i] * x_vals[i] + wobble(i, 0.3))
        .collect();
    let y: Vec<f64> = (0..10)
        .map(|i| 1.2 - 0.8 * x_vals[i] + 0.5 * r_vals[i] + 1.4 * m_vals[i] + 0.7 * wobble(i, 1.9))
        .collect();
    let x = DenseMatrix::from_columns(&[&x_vals]).unwrap();
    Dataset::without_z(y, r_vals.to_vec(), m_vals, x, vec!["x1".into()]).unwrap()
}

#[test]
fn standard_fit_matches_normal_equations_oracle() {
    let data = small_dataset();
    let fit = fit_standard(&data).unwrap();

    let design: Mat = (0..data.n())
        .map(|i| vec![1.0, data.x().get(i, 0), data.r()[i], data.m()[i]])
        .collect();
    let (coef, xtx_inv, residuals, rss) = normal_equations(&design, data.y());
    let n = data.n() as f64;
    let sigma2 = rss / n;

    assert_abs_diff_eq!(fit.alpha, coef[0], epsilon = 1e-10);
    assert_abs_diff_eq!(fit.beta[0], coef[1], epsilon = 1e-10);
    assert_abs_diff_eq!(fit.theta_r, coef[2], epsilon = 1e-10);
    assert_abs_diff_eq!(fit.theta_m, coef[3], epsilon = 1e-10);
    assert_abs_diff_eq!(fit.sigma2_hat, sigma2, epsilon = 1e-10);
    for i in 0..4 {
        for j in 0..4 {
            assert_abs_diff_eq!(
                fit.covariance.get(i, j),
                sigma2 * xtx_inv[i][j],
                epsilon = 1e-10
            );
        }
    }
    for i in 0..data.n() {
        assert_abs_diff_eq!(fit.residuals[i], residuals[i], epsilon = 1e-10);
    }
}

fn iv_dataset(n: usize) -> Dataset {
    let x_vals: Vec<f64> = (0..n).map(|i| ((i * 7 % n) as f64) / 10.0 - 2.45).collect();
    let r_vals: Vec<f64> = (0..n).map(|i| ((i * 3 + i / 5) % 2) as f64).collect();
    let m_vals: Vec<f64> = (0..n)
        .map(|i| 0.4 + 0.6 * r_vals[i] + 0.5 * x_vals[i] + 1.2 * r_vals[i] * x_vals[i] + 0.8 * wobble(i, 0.0))
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            1.0 + 0.7 * x_vals[i] + 0.5 * r_vals[i] + 1.5 * m_vals[i]
                + 0.9 * wobble(i, 0.0)
                + 0.6 * wobble(i, 2.7)
        })
        .collect();
    let x = DenseMatrix::from_columns(&[&x_vals]).unwrap();
    Dataset::without_z(y, r_vals, m_vals, x, vec!["x1".into()]).unwrap()
}

/// With one instrumented covariate the model is just identified, so the
/// two-stage estimate equals the closed-form instrumental-variables solve
/// (W'A)^{-1} W'y with instrument rows W_i = (1, x_i, r_i, r_i x_i) and
/// regressor rows A_i = (1, x_i, r_i, m_i).
#[test]
fn two_stage_matches_just_identified_iv_oracle() {
    let data = iv_dataset(50);
    let fit = fit_two_stage(&data).unwrap();

    let w: Mat = (0..data.n())
        .map(|i| {
            let x = data.x().get(i, 0);
            let r = data.r()[i];
            vec![1.0, x, r, r * x]
        })
        .collect();
    let a: Mat = (0..data.n())
        .map(|i| vec![1.0, data.x().get(i, 0), data.r()[i], data.m()[i]])
        .collect();
    let wt = transpose(&w);
    let wta = mat_mul(&wt, &a);
    let wty = mat_vec(&wt, data.y());
    let kappa = mat_vec(&gauss_jordan_inverse(&wta), &wty);

    assert_abs_diff_eq!(fit.alpha, kappa[0], epsilon = 1e-8);
    assert_abs_diff_eq!(fit.beta[0], kappa[1], epsilon = 1e-8);
    assert_abs_diff_eq!(fit.theta_r, kappa[2], epsilon = 1e-8);
    assert_abs_diff_eq!(fit.theta_m, kappa[3], epsilon = 1e-8);
}

/// The reported covariance must equal sigma2 * (A_hat' A_hat)^{-1} where
/// A_hat carries the first-stage fitted mediator and sigma2 averages the
/// squared observed-mediator residuals.
#[test]
fn two_stage_covariance_matches_instrumented_normal_equations() {
    let data = iv_dataset(50);
    let fit = fit_two_stage(&data).unwrap();

    let first_stage: Mat = (0..data.n())
        .map(|i| {
            let x = data.x().get(i, 0);
            let r = data.r()[i];
            vec![1.0, r, x, r * x]
        })
        .collect();
    let (gamma, _, _, _) = normal_equations(&first_stage, data.m());
    let m_hat = mat_vec(&first_stage, &gamma);

    let instrumented: Mat = (0..data.n())
        .map(|i| vec![1.0, data.x().get(i, 0), data.r()[i], m_hat[i]])
        .collect();
    let it = transpose(&instrumented);
    let iti_inv = gauss_jordan_inverse(&mat_mul(&it, &instrumented));
    let ity = mat_vec(&it, data.y());
    let kappa = mat_vec(&iti_inv, &ity);

    let n = data.n() as f64;
    let sigma2: f64 = (0..data.n())
        .map(|i| {
            let predicted = kappa[0]
                + kappa[1] * data.x().get(i, 0)
                + kappa[2] * data.r()[i]
                + kappa[3] * data.m()[i];
            let e = data.y()[i] - predicted;
            e * e
        })
        .sum::<f64>()
        / n;

    assert_abs_diff_eq!(fit.sigma2_hat, sigma2, epsilon = 1e-9);
    for i in 0..4 {
        for j in 0..4 {
            assert_abs_diff_eq!(
                fit.covariance.get(i, j),
                sigma2 * iti_inv[i][j],
                epsilon = 1e-9
            );
        }
    }
}

#[test]
fn sandwich_matches_explicit_loops_for_two_stage_fit() {
    let data = iv_dataset(50);
    let fit = fit_two_stage(&data).unwrap();
    let sandwich = sandwich_covariance(&fit, &data).unwrap();

    let first_stage: Mat = (0..data.n())
        .map(|i| {
            let x = data.x().get(i, 0);
            let r = data.r()[i];
            vec![1.0, r, x, r * x]
        })
        .collect();
    let (gamma, _, _, _) = normal_equations(&first_stage, data.m());
    let m_hat = mat_vec(&first_stage, &gamma);
    let instrumented: Mat = (0..data.n())
        .map(|i| vec![1.0, data.x().get(i, 0), data.r()[i], m_hat[i]])
        .collect();
    let it = transpose(&instrumented);
    let bread = gauss_jordan_inverse(&mat_mul(&it, &instrumented));

    let mut meat = vec![vec![0.0_f64; 4]; 4];
    for i in 0..data.n() {
        let e2 = fit.residuals[i] * fit.residuals[i];
        for a in 0..4 {
            for b in 0..4 {
                meat[a][b] += e2 * instrumented[i][a] * instrumented[i][b];
            }
        }
    }
    let expected = mat_mul(&mat_mul(&bread, &meat), &bread);
    for i in 0..4 {
        for j in 0..4 {
            assert_abs_diff_eq!(sandwich.get(i, j), expected[i][j], epsilon = 1e-9);
        }
    }
}

#[test]
fn direct_adjusted_matches_definitional_oracle() {
    let data = small_dataset();
    let theta_m = 0.9;
    let none = DenseMatrix::new(data.n(), 0, Vec::new()).unwrap();
    let estimate = fit_direct_adjusted(&data, theta_m, &none).unwrap();

    let design: Mat = (0..data.n())
        .map(|i| vec![1.0, data.x().get(i, 0), data.r()[i]])
        .collect();
    let adjusted: Vec<f64> = data
        .y()
        .iter()
        .zip(data.m())
        .map(|(y, m)| y - theta_m * m)
        .collect();
    let (coef, xtx_inv, _, rss) = normal_equations(&design, &adjusted);
    let sigma2 = rss / data.n() as f64;

    assert_abs_diff_eq!(estimate.theta_r, coef[2], epsilon = 1e-10);
    assert_abs_diff_eq!(estimate.se, (sigma2 * xtx_inv[2][2]).sqrt(), epsilon = 1e-10);
}

#[test]
fn partial_f_matches_rss_ratio_oracle() {
    let data = iv_dataset(50);
    let diagnostics = partial_f(&data).unwrap();

    let full: Mat = (0..data.n())
        .map(|i| {
            let x = data.x().get(i, 0);
            let r = data.r()[i];
            vec![1.0, r, x, r * x]
        })
        .collect();
    let restricted: Mat = (0..data.n())
        .map(|i| vec![1.0, data.r()[i], data.x().get(i, 0)])
        .collect();
    let (_, _, _, rss_full) = normal_equations(&full, data.m());
    let (_, _, _, rss_restricted) = normal_equations(&restricted, data.m());
    let n = data.n() as f64;
    let expected = (rss_restricted - rss_full) / (rss_full / (n - 4.0));

    assert_abs_diff_eq!(diagnostics.partial_f, expected, epsilon = 1e-8);
    assert_eq!(diagnostics.n_instruments, 1);
}

/// In-sample orthogonality: the observed-mediator residuals of the
/// two-stage fit are exactly orthogonal to every column of the instrumented
/// design, including in the overidentified two-covariate case.
#[test]
fn two_stage_residuals_are_orthogonal_to_the_instrumented_design() {
    let n = 60;
    let x1: Vec<f64> = (0..n).map(|i| ((i * 7 % n) as f64) / 10.0 - 2.95).collect();
    let x2: Vec<f64> = (0..n).map(|i| wobble(i, 4.1)).collect();
    let r_vals: Vec<f64> = (0..n).map(|i| ((i * 3 + i / 5) % 2) as f64).collect();
    let m_vals: Vec<f64> = (0..n)
        .map(|i| {
            0.4 + 0.6 * r_vals[i] + 0.5 * x1[i] - 0.3 * x2[i]
                + 1.2 * r_vals[i] * x1[i]
                + 0.8 * r_vals[i] * x2[i]
                + 0.7 * wobble(i, 0.0)
        })
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.7 * x1[i] - 0.2 * x2[i] + 0.5 * r_vals[i] + 1.5 * m_vals[i] + wobble(i, 2.7))
        .collect();
    let x = DenseMatrix::from_columns(&[&x1, &x2]).unwrap();
    let data = Dataset::without_z(y, r_vals, m_vals, x, vec!["x1".into(), "x2".into()]).unwrap();

    let fit = fit_two_stage(&data).unwrap();
    let bundle = build_designs(&data).unwrap();
    let first_stage = solve_least_squares(bundle.first_stage(), data.m()).unwrap();
    let m_hat = first_stage.fitted(bundle.first_stage()).unwrap();
    let instrumented = bundle.second_stage(&m_hat).unwrap();

    let scale: f64 = data.y().iter().map(|y| y * y).sum::<f64>().sqrt();
    for j in 0..instrumented.cols() {
        let dot: f64 = (0..data.n())
            .map(|i| instrumented.get(i, j) * fit.residuals[i])
            .sum();
        assert!(
            dot.abs() < 1e-8 * scale.max(1.0),
            "column {j} not orthogonal: {dot}"
        );
    }
}

/// On homoskedastic data the robust and model-based standard errors for the
/// direct and mediator effects estimate the same quantity.
#[test]
fn sandwich_and_homoskedastic_se_agree_on_homoskedastic_data() {
    let spec = ScenarioSpec {
        n: 5000,
        theta_r_sd: 0.0,
        theta_m_sd: 0.0,
        confounding: 0.8,
        gamma: vec![0.3, 0.5, 0.4, 1.5],
        mediator_kind: MediatorKind::Continuous,
        seed: 11,
        ..ScenarioSpec::default()
    };
    let (data, _) = generate(&spec).unwrap();
    let fit = fit_two_stage(&data).unwrap();
    let sandwich = sandwich_covariance(&fit, &data).unwrap();
    let layout = fit.layout();

    for index in [layout.r(), layout.mediator()] {
        let se_h = fit.covariance.get(index, index).sqrt();
        let se_s = sandwich.get(index, index).sqrt();
        let ratio = se_s / se_h;
        assert!(
            (0.9..=1.1).contains(&ratio),
            "se ratio {ratio} outside 10% at column {index}"
        );
    }
}
