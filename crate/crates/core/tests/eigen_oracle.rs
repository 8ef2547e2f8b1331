use approx::assert_relative_eq;
use chemostat_core::linalg::{eigenvalues, Matrix};
use nalgebra::{Complex, DMatrix};
use num_complex::Complex64;
use proptest::prelude::*;

fn to_nalgebra(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

fn smallest_singular_value(m: &Matrix, lambda: Complex64) -> f64 {
    let n = m.rows();
    let shifted = DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { lambda } else { Complex64::new(0.0, 0.0) };
        Complex::new(m[(i, j)], 0.0) - Complex::new(d.re, d.im)
    });
    shifted.singular_values().iter().cloned().fold(f64::INFINITY, f64::min)
}

fn matrix_strategy() -> impl Strategy<Value = Matrix> {
    (1usize..=8).prop_flat_map(|n| {
        prop::collection::vec(-10.0f64..10.0, n * n).prop_map(move |v| {
            let rows: Vec<Vec<f64>> = v.chunks(n).map(<[f64]>::to_vec).collect();
            Matrix::from_rows(&rows)
        })
    })
}

/// Greedy matching of two spectra; returns the worst distance.
fn spectral_distance(mut ours: Vec<Complex64>, theirs: &[Complex64]) -> f64 {
    let mut worst: f64 = 0.0;
    for t in theirs {
        let (idx, d) = ours
            .iter()
            .enumerate()
            .map(|(i, o)| (i, (o - t).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        worst = worst.max(d);
        ours.swap_remove(idx);
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn backward_error_is_small(m in matrix_strategy()) {
        let ev = eigenvalues(&m).unwrap();
        prop_assert_eq!(ev.len(), m.rows());
        let scale = m.norm().max(1.0);
        for l in &ev {
            let sigma = smallest_singular_value(&m, *l);
            prop_assert!(sigma <= 1e-9 * scale, "σ_min = {sigma:e} for λ = {l}");
        }
    }

    #[test]
    fn matches_reference_spectrum(m in matrix_strategy()) {
        let ours = eigenvalues(&m).unwrap();
        let theirs: Vec<Complex64> = to_nalgebra(&m)
            .complex_eigenvalues()
            .iter()
            .map(|c| Complex64::new(c.re, c.im))
            .collect();
        // Eigenvalues can be ill-conditioned; allow a generous, norm-scaled gap.
        let d = spectral_distance(ours, &theirs);
        prop_assert!(d <= 1e-6 * m.norm().max(1.0), "distance {d:e}");
    }

    #[test]
    fn trace_equals_eigenvalue_sum(m in matrix_strategy()) {
        let ev = eigenvalues(&m).unwrap();
        let sum: Complex64 = ev.iter().sum();
        prop_assert!((sum.re - m.trace()).abs() <= 1e-9 * m.norm().max(1.0));
        prop_assert!(sum.im.abs() <= 1e-9 * m.norm().max(1.0));
    }
}

#[test]
fn symmetric_matrix_matches_symmetric_solver() {
    let m = Matrix::from_rows(&[
        vec![4.0, 1.0, -2.0, 2.0],
        vec![1.0, 2.0, 0.0, 1.0],
        vec![-2.0, 0.0, 3.0, -2.0],
        vec![2.0, 1.0, -2.0, -1.0],
    ]);
    let mut ours: Vec<f64> = eigenvalues(&m).unwrap().iter().map(|c| c.re).collect();
    ours.sort_by(f64::total_cmp);
    let mut reference: Vec<f64> = to_nalgebra(&m).symmetric_eigenvalues().iter().cloned().collect();
    reference.sort_by(f64::total_cmp);
    for (a, b) in ours.iter().zip(&reference) {
        assert_relative_eq!(a, b, epsilon = 1e-12, max_relative = 1e-12);
    }
}

#[test]
fn badly_scaled_matrix() {
    let m = Matrix::from_rows(&[vec![1.0, 1e8, 0.0], vec![1e-8, 1.0, 1e8], vec![0.0, 1e-8, 1.0]]);
    let ev = eigenvalues(&m).unwrap();
    for l in &ev {
        assert!(smallest_singular_value(&m, *l) < 1e-6, "{l}");
    }
}
