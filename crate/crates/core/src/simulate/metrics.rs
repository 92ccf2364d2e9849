use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::moments::{second_moment, SecondMomentSet, SourceSamples};
use crate::spectral::{inner, sym_eig, top_k_projector, ProjectionMatrix};

use super::{draw_factor_source, FactorModelSpec};

fn check_shape(p: &ProjectionMatrix, d: usize) -> Result<()> {
    if p.dim() != d {
        return Err(Error::Shape(format!(
            "projector is {}×{0}, expected {d}×{d}",
            p.dim()
        )));
    }
    Ok(())
}

/// `min_l ⟨Σ̂⁽ˡ⁾, P⟩`.
pub fn worst_case_explained_variance(p: &ProjectionMatrix, m: &SecondMomentSet) -> Result<f64> {
    check_shape(p, m.dim())?;
    Ok(m.matrices()
        .iter()
        .map(|a| inner(a, p.matrix()))
        .fold(f64::INFINITY, f64::min))
}

/// `‖P − Λ Λᵀ‖_F`; requires `rank(P)` to match the columns of `shared`.
pub fn recovery_error(p: &ProjectionMatrix, shared: &DMatrix<f64>) -> Result<f64> {
    check_shape(p, shared.nrows())?;
    if p.rank() != shared.ncols() {
        return Err(Error::InvalidArgument(format!(
            "projector rank {} differs from shared rank {}; use capture_error",
            p.rank(),
            shared.ncols()
        )));
    }
    Ok((p.matrix() - shared * shared.transpose()).norm())
}

/// `1 − ⟨Λ Λᵀ, P⟩ / rank(Λ)`: the share of the shared subspace missed by `P`.
pub fn capture_error(p: &ProjectionMatrix, shared: &DMatrix<f64>) -> Result<f64> {
    check_shape(p, shared.nrows())?;
    if p.rank() < shared.ncols() {
        return Err(Error::InvalidArgument(format!(
            "projector rank {} is below shared rank {}",
            p.rank(),
            shared.ncols()
        )));
    }
    let captured = inner(&(shared * shared.transpose()), p.matrix());
    Ok(1.0 - captured / shared.ncols() as f64)
}

/// Worst explained variance of `P` over `l_out` fresh sources that share the
/// loadings of `spec` but redraw the specific frames, scales and samples
/// from `seed`. With `seed = spec.seed` source `j` repeats training source
/// `j`.
pub fn ood_eval(p: &ProjectionMatrix, spec: &FactorModelSpec, l_out: usize, seed: u64) -> Result<f64> {
    spec.validate()?;
    check_shape(p, spec.d)?;
    if l_out == 0 {
        return Err(Error::InvalidArgument("need at least one test source".into()));
    }
    let shared = spec.shared_loadings();
    let mut worst = f64::INFINITY;
    for j in 0..l_out {
        let src = draw_factor_source(spec, &shared, seed, j);
        worst = worst.min(inner(&second_moment(&src.samples, false), p.matrix()));
    }
    Ok(worst)
}

/// PooledPCA: top-k projector of the second moment of all rows stacked,
/// which weights each source by its sample size.
pub fn pooled_pca(samples: &SourceSamples, k: usize, center: bool) -> Result<ProjectionMatrix> {
    top_k_projector(&second_moment(&samples.pooled(), center), k)
}

/// Leading unit direction of a projector, sign fixed as in the
/// eigendecomposition.
pub fn leading_direction(p: &ProjectionMatrix) -> Result<DVector<f64>> {
    Ok(sym_eig(p.matrix())?.vectors.column(0).into_owned())
}

/// Angle in degrees in `[0, 90]` between the line spanned by `v` and
/// coordinate axis `axis`.
pub fn angle_to_axis_deg(v: &DVector<f64>, axis: usize) -> f64 {
    let c = (v[axis].abs() / v.norm()).min(1.0);
    c.acos().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{gen_factor_sources, random_frame, random_frame_orthogonal_to, rng_for};
    use crate::moments::compute_second_moment;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    #[test]
    fn worst_case_basic() {
        let single = SecondMomentSet::from_matrices(vec![diag(&[3.0, 1.0])]).unwrap();
        let e1 = ProjectionMatrix::from_orthonormal(&DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
        assert_eq!(worst_case_explained_variance(&e1, &single).unwrap(), 3.0);
        let pair = SecondMomentSet::from_matrices(vec![diag(&[3.0, 1.0]), diag(&[2.0, 1.0])]).unwrap();
        assert_eq!(worst_case_explained_variance(&e1, &pair).unwrap(), 2.0);
    }

    #[test]
    fn worst_case_matches_angle_grid_bound() {
        let pair = SecondMomentSet::from_matrices(vec![
            nalgebra::dmatrix![2.0, 0.5; 0.5, 1.0],
            nalgebra::dmatrix![1.0, -0.3; -0.3, 2.0],
        ])
        .unwrap();
        let mut best = f64::NEG_INFINITY;
        for i in 0..3600 {
            let t = i as f64 * std::f64::consts::PI / 3600.0;
            let p = ProjectionMatrix::from_orthonormal(&DMatrix::from_column_slice(2, 1, &[t.cos(), t.sin()]));
            let v = worst_case_explained_variance(&p, &pair).unwrap();
            let by_hand = pair
                .matrices()
                .iter()
                .map(|a| {
                    let u = nalgebra::dvector![t.cos(), t.sin()];
                    u.dot(&(a * &u))
                })
                .fold(f64::INFINITY, f64::min);
            assert!((v - by_hand).abs() <= 1e-12);
            best = best.max(v);
        }
        // No projector beats the smaller of the two top eigenvalues.
        let cap = pair
            .matrices()
            .iter()
            .map(|a| sym_eig(a).unwrap().values[0])
            .fold(f64::INFINITY, f64::min);
        assert!(best <= cap + 1e-12);
    }

    #[test]
    fn recovery_and_capture_extremes() {
        let mut rng = rng_for(1, &[]);
        let shared = random_frame(&mut rng, 10, 3);
        let other = random_frame_orthogonal_to(&mut rng, &shared, 3);
        let p = ProjectionMatrix::from_orthonormal(&shared);
        let q = ProjectionMatrix::from_orthonormal(&other);
        assert!(recovery_error(&p, &shared).unwrap() <= 1e-12);
        assert!((recovery_error(&q, &shared).unwrap() - 6f64.sqrt()).abs() <= 1e-10);
        assert!(capture_error(&p, &shared).unwrap().abs() <= 1e-12);
        assert!((capture_error(&q, &shared).unwrap() - 1.0).abs() <= 1e-10);

        let wide = random_frame_orthogonal_to(&mut rng, &shared, 2);
        let mut cols = DMatrix::zeros(10, 5);
        cols.columns_mut(0, 3).copy_from(&shared);
        cols.columns_mut(3, 2).copy_from(&wide);
        let big = ProjectionMatrix::from_orthonormal(&cols);
        assert!(capture_error(&big, &shared).unwrap().abs() <= 1e-10);
        assert_eq!(recovery_error(&big, &shared).unwrap_err().kind(), "InvalidArgument");
    }

    #[test]
    fn capture_error_columnwise() {
        let mut rng = rng_for(2, &[]);
        let shared = random_frame(&mut rng, 8, 3);
        let p = ProjectionMatrix::from_orthonormal(&random_frame(&mut rng, 8, 4));
        let by_columns = 1.0
            - shared
                .column_iter()
                .map(|v| (p.matrix() * v).norm_squared())
                .sum::<f64>()
                / 3.0;
        let e = capture_error(&p, &shared).unwrap();
        assert!((e - by_columns).abs() <= 1e-12);
        assert!((-1e-10..=1.0 + 1e-10).contains(&e));
    }

    #[test]
    fn ood_with_training_seed_repeats_source() {
        let spec = FactorModelSpec {
            d: 15,
            sources: 3,
            n: 100,
            seed: 21,
            ..FactorModelSpec::default()
        };
        let draw = gen_factor_sources(&spec).unwrap();
        let m = compute_second_moment(&draw.samples, false).unwrap();
        let p = ProjectionMatrix::from_orthonormal(&draw.shared);
        let ood = ood_eval(&p, &spec, 1, spec.seed).unwrap();
        assert!((ood - inner(&m.matrices()[0], p.matrix())).abs() <= 1e-12);
    }

    #[test]
    fn ood_shared_projector_floor() {
        let spec = FactorModelSpec {
            d: 20,
            n: 4000,
            seed: 5,
            ..FactorModelSpec::default()
        };
        let p = ProjectionMatrix::from_orthonormal(&spec.shared_loadings());
        // Population value is 3·1 + 3·noise_var; allow Monte-Carlo slack.
        let floor = 3.0 + 3.0 * spec.noise_var;
        let v = ood_eval(&p, &spec, 20, 77).unwrap();
        assert!(v >= floor - 0.3, "{v}");
    }

    #[test]
    fn angles() {
        assert!(angle_to_axis_deg(&nalgebra::dvector![1.0, 0.0], 0).abs() <= 1e-12);
        assert!((angle_to_axis_deg(&nalgebra::dvector![-1.0, 1.0], 0) - 45.0).abs() <= 1e-9);
        assert!((angle_to_axis_deg(&nalgebra::dvector![0.0, 2.0], 0) - 90.0).abs() <= 1e-9);
    }
}
