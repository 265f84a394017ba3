//! Orthogonal projection of n-dimensional feature vectors onto the plane
//! spanned by two basis vectors, expressed in (a, b) coordinates.

use thiserror::Error;

use crate::capture::FeatureVector;

/// Gram determinant below this threshold counts as degenerate.
pub const DEGENERACY_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("degenerate basis: gram determinant {0} not positive")]
    DegenerateBasis(f64),
    #[error("dimension mismatch: vector has {vector}, basis has {basis}")]
    DimensionMismatch { vector: usize, basis: usize },
}

/// Unit-normalized basis pair with its precomputed Gram data.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBasis {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// [(a·a), (a·b); (b·a), (b·b)]
    pub gram: [[f64; 2]; 2],
    pub gram_det: f64,
}

/// Projection coordinates in the (a, b) plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanePoint {
    pub u: f64,
    pub v: f64,
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(p, q)| p * q).sum()
}

/// Normalizes both vectors to unit length and precomputes the Gram matrix.
pub fn make_basis(a_raw: &[f64], b_raw: &[f64]) -> Result<ProjectionBasis, ProjectionError> {
    if a_raw.len() != b_raw.len() {
        return Err(ProjectionError::DimensionMismatch {
            vector: b_raw.len(),
            basis: a_raw.len(),
        });
    }
    if a_raw.len() < 2 {
        return Err(ProjectionError::DimensionMismatch {
            vector: a_raw.len(),
            basis: 2,
        });
    }
    let norm = |v: &[f64]| dot(v, v).sqrt();
    let na = norm(a_raw);
    let nb = norm(b_raw);
    if na == 0.0 || nb == 0.0 {
        return Err(ProjectionError::DegenerateBasis(0.0));
    }
    let a: Vec<f64> = a_raw.iter().map(|x| x / na).collect();
    let b: Vec<f64> = b_raw.iter().map(|x| x / nb).collect();
    let aa = dot(&a, &a);
    let ab = dot(&a, &b);
    let bb = dot(&b, &b);
    let gram_det = aa * bb - ab * ab;
    if gram_det <= DEGENERACY_EPS {
        return Err(ProjectionError::DegenerateBasis(gram_det));
    }
    Ok(ProjectionBasis {
        a,
        b,
        gram: [[aa, ab], [ab, bb]],
        gram_det,
    })
}

/// Even-index / odd-index indicator pair: orthogonal by construction, so the
/// Gram matrix is the identity for every n >= 2.
pub fn default_basis(n: usize) -> Result<ProjectionBasis, ProjectionError> {
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for i in 0..n {
        if i % 2 == 0 {
            a[i] = 1.0;
        } else {
            b[i] = 1.0;
        }
    }
    make_basis(&a, &b)
}

/// Coefficients of the orthogonal projection of `x` onto span{a, b}, i.e. the
/// solution of the 2x2 Gram system G·c = [x·a; x·b].
pub fn project_point(x: &[f64], basis: &ProjectionBasis) -> Result<PlanePoint, ProjectionError> {
    if x.len() != basis.a.len() {
        return Err(ProjectionError::DimensionMismatch {
            vector: x.len(),
            basis: basis.a.len(),
        });
    }
    let xa = dot(x, &basis.a);
    let xb = dot(x, &basis.b);
    let [[aa, ab], [_, bb]] = basis.gram;
    let u = (bb * xa - ab * xb) / basis.gram_det;
    let v = (aa * xb - ab * xa) / basis.gram_det;
    Ok(PlanePoint { u, v })
}

pub fn project_feature(f: &FeatureVector, basis: &ProjectionBasis) -> Result<PlanePoint, ProjectionError> {
    project_point(&f.values, basis)
}

/// Exact extrema of (u, v) over the unit hypercube [0,1]^n. Both coordinates
/// are linear in x, so each bound is the sum of the negative (min) or
/// positive (max) coefficients of the corresponding functional.
pub fn coordinate_bounds(basis: &ProjectionBasis) -> (f64, f64, f64, f64) {
    let [[aa, ab], [_, bb]] = basis.gram;
    let det = basis.gram_det;
    let (mut u_min, mut u_max, mut v_min, mut v_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..basis.a.len() {
        let cu = (bb * basis.a[i] - ab * basis.b[i]) / det;
        let cv = (aa * basis.b[i] - ab * basis.a[i]) / det;
        if cu < 0.0 {
            u_min += cu;
        } else {
            u_max += cu;
        }
        if cv < 0.0 {
            v_min += cv;
        } else {
            v_max += cv;
        }
    }
    (u_min, u_max, v_min, v_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-9;

    /// Independent oracle: minimizes ||x - u a - v b|| by Gaussian elimination
    /// with partial pivoting on the normal equations.
    pub(crate) fn least_squares_oracle(x: &[f64], a: &[f64], b: &[f64]) -> (f64, f64) {
        let d = |p: &[f64], q: &[f64]| -> f64 { p.iter().zip(q).map(|(s, t)| s * t).sum() };
        let mut m = [[d(a, a), d(a, b), d(a, x)], [d(b, a), d(b, b), d(b, x)]];
        if m[1][0].abs() > m[0][0].abs() {
            m.swap(0, 1);
        }
        let f = m[1][0] / m[0][0];
        for j in 0..3 {
            m[1][j] -= f * m[0][j];
        }
        let v = m[1][2] / m[1][1];
        let u = (m[0][2] - m[0][1] * v) / m[0][0];
        (u, v)
    }

    #[test]
    fn orthonormal_basis_gram_is_identity() {
        let basis = make_basis(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(basis.gram, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(basis.gram_det, 1.0);
    }

    #[test]
    fn collinear_basis_rejected() {
        match make_basis(&[1.0, 0.0], &[2.0, 0.0]) {
            Err(ProjectionError::DegenerateBasis(_)) => {}
            other => panic!("expected DegenerateBasis, got {other:?}"),
        }
    }

    #[test]
    fn skew_basis_gram_det() {
        // Unit-normalized (1,1,0) and (0,1,1) have a·b = 1/2, det = 3/4.
        let basis = make_basis(&[1.0, 1.0, 0.0], &[0.0, 1.0, 1.0]).unwrap();
        assert!((basis.gram[0][1] - 0.5).abs() < TOL);
        assert!((basis.gram_det - 0.75).abs() < TOL);
    }

    #[test]
    fn default_basis_shapes() {
        let b4 = default_basis(4).unwrap();
        assert_eq!(b4.a, vec![1.0 / 2f64.sqrt(), 0.0, 1.0 / 2f64.sqrt(), 0.0]);
        assert_eq!(b4.b, vec![0.0, 1.0 / 2f64.sqrt(), 0.0, 1.0 / 2f64.sqrt()]);
        let b2 = default_basis(2).unwrap();
        assert_eq!(b2.a, vec![1.0, 0.0]);
        assert_eq!(b2.b, vec![0.0, 1.0]);
        let b10 = default_basis(10).unwrap();
        // Normalization leaves the diagonal within an ulp of 1.
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((b10.gram[i][j] - want).abs() < 1e-12, "gram[{i}][{j}] = {}", b10.gram[i][j]);
            }
        }
    }

    #[test]
    fn orthonormal_projection_extracts_coordinates() {
        let basis = make_basis(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        let p = project_point(&[3.0, 4.0, 5.0], &basis).unwrap();
        assert!((p.u - 3.0).abs() < TOL);
        assert!((p.v - 4.0).abs() < TOL);
    }

    #[test]
    fn orthogonal_vector_projects_to_origin() {
        let basis = make_basis(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        let p = project_point(&[0.0, 0.0, 7.0], &basis).unwrap();
        assert_eq!((p.u, p.v), (0.0, 0.0));
    }

    #[test]
    fn skew_projection_matches_hand_solution() {
        // Solving G·c = [3; 5] for raw a=(1,1,0), b=(0,1,1) gives (1/3, 7/3).
        // make_basis normalizes, which rescales coordinates by the norms.
        let basis = make_basis(&[1.0, 1.0, 0.0], &[0.0, 1.0, 1.0]).unwrap();
        let x = [1.0, 2.0, 3.0];
        let p = project_point(&x, &basis).unwrap();
        let s = 2f64.sqrt();
        assert!((p.u - s / 3.0).abs() < TOL, "u={} want {}", p.u, s / 3.0);
        assert!((p.v - 7.0 * s / 3.0).abs() < TOL);
        let (ou, ov) = least_squares_oracle(&x, &basis.a, &basis.b);
        assert!((p.u - ou).abs() < TOL);
        assert!((p.v - ov).abs() < TOL);
    }

    #[test]
    fn formula_on_raw_skew_pair() {
        // Applying the closed form to the raw (unnormalized) pair: G = [2 1; 1 2],
        // rhs = [3; 5], solution (1/3, 7/3).
        let basis = ProjectionBasis {
            a: vec![1.0, 1.0, 0.0],
            b: vec![0.0, 1.0, 1.0],
            gram: [[2.0, 1.0], [1.0, 2.0]],
            gram_det: 3.0,
        };
        let x = [1.0, 2.0, 3.0];
        let p = project_point(&x, &basis).unwrap();
        assert!((p.u - 1.0 / 3.0).abs() < TOL);
        assert!((p.v - 7.0 / 3.0).abs() < TOL);
        let (ou, ov) = least_squares_oracle(&x, &basis.a, &basis.b);
        assert!((p.u - ou).abs() < TOL);
        assert!((p.v - ov).abs() < TOL);
    }

    #[test]
    fn dimension_mismatch_detected() {
        let basis = make_basis(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!(matches!(
            project_point(&[1.0, 2.0, 3.0], &basis),
            Err(ProjectionError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn bounds_unit_square() {
        let basis = make_basis(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(coordinate_bounds(&basis), (0.0, 1.0, 0.0, 1.0));
    }

    fn vertex_enumeration_bounds(basis: &ProjectionBasis) -> (f64, f64, f64, f64) {
        let n = basis.a.len();
        let mut u_min = f64::INFINITY;
        let mut u_max = f64::NEG_INFINITY;
        let mut v_min = f64::INFINITY;
        let mut v_max = f64::NEG_INFINITY;
        for mask in 0u32..(1 << n) {
            let x: Vec<f64> = (0..n).map(|i| f64::from((mask >> i) & 1)).collect();
            let p = project_point(&x, basis).unwrap();
            u_min = u_min.min(p.u);
            u_max = u_max.max(p.u);
            v_min = v_min.min(p.v);
            v_max = v_max.max(p.v);
        }
        (u_min, u_max, v_min, v_max)
    }

    #[test]
    fn bounds_match_vertex_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let b4 = default_basis(4).unwrap();
        let (u0, u1, v0, v1) = coordinate_bounds(&b4);
        assert!((u1 - 2.0 / 2f64.sqrt()).abs() < TOL);
        assert!((v1 - 2.0 / 2f64.sqrt()).abs() < TOL);
        assert_eq!((u0, v0), (0.0, 0.0));

        for n in [3usize, 5, 8, 12] {
            for _ in 0..5 {
                let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let Ok(basis) = make_basis(&a, &b) else { continue };
                let fast = coordinate_bounds(&basis);
                let slow = vertex_enumeration_bounds(&basis);
                assert!((fast.0 - slow.0).abs() < TOL);
                assert!((fast.1 - slow.1).abs() < TOL);
                assert!((fast.2 - slow.2).abs() < TOL);
                assert!((fast.3 - slow.3).abs() < TOL);
            }
        }
    }

    #[test]
    fn idempotent_on_span_members() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.gen_range(2..12);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let Ok(basis) = make_basis(&a, &b) else { continue };
            let alpha = rng.gen_range(-3.0..3.0);
            let beta = rng.gen_range(-3.0..3.0);
            let x: Vec<f64> = basis
                .a
                .iter()
                .zip(&basis.b)
                .map(|(ai, bi)| alpha * ai + beta * bi)
                .collect();
            let p = project_point(&x, &basis).unwrap();
            assert!((p.u - alpha).abs() < 1e-9);
            assert!((p.v - beta).abs() < 1e-9);
        }
    }

    #[test]
    fn linearity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let basis = make_basis(
            &(0..10).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>(),
            &(0..10).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>(),
        )
        .unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (al, be) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let combo: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| al * xi + be * yi).collect();
            let px = project_point(&x, &basis).unwrap();
            let py = project_point(&y, &basis).unwrap();
            let pc = project_point(&combo, &basis).unwrap();
            assert!((pc.u - (al * px.u + be * py.u)).abs() < 1e-9);
            assert!((pc.v - (al * px.v + be * py.v)).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_least_squares_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 1000 {
            let n = rng.gen_range(2..=16);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let Ok(basis) = make_basis(&a, &b) else { continue };
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let p = project_point(&x, &basis).unwrap();
            let (ou, ov) = least_squares_oracle(&x, &basis.a, &basis.b);
            assert!((p.u - ou).abs() < 1e-9);
            assert!((p.v - ov).abs() < 1e-9);
            checked += 1;
        }
    }

    #[test]
    fn reconstruction_is_locally_optimal() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let residual = |x: &[f64], basis: &ProjectionBasis, u: f64, v: f64| -> f64 {
            x.iter()
                .zip(basis.a.iter().zip(&basis.b))
                .map(|(xi, (ai, bi))| {
                    let r = xi - u * ai - v * bi;
                    r * r
                })
                .sum::<f64>()
        };
        for _ in 0..50 {
            let n = 10;
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let Ok(basis) = make_basis(&a, &b) else { continue };
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let p = project_point(&x, &basis).unwrap();
            let best = residual(&x, &basis, p.u, p.v);
            for du in [-1e-3, 1e-3] {
                for dv in [-1e-3, 1e-3] {
                    assert!(best <= residual(&x, &basis, p.u + du, p.v + dv) + 1e-15);
                }
            }
        }
    }
}
