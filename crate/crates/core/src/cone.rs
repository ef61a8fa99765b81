//! Simplicial preference cones and the dominance order they induce.
//!
//! A cone is the set of *improvement directions*: `y` dominates `x` when
//! `y - x` lies in the cone. Cones are stored both as a generator matrix `W`
//! (columns are the extreme rays) and in halfspace form `A = W^{-1}`, so that
//! membership reduces to `A·v >= 0` componentwise.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::ops::Deref;
use thiserror::Error;

/// Absolute tolerance for membership tests. Values in `[-tol, tol]` are on the boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Largest accepted condition number of a generator matrix.
pub const DEFAULT_MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("generator matrix must be square and non-empty (got {rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("generator matrix contains a non-finite entry")]
    NonFinite,
    #[error("generator matrix is singular")]
    Singular,
    #[error("generator matrix is ill-conditioned (condition number {condition:.3e} > {limit:.3e})")]
    IllConditioned { condition: f64, limit: f64 },
    #[error("dimension mismatch: cone has dimension {expected}, vector has {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A reward (or mean-reward) vector, one component per objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardVector(pub Vec<f64>);

impl RewardVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for RewardVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for RewardVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl AsRef<[f64]> for RewardVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeKind {
    Orthant,
    Simplicial,
}

/// A pointed, full-dimensional simplicial cone.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSpec {
    dim: usize,
    /// Row-major `W`; column `j` is generator `w_j`.
    generators: Vec<f64>,
    /// Row-major `A = W^{-1}`; row `i` is the normal `a_i`.
    normals: Vec<f64>,
    kind: ConeKind,
}

impl ConeSpec {
    /// The nonnegative orthant of dimension `dim`.
    pub fn orthant(dim: usize) -> Result<Self, ConeError> {
        if dim == 0 {
            return Err(ConeError::NotSquare { rows: 0, cols: 0 });
        }
        let eye = identity(dim);
        Ok(Self {
            dim,
            generators: eye.clone(),
            normals: eye,
            kind: ConeKind::Orthant,
        })
    }

    /// Builds a cone from a square generator matrix whose *columns* are the rays.
    ///
    /// `w` is given as a list of matrix rows.
    pub fn from_generators(w: &[Vec<f64>]) -> Result<Self, ConeError> {
        Self::from_generators_with_limit(w, DEFAULT_MAX_CONDITION)
    }

    pub fn from_generators_with_limit(w: &[Vec<f64>], max_condition: f64) -> Result<Self, ConeError> {
        let dim = w.len();
        if dim == 0 || w.iter().any(|row| row.len() != dim) {
            let cols = w.first().map_or(0, Vec::len);
            return Err(ConeError::NotSquare { rows: dim, cols });
        }
        if w.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ConeError::NonFinite);
        }
        let flat: Vec<f64> = w.iter().flatten().copied().collect();
        if flat == identity(dim) {
            return Self::orthant(dim);
        }

        let mat = DMatrix::from_row_slice(dim, dim, &flat);
        let sv = mat.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if smax == 0.0 || smin <= f64::EPSILON * smax * dim as f64 {
            return Err(ConeError::Singular);
        }
        let condition = smax / smin;
        if condition > max_condition {
            return Err(ConeError::IllConditioned {
                condition,
                limit: max_condition,
            });
        }
        let inv = mat.try_inverse().ok_or(ConeError::Singular)?;
        let mut normals = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                normals.push(inv[(i, j)]);
            }
        }
        Ok(Self {
            dim,
            generators: flat,
            normals,
            kind: ConeKind::Simplicial,
        })
    }

    /// Builds a cone from a list of extreme rays (each ray becomes a column of `W`).
    pub fn from_rays(rays: &[Vec<f64>]) -> Result<Self, ConeError> {
        let dim = rays.len();
        if dim == 0 || rays.iter().any(|r| r.len() != dim) {
            let cols = rays.first().map_or(0, Vec::len);
            return Err(ConeError::NotSquare { rows: cols, cols: dim });
        }
        let rows: Vec<Vec<f64>> = (0..dim)
            .map(|i| rays.iter().map(|r| r[i]).collect())
            .collect();
        Self::from_generators(&rows)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> ConeKind {
        self.kind
    }

    pub fn is_orthant(&self) -> bool {
        self.kind == ConeKind::Orthant
    }

    /// Generator matrix as rows.
    pub fn generator_rows(&self) -> Vec<Vec<f64>> {
        self.generators.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    /// Generator `j` (column `j` of `W`).
    pub fn generator(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.generators[i * self.dim + j]).collect()
    }

    /// Halfspace normals `a_i` (rows of `W^{-1}`).
    pub fn normal_rows(&self) -> Vec<Vec<f64>> {
        self.normals.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub(crate) fn normal(&self, i: usize) -> &[f64] {
        &self.normals[i * self.dim..(i + 1) * self.dim]
    }

    fn check_dim(&self, len: usize) -> Result<(), ConeError> {
        if len == self.dim {
            Ok(())
        } else {
            Err(ConeError::DimensionMismatch {
                expected: self.dim,
                got: len,
            })
        }
    }

    /// `A·v`, i.e. the coordinates of `v` in the generator basis.
    pub fn margins(&self, v: &[f64]) -> Result<Vec<f64>, ConeError> {
        self.check_dim(v.len())?;
        Ok((0..self.dim).map(|i| dot(self.normal(i), v)).collect())
    }

    pub fn contains(&self, v: &[f64]) -> Result<bool, ConeError> {
        self.check_dim(v.len())?;
        Ok(self.contains_unchecked(v))
    }

    pub fn strictly_contains(&self, v: &[f64]) -> Result<bool, ConeError> {
        self.check_dim(v.len())?;
        Ok(self.strictly_contains_unchecked(v))
    }

    pub fn weakly_dominates(&self, y: &[f64], x: &[f64]) -> Result<bool, ConeError> {
        self.check_dim(y.len())?;
        self.check_dim(x.len())?;
        Ok(self.weakly_dominates_unchecked(y, x))
    }

    /// Weak dominance with `y != x`.
    pub fn dominates(&self, y: &[f64], x: &[f64]) -> Result<bool, ConeError> {
        self.check_dim(y.len())?;
        self.check_dim(x.len())?;
        Ok(self.dominates_unchecked(y, x))
    }

    pub fn strictly_dominates(&self, y: &[f64], x: &[f64]) -> Result<bool, ConeError> {
        self.check_dim(y.len())?;
        self.check_dim(x.len())?;
        Ok(self.strictly_dominates_unchecked(y, x))
    }

    pub(crate) fn contains_unchecked(&self, v: &[f64]) -> bool {
        (0..self.dim).all(|i| dot(self.normal(i), v) >= -BOUNDARY_TOL)
    }

    pub(crate) fn strictly_contains_unchecked(&self, v: &[f64]) -> bool {
        (0..self.dim).all(|i| dot(self.normal(i), v) > BOUNDARY_TOL)
    }

    pub(crate) fn weakly_dominates_unchecked(&self, y: &[f64], x: &[f64]) -> bool {
        (0..self.dim).all(|i| diff_dot(self.normal(i), y, x) >= -BOUNDARY_TOL)
    }

    pub(crate) fn dominates_unchecked(&self, y: &[f64], x: &[f64]) -> bool {
        y != x && self.weakly_dominates_unchecked(y, x)
    }

    pub(crate) fn strictly_dominates_unchecked(&self, y: &[f64], x: &[f64]) -> bool {
        (0..self.dim).all(|i| diff_dot(self.normal(i), y, x) > BOUNDARY_TOL)
    }
}

fn identity(dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim * dim];
    for i in 0..dim {
        m[i * dim + i] = 1.0;
    }
    m
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a · (y - x)`
#[inline]
fn diff_dot(a: &[f64], y: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(y.iter().zip(x)).map(|(ai, (yi, xi))| ai * (yi - xi)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c3() -> ConeSpec {
        ConeSpec::from_generators(&[vec![1.0, 0.6], vec![0.6, 1.0]]).unwrap()
    }

    #[test]
    fn identity_generators_give_orthant() {
        let c = ConeSpec::from_generators(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(c.kind(), ConeKind::Orthant);
        assert_eq!(c.normal_rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn narrow_cone_inverse() {
        let a = c3().normal_rows();
        let want = [[1.5625, -0.9375], [-0.9375, 1.5625]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((a[i][j] - want[i][j]).abs() < 1e-12, "{a:?}");
            }
        }
        assert_eq!(c3().generator(0), vec![1.0, 0.6]);
    }

    #[test]
    fn singular_generators_rejected() {
        let err = ConeSpec::from_generators(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap_err();
        assert_eq!(err, ConeError::Singular);
    }

    #[test]
    fn ill_conditioned_generators_rejected() {
        let err = ConeSpec::from_generators(&[vec![1.0, 1.0], vec![1.0, 1.0 + 1e-10]]).unwrap_err();
        assert!(matches!(err, ConeError::IllConditioned { .. }), "{err:?}");
    }

    #[test]
    fn non_square_rejected() {
        assert!(matches!(
            ConeSpec::from_generators(&[vec![1.0, 0.0]]),
            Err(ConeError::NotSquare { .. })
        ));
        assert!(ConeSpec::orthant(0).is_err());
    }

    #[test]
    fn membership_boundaries() {
        let o = ConeSpec::orthant(2).unwrap();
        assert!(o.contains(&[0.0, 0.0]).unwrap());
        assert!(!o.strictly_contains(&[0.0, 0.0]).unwrap());

        let c = c3();
        assert!(c.contains(&[1.0, 0.6]).unwrap());
        assert!(!c.strictly_contains(&[1.0, 0.6]).unwrap());
        assert!(c.strictly_contains(&[1.0, 1.0]).unwrap());
        let m = c.margins(&[1.0, 1.0]).unwrap();
        assert!((m[0] - 0.625).abs() < 1e-12 && (m[1] - 0.625).abs() < 1e-12);
    }

    #[test]
    fn dominance_examples() {
        let o = ConeSpec::orthant(2).unwrap();
        let y = [1.25, 1.05];
        let x = [1.10, 1.00];
        assert!(o.strictly_dominates(&y, &x).unwrap());
        assert!(!c3().strictly_dominates(&y, &x).unwrap());
        let m = c3().margins(&[0.15, 0.05]).unwrap();
        assert!((m[0] - 0.1875).abs() < 1e-12 && (m[1] + 0.0625).abs() < 1e-12);

        for c in [o, c3()] {
            assert!(c.weakly_dominates(&x, &x).unwrap());
            assert!(!c.dominates(&x, &x).unwrap());
            assert!(!c.strictly_dominates(&x, &x).unwrap());
        }
    }

    #[test]
    fn dimension_mismatch() {
        let o = ConeSpec::orthant(2).unwrap();
        assert_eq!(
            o.contains(&[1.0, 2.0, 3.0]),
            Err(ConeError::DimensionMismatch { expected: 2, got: 3 })
        );
        assert!(o.dominates(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn rays_are_columns() {
        let c = ConeSpec::from_rays(&[vec![1.0, 0.6], vec![0.6, 1.0]]).unwrap();
        assert_eq!(c, c3());
    }
}
