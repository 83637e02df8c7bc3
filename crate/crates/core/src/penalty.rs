//! Standard and adaptive difference penalties, including the low-dimensional
//! B-spline bases that model the local smoothing-parameter fields.

use ndarray::{Array1, Array2, ArrayView1};

use crate::basis::{bspline_design, BasisSpec, DifferenceMatrix};
use crate::error::{Result, SopError};
use crate::linalg::kron;

/// Relative floor applied to smoothing weights during penalty assembly.
const PHI_FLOOR_REL: f64 = 1e-10;

/// Smoothing-field basis configuration for one penalty direction (1D model).
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveSmoothSpec {
    /// Number of basis functions modelling the smoothing field.
    pub p: usize,
    /// Degree of the smoothing basis. When `p` is too small to carry this
    /// degree the effective degree is reduced to `p - 1`.
    pub degree: usize,
}

impl AdaptiveSmoothSpec {
    pub fn new(p: usize) -> Self {
        Self { p, degree: 3 }
    }

    pub fn with_degree(p: usize, degree: usize) -> Self {
        Self { p, degree }
    }

    /// `p = 1` with a degree-0 basis recovers the non-adaptive model.
    pub fn is_nonadaptive(&self) -> bool {
        self.p == 1
    }
}

/// Smoothing-field bases for the two penalty directions of a surface model.
///
/// Direction 1 uses a `p11 x p12` tensor basis (difference positions along
/// dimension 1, replicate positions along dimension 2); direction 2 uses
/// `p21 x p22` (replicates along dimension 1, differences along dimension 2).
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveSmoothSpec2d {
    pub p11: usize,
    pub p12: usize,
    pub p21: usize,
    pub p22: usize,
    pub degree: usize,
}

impl AdaptiveSmoothSpec2d {
    pub fn new(p11: usize, p12: usize, p21: usize, p22: usize) -> Self {
        Self {
            p11,
            p12,
            p21,
            p22,
            degree: 3,
        }
    }

    /// Total number of smoothing parameters (variance components).
    pub fn component_count(&self) -> usize {
        self.p11 * self.p12 + self.p21 * self.p22
    }

    pub fn is_nonadaptive(&self) -> bool {
        self.p11 == 1 && self.p12 == 1 && self.p21 == 1 && self.p22 == 1
    }
}

/// Unpenalized B-spline basis over difference (or replicate) positions.
#[derive(Debug, Clone)]
pub struct SmoothingBasis {
    pub values: Array2<f64>,
}

impl SmoothingBasis {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// The smoothing field `lambda = C phi`.
    pub fn field(&self, phi: &ArrayView1<f64>) -> Array1<f64> {
        self.values.dot(phi)
    }
}

/// The four marginal factors of the two tensor-product smoothing bases,
/// together with their assembled Kronecker forms.
#[derive(Debug, Clone)]
pub struct SmoothingBasis2d {
    pub c11: Array2<f64>,
    pub c12: Array2<f64>,
    pub c21: Array2<f64>,
    pub c22: Array2<f64>,
    direction1: SmoothingBasis,
    direction2: SmoothingBasis,
}

impl SmoothingBasis2d {
    /// Assembled direction-1 basis of shape `(c1-q1)*c2 x p11*p12`; the row
    /// index runs fastest over the dimension-1 difference positions.
    pub fn direction1(&self) -> &SmoothingBasis {
        &self.direction1
    }

    /// Assembled direction-2 basis of shape `c1*(c2-q2) x p21*p22`; the row
    /// index runs fastest over the dimension-1 replicate positions.
    pub fn direction2(&self) -> &SmoothingBasis {
        &self.direction2
    }
}

/// Symmetric positive semidefinite penalty matrix on the spline coefficients.
#[derive(Debug, Clone)]
pub struct PenaltyMatrix {
    pub values: Array2<f64>,
}

impl PenaltyMatrix {
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn quad_form(&self, theta: &ArrayView1<f64>) -> f64 {
        theta.dot(&self.values.dot(theta))
    }
}

/// Basis evaluated at integer positions over a unit-spaced index range.
fn index_basis(n_pos: usize, p: usize, degree: usize) -> Result<Array2<f64>> {
    if p < 1 {
        return Err(SopError::Config("smoothing basis needs p >= 1".into()));
    }
    if p > n_pos {
        return Err(SopError::Config(format!(
            "smoothing basis size p = {p} exceeds the {n_pos} available positions"
        )));
    }
    if p == 1 {
        return Ok(Array2::ones((n_pos, 1)));
    }
    let degree_eff = degree.min(p - 1);
    let nseg = p - degree_eff;
    let spec = BasisSpec::new(1.0, n_pos as f64, nseg, degree_eff, 1);
    let positions = Array1::from_shape_fn(n_pos, |i| (i + 1) as f64);
    let design = bspline_design(positions.view(), &spec)?;
    for (l, col) in design.values.columns().into_iter().enumerate() {
        if col.iter().all(|&v| v == 0.0) {
            return Err(SopError::Config(format!(
                "smoothing basis column {l} is identically zero"
            )));
        }
    }
    Ok(design.values)
}

/// B-spline basis for the 1D smoothing field, evaluated at the `c - q`
/// difference positions.
pub fn smoothing_basis_1d(c: usize, q: usize, spec: &AdaptiveSmoothSpec) -> Result<SmoothingBasis> {
    if c <= q {
        return Err(SopError::Config(format!(
            "need c > q for a difference penalty (c = {c}, q = {q})"
        )));
    }
    let values = index_basis(c - q, spec.p, spec.degree)?;
    Ok(SmoothingBasis { values })
}

/// Tensor-product smoothing bases for both penalty directions of a surface.
pub fn smoothing_basis_2d(
    c1: usize,
    c2: usize,
    q1: usize,
    q2: usize,
    spec: &AdaptiveSmoothSpec2d,
) -> Result<SmoothingBasis2d> {
    if c1 <= q1 || c2 <= q2 {
        return Err(SopError::Config(format!(
            "need c > q in both dimensions (c1 = {c1}, q1 = {q1}, c2 = {c2}, q2 = {q2})"
        )));
    }
    let c11 = index_basis(c1 - q1, spec.p11, spec.degree)?;
    let c12 = index_basis(c2, spec.p12, spec.degree)?;
    let c21 = index_basis(c1, spec.p21, spec.degree)?;
    let c22 = index_basis(c2 - q2, spec.p22, spec.degree)?;
    // Row ordering matches the difference operators: the dimension-1 index
    // varies fastest, so the dimension-2 factor is the slow Kronecker factor.
    let direction1 = SmoothingBasis {
        values: kron(&c12.view(), &c11.view()),
    };
    let direction2 = SmoothingBasis {
        values: kron(&c22.view(), &c21.view()),
    };
    Ok(SmoothingBasis2d {
        c11,
        c12,
        c21,
        c22,
        direction1,
        direction2,
    })
}

/// Single-parameter difference penalty `lambda D^T D`.
pub fn standard_penalty(d: &DifferenceMatrix, lambda: f64) -> Result<PenaltyMatrix> {
    if !(lambda > 0.0) {
        return Err(SopError::Config(format!(
            "smoothing parameter must be positive, got {lambda}"
        )));
    }
    let values = d.values.t().dot(&d.values) * lambda;
    Ok(PenaltyMatrix { values })
}

fn validate_phi(phi: ArrayView1<f64>, expected: usize, what: &str) -> Result<Array1<f64>> {
    if phi.len() != expected {
        return Err(SopError::Config(format!(
            "{what} has {} entries but the smoothing basis has {expected} columns",
            phi.len()
        )));
    }
    if phi.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(SopError::Config(format!(
            "{what} must be strictly positive and finite"
        )));
    }
    let floor = PHI_FLOOR_REL * phi.fold(0.0_f64, |a, &b| a.max(b));
    Ok(phi.mapv(|v| v.max(floor)))
}

/// Adaptive penalty `D^T diag(C phi) D`.
pub fn adaptive_penalty_1d(
    d: &DifferenceMatrix,
    c: &SmoothingBasis,
    phi: ArrayView1<f64>,
) -> Result<PenaltyMatrix> {
    if c.nrows() != d.nrows() {
        return Err(SopError::Config(format!(
            "smoothing basis has {} rows but the difference matrix has {} rows",
            c.nrows(),
            d.nrows()
        )));
    }
    let phi = validate_phi(phi, c.ncols(), "phi")?;
    let field = c.values.dot(&phi);
    let mut weighted = d.values.clone();
    for (mut row, &w) in weighted.rows_mut().into_iter().zip(field.iter()) {
        row.mapv_inplace(|v| v * w);
    }
    let values = d.values.t().dot(&weighted);
    Ok(PenaltyMatrix { values })
}

/// Anisotropic adaptive penalty on a coefficient grid vectorized with the
/// dimension-1 index fastest:
/// `sum_m phi1_m (I (x) D1)' diag(c_{1,m}) (I (x) D1)
///  + sum_s phi2_s (D2 (x) I)' diag(c_{2,s}) (D2 (x) I)`.
pub fn adaptive_penalty_2d(
    d1: &DifferenceMatrix,
    d2: &DifferenceMatrix,
    c1: &SmoothingBasis,
    c2: &SmoothingBasis,
    phi1: ArrayView1<f64>,
    phi2: ArrayView1<f64>,
) -> Result<PenaltyMatrix> {
    let c1_dim = d1.ncols();
    let c2_dim = d2.ncols();
    if c1.nrows() != d1.nrows() * c2_dim {
        return Err(SopError::Config(format!(
            "direction-1 smoothing basis has {} rows, expected {}",
            c1.nrows(),
            d1.nrows() * c2_dim
        )));
    }
    if c2.nrows() != c1_dim * d2.nrows() {
        return Err(SopError::Config(format!(
            "direction-2 smoothing basis has {} rows, expected {}",
            c2.nrows(),
            c1_dim * d2.nrows()
        )));
    }
    let phi1 = validate_phi(phi1, c1.ncols(), "phi1")?;
    let phi2 = validate_phi(phi2, c2.ncols(), "phi2")?;

    let eye1 = Array2::<f64>::eye(c1_dim);
    let eye2 = Array2::<f64>::eye(c2_dim);
    let l1 = kron(&eye2.view(), &d1.values.view());
    let l2 = kron(&d2.values.view(), &eye1.view());

    let field1 = c1.values.dot(&phi1);
    let field2 = c2.values.dot(&phi2);

    let mut w1 = l1.clone();
    for (mut row, &w) in w1.rows_mut().into_iter().zip(field1.iter()) {
        row.mapv_inplace(|v| v * w);
    }
    let mut w2 = l2.clone();
    for (mut row, &w) in w2.rows_mut().into_iter().zip(field2.iter()) {
        row.mapv_inplace(|v| v * w);
    }
    let values = l1.t().dot(&w1) + l2.t().dot(&w2);
    Ok(PenaltyMatrix { values })
}

/// Check that a penalty matrix is symmetric and positive semidefinite to the
/// stated tolerances. Positive semidefiniteness is verified by factorizing
/// the matrix shifted by `tol * scale`.
pub fn check_penalty_psd(p: &PenaltyMatrix, sym_tol: f64, eig_tol: f64) -> Result<()> {
    let n = p.dim();
    let mut scale = 0.0_f64;
    for i in 0..n {
        scale = scale.max(p.values[[i, i]].abs());
        for j in (i + 1)..n {
            if (p.values[[i, j]] - p.values[[j, i]]).abs() > sym_tol * scale.max(1.0) {
                return Err(SopError::Numeric(format!(
                    "penalty is asymmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut shifted = p.values.clone();
    let shift = eig_tol * scale.max(1.0);
    for i in 0..n {
        shifted[[i, i]] += shift;
    }
    crate::linalg::cholesky(&shifted.view())
        .map(|_| ())
        .map_err(|_| SopError::Numeric("penalty has an eigenvalue below tolerance".into()))
}
