//! Mixed-model reparameterization of penalized splines.
//!
//! The coefficient space is split into an unpenalized polynomial block (fixed
//! effects) and penalized blocks (random effects). Each smoothing parameter
//! becomes a variance component whose precision contribution is a known
//! positive semidefinite form on the random coefficients: a plain diagonal
//! weight vector in 1D, and a Kronecker-structured form in 2D where the
//! replicate direction of each penalty couples transformed coordinates.

use ndarray::{Array1, Array2, ArrayView1};

use crate::basis::{DesignMatrix, DifferenceMatrix};
use crate::error::{Result, SopError};
use crate::linalg::{cholesky, cholesky_solve_mat, orthonormal_columns};
use crate::penalty::{SmoothingBasis, SmoothingBasis2d};

/// Index structure of the random coefficients.
#[derive(Debug, Clone)]
pub enum RandomLayout {
    /// 1D model: random coefficients are the `m` penalized differences.
    Flat { m: usize },
    /// 2D model: random coefficients live on the transformed coefficient
    /// grid (dimension-1 index fastest) minus the fixed polynomial block.
    Grid {
        n_fast: usize,
        n_slow: usize,
        /// (fast, slow) grid coordinate of each random coefficient.
        coords: Vec<(usize, usize)>,
        /// grid coordinate -> random index, `usize::MAX` for fixed cells.
        index: Vec<usize>,
    },
}

impl RandomLayout {
    pub fn len(&self) -> usize {
        match self {
            RandomLayout::Flat { m } => *m,
            RandomLayout::Grid { coords, .. } => coords.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn grid_index(&self, fast: usize, slow: usize) -> Option<usize> {
        match self {
            RandomLayout::Flat { .. } => None,
            RandomLayout::Grid { n_fast, index, .. } => {
                let v = index[fast + n_fast * slow];
                (v != usize::MAX).then_some(v)
            }
        }
    }
}

/// The positive semidefinite form a single variance component places on the
/// random coefficients.
#[derive(Debug, Clone)]
pub enum ComponentForm {
    /// `diag(w)`: every coefficient is shrunk independently.
    Diagonal(Array1<f64>),
    /// `slow (x) diag(fast)` on the coordinate grid: a direction-1 penalty
    /// component weighting difference positions (fast) and coupling the
    /// transformed replicate coordinates (slow).
    KronSlowFull {
        slow: Array2<f64>,
        fast_diag: Array1<f64>,
    },
    /// `diag(slow) (x) fast`: the direction-2 mirror image.
    KronFastFull {
        slow_diag: Array1<f64>,
        fast: Array2<f64>,
    },
}

/// A labelled variance component.
#[derive(Debug, Clone)]
pub struct PenaltyComponent {
    pub label: String,
    pub form: ComponentForm,
}

impl PenaltyComponent {
    /// Accumulate `scale * form` into a dense precision matrix.
    pub fn add_scaled(&self, layout: &RandomLayout, scale: f64, out: &mut Array2<f64>) {
        match &self.form {
            ComponentForm::Diagonal(w) => {
                for (j, &v) in w.iter().enumerate() {
                    out[[j, j]] += scale * v;
                }
            }
            ComponentForm::KronSlowFull { slow, fast_diag } => {
                let ns = slow.nrows();
                for (f, &d) in fast_diag.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for s in 0..ns {
                        let Some(r) = layout.grid_index(f, s) else {
                            continue;
                        };
                        for s2 in 0..ns {
                            if let Some(r2) = layout.grid_index(f, s2) {
                                out[[r, r2]] += scale * d * slow[[s, s2]];
                            }
                        }
                    }
                }
            }
            ComponentForm::KronFastFull { slow_diag, fast } => {
                let nf = fast.nrows();
                for (s, &d) in slow_diag.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for f in 0..nf {
                        let Some(r) = layout.grid_index(f, s) else {
                            continue;
                        };
                        for f2 in 0..nf {
                            if let Some(r2) = layout.grid_index(f2, s) {
                                out[[r, r2]] += scale * d * fast[[f, f2]];
                            }
                        }
                    }
                }
            }
        }
    }

    /// `alpha' form alpha`.
    pub fn quad_form(&self, layout: &RandomLayout, alpha: &ArrayView1<f64>) -> f64 {
        match &self.form {
            ComponentForm::Diagonal(w) => w
                .iter()
                .zip(alpha.iter())
                .map(|(&wj, &aj)| wj * aj * aj)
                .sum(),
            ComponentForm::KronSlowFull { slow, fast_diag } => {
                let ns = slow.nrows();
                let mut total = 0.0;
                for (f, &d) in fast_diag.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let u: Vec<f64> = (0..ns)
                        .map(|s| layout.grid_index(f, s).map_or(0.0, |r| alpha[r]))
                        .collect();
                    let mut q = 0.0;
                    for s in 0..ns {
                        for s2 in 0..ns {
                            q += slow[[s, s2]] * u[s] * u[s2];
                        }
                    }
                    total += d * q;
                }
                total
            }
            ComponentForm::KronFastFull { slow_diag, fast } => {
                let nf = fast.nrows();
                let mut total = 0.0;
                for (s, &d) in slow_diag.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let u: Vec<f64> = (0..nf)
                        .map(|f| layout.grid_index(f, s).map_or(0.0, |r| alpha[r]))
                        .collect();
                    let mut q = 0.0;
                    for f in 0..nf {
                        for f2 in 0..nf {
                            q += fast[[f, f2]] * u[f] * u[f2];
                        }
                    }
                    total += d * q;
                }
                total
            }
        }
    }

    /// `trace(A * form)` for a symmetric matrix on the random coefficients.
    pub fn trace_product(&self, layout: &RandomLayout, a: &Array2<f64>) -> f64 {
        match &self.form {
            ComponentForm::Diagonal(w) => {
                w.iter().enumerate().map(|(j, &wj)| wj * a[[j, j]]).sum()
            }
            ComponentForm::KronSlowFull { slow, fast_diag } => {
                let ns = slow.nrows();
                let mut total = 0.0;
                for (f, &d) in fast_diag.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let idx: Vec<Option<usize>> =
                        (0..ns).map(|s| layout.grid_index(f, s)).collect();
                    let mut t = 0.0;
                    for s in 0..ns {
                        let Some(r) = idx[s] else { continue };
                        for s2 in 0..ns {
                            if let Some(r2) = idx[s2] {
                                t += slow[[s, s2]] * a[[r, r2]];
                            }
                        }
                    }
                    total += d * t;
                }
                total
            }
            ComponentForm::KronFastFull { slow_diag, fast } => {
                let nf = fast.nrows();
                let mut total = 0.0;
                for (s, &d) in slow_diag.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let idx: Vec<Option<usize>> =
                        (0..nf).map(|f| layout.grid_index(f, s)).collect();
                    let mut t = 0.0;
                    for f in 0..nf {
                        let Some(r) = idx[f] else { continue };
                        for f2 in 0..nf {
                            if let Some(r2) = idx[f2] {
                                t += fast[[f, f2]] * a[[r, r2]];
                            }
                        }
                    }
                    total += d * t;
                }
                total
            }
        }
    }

    /// Diagonal of the form on the random coefficients.
    pub fn diagonal(&self, layout: &RandomLayout) -> Array1<f64> {
        let m = layout.len();
        let mut out = Array1::<f64>::zeros(m);
        match &self.form {
            ComponentForm::Diagonal(w) => out.assign(w),
            ComponentForm::KronSlowFull { slow, fast_diag } => {
                if let RandomLayout::Grid { coords, .. } = layout {
                    for (r, &(f, s)) in coords.iter().enumerate() {
                        out[r] = fast_diag[f] * slow[[s, s]];
                    }
                }
            }
            ComponentForm::KronFastFull { slow_diag, fast } => {
                if let RandomLayout::Grid { coords, .. } = layout {
                    for (r, &(f, s)) in coords.iter().enumerate() {
                        out[r] = slow_diag[s] * fast[[f, f]];
                    }
                }
            }
        }
        out
    }

    /// Number of random coefficients this component shrinks.
    pub fn support_size(&self, layout: &RandomLayout) -> usize {
        self.diagonal(layout).iter().filter(|&&v| v > 0.0).count()
    }
}

/// Fixed design, random design, and the variance-component forms.
#[derive(Debug, Clone)]
pub struct MixedParts {
    pub x: Array2<f64>,
    pub z: Array2<f64>,
    pub components: Vec<PenaltyComponent>,
    pub layout: RandomLayout,
    /// Coefficient-space image of each fixed-effect column.
    pub theta_fixed: Array2<f64>,
    /// Coefficient-space image of each random-effect column.
    pub theta_random: Array2<f64>,
}

impl MixedParts {
    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_fixed(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_random(&self) -> usize {
        self.z.ncols()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.components.iter().map(|c| c.label.as_str()).collect()
    }

    /// Dense precision of the random effects, `sum_l form_l / tau2_l`.
    pub fn assemble_precision(&self, tau2: &[f64]) -> Result<Array2<f64>> {
        assemble_precision(&self.components, &self.layout, tau2, self.n_random())
    }

    /// Spline coefficients reproducing `X beta + Z alpha`.
    pub fn coefficients(&self, beta: &ArrayView1<f64>, alpha: &ArrayView1<f64>) -> Array1<f64> {
        self.theta_fixed.dot(beta) + self.theta_random.dot(alpha)
    }
}

/// Dense random-effect precision `sum_l form_l / tau2_l`.
pub fn assemble_precision(
    components: &[PenaltyComponent],
    layout: &RandomLayout,
    tau2: &[f64],
    m: usize,
) -> Result<Array2<f64>> {
    if tau2.len() != components.len() {
        return Err(SopError::Config(format!(
            "{} variance components supplied for {} penalty components",
            tau2.len(),
            components.len()
        )));
    }
    if let Some(bad) = tau2.iter().find(|&&t| !(t > 0.0) || !t.is_finite()) {
        return Err(SopError::Domain(format!(
            "variance components must be positive and finite, got {bad}"
        )));
    }
    let mut out = Array2::<f64>::zeros((m, m));
    for (comp, &t) in components.iter().zip(tau2.iter()) {
        comp.add_scaled(layout, 1.0 / t, &mut out);
    }
    Ok(out)
}

/// Variance-component model over a set of penalty components.
pub struct PrecisionModel<'a> {
    pub components: &'a [PenaltyComponent],
    pub tau2: &'a [f64],
    pub sigma2: f64,
}

/// Diagonal of the random-effect precision `sum_l diag(c_l) / tau2_l`.
///
/// Only defined when every component is diagonal (the 1D model); the 2D
/// model's precision is assembled densely by `MixedParts::assemble_precision`.
pub fn precision_matrix(model: &PrecisionModel) -> Result<Array1<f64>> {
    if model.tau2.len() != model.components.len() {
        return Err(SopError::Config(format!(
            "{} variance components supplied for {} penalty components",
            model.tau2.len(),
            model.components.len()
        )));
    }
    if let Some(bad) = model.tau2.iter().find(|&&t| !(t > 0.0) || !t.is_finite()) {
        return Err(SopError::Domain(format!(
            "variance components must be positive and finite, got {bad}"
        )));
    }
    let mut diag: Option<Array1<f64>> = None;
    for (comp, &t) in model.components.iter().zip(model.tau2.iter()) {
        let ComponentForm::Diagonal(w) = &comp.form else {
            return Err(SopError::Config(
                "precision_matrix requires diagonal penalty components".into(),
            ));
        };
        match &mut diag {
            None => diag = Some(w.mapv(|v| v / t)),
            Some(d) => {
                for (dj, &wj) in d.iter_mut().zip(w.iter()) {
                    *dj += wj / t;
                }
            }
        }
    }
    diag.ok_or_else(|| SopError::Config("no penalty components".into()))
}

/// Orthonormal polynomial basis of degree `< q` on the centered and scaled
/// index `1..=c`; spans the null space of the order-`q` difference operator.
pub fn index_polynomials(c: usize, q: usize) -> Result<Array2<f64>> {
    if q < 1 || q > c {
        return Err(SopError::Config(format!(
            "polynomial block of degree < {q} is not defined for {c} coefficients"
        )));
    }
    let center = (c as f64 + 1.0) / 2.0;
    let scale = ((c as f64 - 1.0) / 2.0).max(1.0);
    let raw = Array2::from_shape_fn((c, q), |(j, k)| {
        (((j + 1) as f64 - center) / scale).powi(k as i32)
    });
    orthonormal_columns(&raw.view())
}

/// `Q = D' (D D')^{-1}`, the minimum-norm right inverse of the difference
/// operator; maps differences back to coefficients.
pub fn difference_right_inverse(d: &DifferenceMatrix) -> Result<Array2<f64>> {
    let ddt = d.values.dot(&d.values.t());
    let l = cholesky(&ddt.view())
        .map_err(|e| SopError::Numeric(format!("D D' factorization failed: {e}")))?;
    let w = cholesky_solve_mat(&l, &d.values.view());
    Ok(w.t().to_owned())
}

/// Mixed-model form of a 1D adaptive P-spline: `X` spans the polynomial null
/// space through the basis, `Z = B D'(D D')^{-1}`, and each smoothing-basis
/// column becomes a diagonal precision weight vector.
pub fn reparameterize_1d(
    b: &DesignMatrix,
    d: &DifferenceMatrix,
    c: &SmoothingBasis,
) -> Result<MixedParts> {
    let c_dim = b.ncols();
    if d.ncols() != c_dim {
        return Err(SopError::Config(format!(
            "difference matrix acts on {} coefficients but the basis has {c_dim}",
            d.ncols()
        )));
    }
    if c.nrows() != d.nrows() {
        return Err(SopError::Config(format!(
            "smoothing basis has {} rows, expected {}",
            c.nrows(),
            d.nrows()
        )));
    }
    let q = d.order;
    let poly = index_polynomials(c_dim, q)?;
    let qmat = difference_right_inverse(d)?;
    let x = b.values.dot(&poly);
    let z = b.values.dot(&qmat);
    let components = (0..c.ncols())
        .map(|l| PenaltyComponent {
            label: format!("phi[{}]", l + 1),
            form: ComponentForm::Diagonal(c.values.column(l).to_owned()),
        })
        .collect();
    Ok(MixedParts {
        x,
        z,
        components,
        layout: RandomLayout::Flat { m: c_dim - q },
        theta_fixed: poly,
        theta_random: qmat,
    })
}

/// Mixed-model form of the 2D adaptive model. The tensor coefficient grid is
/// transformed marginally by `T_d = [P_d | Q_d]`; the fixed block is the
/// polynomial-by-polynomial corner and every remaining coordinate is random.
/// Direction-1 components weight dimension-1 difference positions exactly and
/// couple the transformed dimension-2 coordinates (and vice versa), so the
/// transformed penalty reproduces the assembled adaptive penalty identically.
pub fn reparameterize_2d(
    b1: &DesignMatrix,
    b2: &DesignMatrix,
    d1: &DifferenceMatrix,
    d2: &DifferenceMatrix,
    sb: &SmoothingBasis2d,
) -> Result<MixedParts> {
    let n = b1.nrows();
    if b2.nrows() != n {
        return Err(SopError::Config(format!(
            "marginal designs have {} and {} rows",
            n,
            b2.nrows()
        )));
    }
    let c1 = b1.ncols();
    let c2 = b2.ncols();
    if d1.ncols() != c1 || d2.ncols() != c2 {
        return Err(SopError::Config(
            "difference matrices do not conform to the marginal bases".into(),
        ));
    }
    let (q1, q2) = (d1.order, d2.order);
    if sb.c11.nrows() != c1 - q1
        || sb.c12.nrows() != c2
        || sb.c21.nrows() != c1
        || sb.c22.nrows() != c2 - q2
    {
        return Err(SopError::Config(
            "smoothing-basis factors do not conform to the coefficient grid".into(),
        ));
    }

    let poly1 = index_polynomials(c1, q1)?;
    let poly2 = index_polynomials(c2, q2)?;
    let qmat1 = difference_right_inverse(d1)?;
    let qmat2 = difference_right_inverse(d2)?;

    let mut t1 = Array2::<f64>::zeros((c1, c1));
    t1.slice_mut(ndarray::s![.., ..q1]).assign(&poly1);
    t1.slice_mut(ndarray::s![.., q1..]).assign(&qmat1);
    let mut t2 = Array2::<f64>::zeros((c2, c2));
    t2.slice_mut(ndarray::s![.., ..q2]).assign(&poly2);
    t2.slice_mut(ndarray::s![.., q2..]).assign(&qmat2);

    let u1 = b1.values.dot(&t1);
    let u2 = b2.values.dot(&t2);

    // grid coordinates: dimension-1 (fast) x dimension-2 (slow)
    let mut coords = Vec::with_capacity(c1 * c2 - q1 * q2);
    let mut index = vec![usize::MAX; c1 * c2];
    for s in 0..c2 {
        for f in 0..c1 {
            if f < q1 && s < q2 {
                continue;
            }
            index[f + c1 * s] = coords.len();
            coords.push((f, s));
        }
    }
    let m = coords.len();

    let mut x = Array2::<f64>::zeros((n, q1 * q2));
    let mut k = 0;
    for s in 0..q2 {
        for f in 0..q1 {
            for i in 0..n {
                x[[i, k]] = u1[[i, f]] * u2[[i, s]];
            }
            k += 1;
        }
    }
    let mut z = Array2::<f64>::zeros((n, m));
    for (r, &(f, s)) in coords.iter().enumerate() {
        for i in 0..n {
            z[[i, r]] = u1[[i, f]] * u2[[i, s]];
        }
    }

    // coefficient-space images of the new coordinates
    let ngrid = c1 * c2;
    let mut theta_fixed = Array2::<f64>::zeros((ngrid, q1 * q2));
    let mut k = 0;
    for s in 0..q2 {
        for f in 0..q1 {
            for i2 in 0..c2 {
                for i1 in 0..c1 {
                    theta_fixed[[i1 + c1 * i2, k]] = t1[[i1, f]] * t2[[i2, s]];
                }
            }
            k += 1;
        }
    }
    let mut theta_random = Array2::<f64>::zeros((ngrid, m));
    for (r, &(f, s)) in coords.iter().enumerate() {
        for i2 in 0..c2 {
            for i1 in 0..c1 {
                theta_random[[i1 + c1 * i2, r]] = t1[[i1, f]] * t2[[i2, s]];
            }
        }
    }

    // direction-1 components: exact weights on difference positions (fast),
    // congruence-transformed replicate weights (slow)
    let p11 = sb.c11.ncols();
    let p12 = sb.c12.ncols();
    let p21 = sb.c21.ncols();
    let p22 = sb.c22.ncols();
    let mut components = Vec::with_capacity(p11 * p12 + p21 * p22);
    let slow_forms: Vec<Array2<f64>> = (0..p12)
        .map(|l2| {
            let mut w = t2.clone();
            for (mut row, &c) in w.rows_mut().into_iter().zip(sb.c12.column(l2).iter()) {
                row.mapv_inplace(|v| v * c);
            }
            t2.t().dot(&w)
        })
        .collect();
    for l2 in 0..p12 {
        for l1 in 0..p11 {
            let mut fast_diag = Array1::<f64>::zeros(c1);
            for (i, &v) in sb.c11.column(l1).iter().enumerate() {
                fast_diag[q1 + i] = v;
            }
            components.push(PenaltyComponent {
                label: format!("d1[{},{}]", l1 + 1, l2 + 1),
                form: ComponentForm::KronSlowFull {
                    slow: slow_forms[l2].clone(),
                    fast_diag,
                },
            });
        }
    }
    let fast_forms: Vec<Array2<f64>> = (0..p21)
        .map(|s1| {
            let mut w = t1.clone();
            for (mut row, &c) in w.rows_mut().into_iter().zip(sb.c21.column(s1).iter()) {
                row.mapv_inplace(|v| v * c);
            }
            t1.t().dot(&w)
        })
        .collect();
    for s2 in 0..p22 {
        for s1 in 0..p21 {
            let mut slow_diag = Array1::<f64>::zeros(c2);
            for (i, &v) in sb.c22.column(s2).iter().enumerate() {
                slow_diag[q2 + i] = v;
            }
            components.push(PenaltyComponent {
                label: format!("d2[{},{}]", s1 + 1, s2 + 1),
                form: ComponentForm::KronFastFull {
                    slow_diag,
                    fast: fast_forms[s1].clone(),
                },
            });
        }
    }

    Ok(MixedParts {
        x,
        z,
        components,
        layout: RandomLayout::Grid {
            n_fast: c1,
            n_slow: c2,
            coords,
            index,
        },
        theta_fixed,
        theta_random,
    })
}
