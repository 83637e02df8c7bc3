//! B-spline design matrices on equally spaced knots and difference operators.

use ndarray::{Array2, ArrayView1};

use crate::error::{Result, SopError};

/// Configuration of a univariate B-spline basis with a difference penalty.
///
/// The basis has `nseg` equal segments on `[xmin, xmax]`, spline degree
/// `degree`, and a penalty acting on differences of order `diff_order` of
/// adjacent coefficients. The basis size is `c = nseg + degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    pub xmin: f64,
    pub xmax: f64,
    pub nseg: usize,
    pub degree: usize,
    pub diff_order: usize,
}

impl BasisSpec {
    pub fn new(xmin: f64, xmax: f64, nseg: usize, degree: usize, diff_order: usize) -> Self {
        Self {
            xmin,
            xmax,
            nseg,
            degree,
            diff_order,
        }
    }

    /// Number of basis functions `c = nseg + degree`.
    pub fn basis_size(&self) -> usize {
        self.nseg + self.degree
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xmax > self.xmin) {
            return Err(SopError::Config(format!(
                "xmax ({}) must exceed xmin ({})",
                self.xmax, self.xmin
            )));
        }
        if self.nseg < 1 {
            return Err(SopError::Config("nseg must be at least 1".into()));
        }
        if self.diff_order < 1 {
            return Err(SopError::Config("diff_order must be at least 1".into()));
        }
        if self.basis_size() < self.diff_order + 1 {
            return Err(SopError::Config(format!(
                "basis size {} must be at least diff_order + 1 = {}",
                self.basis_size(),
                self.diff_order + 1
            )));
        }
        Ok(())
    }
}

/// B-spline design matrix: `n` evaluation rows by `c` basis columns.
///
/// Rows form a partition of unity for points inside the domain, every entry
/// is nonnegative, and at most `degree + 1` entries per row are nonzero.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub values: Array2<f64>,
    pub spec: BasisSpec,
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Greville abscissa of basis function `j`: the average of its
    /// `degree` interior support knots (the knot itself for degree 0).
    pub fn greville(&self, j: usize) -> f64 {
        let knots = make_knots(&self.spec).expect("spec validated at construction");
        let d = self.spec.degree;
        if d == 0 {
            0.5 * (knots[j] + knots[j + 1])
        } else {
            knots[j + 1..j + 1 + d].iter().sum::<f64>() / d as f64
        }
    }
}

/// Difference operator of order `q` as a `(c - q) x c` matrix.
#[derive(Debug, Clone)]
pub struct DifferenceMatrix {
    pub values: Array2<f64>,
    pub order: usize,
}

impl DifferenceMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}

/// Equally spaced knot sequence for `spec`: `nseg + 1` boundary-to-boundary
/// knots extended by `degree` knots on each side at the same spacing.
pub fn make_knots(spec: &BasisSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let h = (spec.xmax - spec.xmin) / spec.nseg as f64;
    let total = spec.nseg + 2 * spec.degree + 1;
    let knots: Vec<f64> = (0..total)
        .map(|i| spec.xmin + (i as f64 - spec.degree as f64) * h)
        .collect();
    Ok(knots)
}

/// Evaluate the B-spline basis at the points `x`.
///
/// Points must lie in `[xmin, xmax]`; the right boundary is assigned to the
/// last segment so its row still sums to one.
pub fn bspline_design(x: ArrayView1<f64>, spec: &BasisSpec) -> Result<DesignMatrix> {
    let knots = make_knots(spec)?;
    let c = spec.basis_size();
    let degree = spec.degree;
    let h = (spec.xmax - spec.xmin) / spec.nseg as f64;
    let mut values = Array2::<f64>::zeros((x.len(), c));

    let mut work = vec![0.0_f64; degree + 1];
    let mut left = vec![0.0_f64; degree + 1];
    let mut right = vec![0.0_f64; degree + 1];

    for (i, &xi) in x.iter().enumerate() {
        if !xi.is_finite() || xi < spec.xmin || xi > spec.xmax {
            return Err(SopError::Domain(format!(
                "x[{i}] = {xi} is outside the basis domain [{}, {}]",
                spec.xmin, spec.xmax
            )));
        }
        // segment index, closed at the right endpoint
        let seg = (((xi - spec.xmin) / h).floor() as usize).min(spec.nseg - 1);
        // knot interval in the extended sequence with t[interval] <= x < t[interval+1]
        let interval = seg + degree;

        // de Boor's triangular scheme for the degree+1 nonzero values
        work[0] = 1.0;
        for d in 1..=degree {
            left[d] = xi - knots[interval + 1 - d];
            right[d] = knots[interval + d] - xi;
            let mut saved = 0.0;
            for r in 0..d {
                let term = work[r] / (right[r + 1] + left[d - r]);
                work[r] = saved + right[r + 1] * term;
                saved = left[d - r] * term;
            }
            work[d] = saved;
        }
        for (k, &v) in work.iter().enumerate().take(degree + 1) {
            values[[i, seg + k]] = v;
        }
    }

    Ok(DesignMatrix {
        values,
        spec: spec.clone(),
    })
}

/// Difference matrix of order `q` acting on `c` coefficients:
/// `(D theta)_k = delta^q theta_{k+q}`.
pub fn difference_matrix(c: usize, q: usize) -> Result<DifferenceMatrix> {
    if q < 1 {
        return Err(SopError::Config("difference order must be at least 1".into()));
    }
    if c <= q {
        return Err(SopError::Config(format!(
            "difference order {q} requires more than {q} coefficients, got {c}"
        )));
    }
    // signed binomial coefficients (-1)^(q-i) * C(q, i)
    let mut coeffs = vec![0i64; q + 1];
    coeffs[0] = 1;
    for row in 1..=q {
        for i in (1..=row).rev() {
            coeffs[i] += coeffs[i - 1];
        }
    }
    let mut values = Array2::<f64>::zeros((c - q, c));
    for k in 0..(c - q) {
        for (i, &b) in coeffs.iter().enumerate() {
            let sign = if (q - i) % 2 == 0 { 1.0 } else { -1.0 };
            values[[k, k + i]] = sign * b as f64;
        }
    }
    Ok(DifferenceMatrix { values, order: q })
}
