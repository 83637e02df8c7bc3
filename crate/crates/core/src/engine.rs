//! High-level model objects tying basis construction, penalty assembly, the
//! mixed-model transform, and fitting together.

use ndarray::{Array1, ArrayView1};

use crate::basis::{bspline_design, difference_matrix, BasisSpec, DesignMatrix, DifferenceMatrix};
use crate::error::{Result, SopError};
use crate::mixed::{reparameterize_1d, reparameterize_2d, MixedParts};
use crate::penalty::{smoothing_basis_1d, smoothing_basis_2d, AdaptiveSmoothSpec,
                     AdaptiveSmoothSpec2d, SmoothingBasis, SmoothingBasis2d};
use crate::solver::{fit_gaussian, fit_glm, Family, FitConfig, FitResult};

/// One entry of the estimated local smoothing field.
#[derive(Debug, Clone)]
pub struct LambdaPoint {
    /// Difference index, 1-based.
    pub index: usize,
    /// Covariate position of the difference.
    pub position: f64,
    pub lambda: f64,
}

/// One entry of a directional smoothing field on the coefficient grid.
#[derive(Debug, Clone)]
pub struct LambdaPoint2d {
    /// Penalty direction, 1 or 2.
    pub direction: u8,
    /// Position index along dimension 1 (difference index for direction 1).
    pub i: usize,
    /// Position index along dimension 2 (difference index for direction 2).
    pub j: usize,
    pub pos1: f64,
    pub pos2: f64,
    pub lambda: f64,
}

/// Curve model: basis, penalty, smoothing basis, and mixed-model parts.
#[derive(Debug, Clone)]
pub struct CurveModel {
    pub basis_spec: BasisSpec,
    pub adaptive: AdaptiveSmoothSpec,
    pub design: DesignMatrix,
    pub diff: DifferenceMatrix,
    pub smooth: SmoothingBasis,
    pub parts: MixedParts,
}

impl CurveModel {
    pub fn build(
        x: ArrayView1<f64>,
        basis_spec: BasisSpec,
        adaptive: AdaptiveSmoothSpec,
    ) -> Result<Self> {
        let design = bspline_design(x, &basis_spec)?;
        let c = basis_spec.basis_size();
        let diff = difference_matrix(c, basis_spec.diff_order)?;
        let smooth = smoothing_basis_1d(c, basis_spec.diff_order, &adaptive)?;
        let parts = reparameterize_1d(&design, &diff, &smooth)?;
        Ok(Self {
            basis_spec,
            adaptive,
            design,
            diff,
            smooth,
            parts,
        })
    }

    pub fn fit(
        &self,
        y: ArrayView1<f64>,
        weights: Option<ArrayView1<f64>>,
        config: &FitConfig,
    ) -> Result<FitResult> {
        match config.family {
            Family::Gaussian => fit_gaussian(y, weights, &self.parts, config),
            Family::Poisson => fit_glm(y, weights, &self.parts, config),
        }
    }

    /// Spline coefficients of a fit.
    pub fn coefficients(&self, fit: &FitResult) -> Array1<f64> {
        self.parts
            .coefficients(&fit.beta.view(), &fit.alpha.view())
    }

    /// Covariate position of difference `k` (1-based): the midpoint of the
    /// Greville abscissae of the first and last coefficient it involves.
    fn difference_position(&self, k: usize) -> f64 {
        let q = self.basis_spec.diff_order;
        0.5 * (self.design.greville(k - 1) + self.design.greville(k - 1 + q))
    }

    /// Estimated local smoothing field `lambda(k) = C phi_hat` with
    /// `phi_hat_l = sigma2 / tau2_l`, mapped to covariate positions.
    pub fn lambda_field(&self, fit: &FitResult) -> Vec<LambdaPoint> {
        let phi = Array1::from_shape_fn(fit.tau2.len(), |l| fit.sigma2 / fit.tau2[l]);
        let field = self.smooth.field(&phi.view());
        field
            .iter()
            .enumerate()
            .map(|(idx, &lambda)| LambdaPoint {
                index: idx + 1,
                position: self.difference_position(idx + 1),
                lambda,
            })
            .collect()
    }

    /// Evaluate the fitted curve (linear-predictor scale) at new points.
    pub fn predict(&self, xnew: ArrayView1<f64>, fit: &FitResult) -> Result<Array1<f64>> {
        let theta = self.coefficients(fit);
        let design = bspline_design(xnew, &self.basis_spec)?;
        Ok(design.values.dot(&theta))
    }
}

/// Surface model built from marginal bases with anisotropic adaptive
/// penalties.
#[derive(Debug, Clone)]
pub struct SurfaceModel {
    pub spec1: BasisSpec,
    pub spec2: BasisSpec,
    pub adaptive: AdaptiveSmoothSpec2d,
    pub design1: DesignMatrix,
    pub design2: DesignMatrix,
    pub diff1: DifferenceMatrix,
    pub diff2: DifferenceMatrix,
    pub smooth: SmoothingBasis2d,
    pub parts: MixedParts,
}

impl SurfaceModel {
    pub fn build(
        x1: ArrayView1<f64>,
        x2: ArrayView1<f64>,
        spec1: BasisSpec,
        spec2: BasisSpec,
        adaptive: AdaptiveSmoothSpec2d,
    ) -> Result<Self> {
        if x1.len() != x2.len() {
            return Err(SopError::Data(format!(
                "covariate vectors have lengths {} and {}",
                x1.len(),
                x2.len()
            )));
        }
        let design1 = bspline_design(x1, &spec1)?;
        let design2 = bspline_design(x2, &spec2)?;
        let c1 = spec1.basis_size();
        let c2 = spec2.basis_size();
        let diff1 = difference_matrix(c1, spec1.diff_order)?;
        let diff2 = difference_matrix(c2, spec2.diff_order)?;
        let smooth = smoothing_basis_2d(c1, c2, spec1.diff_order, spec2.diff_order, &adaptive)?;
        let parts = reparameterize_2d(&design1, &design2, &diff1, &diff2, &smooth)?;
        Ok(Self {
            spec1,
            spec2,
            adaptive,
            design1,
            design2,
            diff1,
            diff2,
            smooth,
            parts,
        })
    }

    pub fn fit(
        &self,
        y: ArrayView1<f64>,
        weights: Option<ArrayView1<f64>>,
        config: &FitConfig,
    ) -> Result<FitResult> {
        match config.family {
            Family::Gaussian => fit_gaussian(y, weights, &self.parts, config),
            Family::Poisson => fit_glm(y, weights, &self.parts, config),
        }
    }

    pub fn coefficients(&self, fit: &FitResult) -> Array1<f64> {
        self.parts
            .coefficients(&fit.beta.view(), &fit.alpha.view())
    }

    fn difference_position(design: &DesignMatrix, q: usize, k: usize) -> f64 {
        0.5 * (design.greville(k - 1) + design.greville(k - 1 + q))
    }

    /// The two estimated directional smoothing fields on the coefficient
    /// grid, mapped to covariate positions.
    pub fn lambda_fields(&self, fit: &FitResult) -> (Vec<LambdaPoint2d>, Vec<LambdaPoint2d>) {
        let p1 = self.smooth.direction1().ncols();
        let phi: Vec<f64> = fit.tau2.iter().map(|&t| fit.sigma2 / t).collect();
        let phi1 = Array1::from_iter(phi[..p1].iter().cloned());
        let phi2 = Array1::from_iter(phi[p1..].iter().cloned());
        let field1 = self.smooth.direction1().field(&phi1.view());
        let field2 = self.smooth.direction2().field(&phi2.view());

        let c1 = self.spec1.basis_size();
        let c2 = self.spec2.basis_size();
        let (q1, q2) = (self.spec1.diff_order, self.spec2.diff_order);
        let mut out1 = Vec::with_capacity(field1.len());
        for i2 in 0..c2 {
            for k1 in 0..(c1 - q1) {
                out1.push(LambdaPoint2d {
                    direction: 1,
                    i: k1 + 1,
                    j: i2 + 1,
                    pos1: Self::difference_position(&self.design1, q1, k1 + 1),
                    pos2: self.design2.greville(i2),
                    lambda: field1[k1 + (c1 - q1) * i2],
                });
            }
        }
        let mut out2 = Vec::with_capacity(field2.len());
        for k2 in 0..(c2 - q2) {
            for i1 in 0..c1 {
                out2.push(LambdaPoint2d {
                    direction: 2,
                    i: i1 + 1,
                    j: k2 + 1,
                    pos1: self.design1.greville(i1),
                    pos2: Self::difference_position(&self.design2, q2, k2 + 1),
                    lambda: field2[i1 + c1 * k2],
                });
            }
        }
        (out1, out2)
    }

    /// Evaluate the fitted surface on the product grid `g1 x g2`; returns
    /// `(x1, x2, eta)` rows with the `g1` index varying fastest.
    pub fn predict_grid(
        &self,
        g1: ArrayView1<f64>,
        g2: ArrayView1<f64>,
        fit: &FitResult,
    ) -> Result<Vec<(f64, f64, f64)>> {
        let theta = self.coefficients(fit);
        let b1 = bspline_design(g1, &self.spec1)?;
        let b2 = bspline_design(g2, &self.spec2)?;
        let c1 = self.spec1.basis_size();
        let mut out = Vec::with_capacity(g1.len() * g2.len());
        for (j, &v2) in g2.iter().enumerate() {
            for (i, &v1) in g1.iter().enumerate() {
                let mut eta = 0.0;
                for j2 in 0..self.spec2.basis_size() {
                    let w2 = b2.values[[j, j2]];
                    if w2 == 0.0 {
                        continue;
                    }
                    for j1 in 0..c1 {
                        let w1 = b1.values[[i, j1]];
                        if w1 != 0.0 {
                            eta += w1 * w2 * theta[j1 + c1 * j2];
                        }
                    }
                }
                out.push((v1, v2, eta));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn curve_predict_reproduces_fitted_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = Array1::from_shape_fn(70, |_| rng.random::<f64>());
        let y = x.mapv(|v| (8.0 * v).sin())
            + Array1::from_shape_fn(70, |_| 0.1 * (rng.random::<f64>() - 0.5));
        let model = CurveModel::build(
            x.view(),
            BasisSpec::new(0.0, 1.0, 12, 3, 2),
            AdaptiveSmoothSpec::new(5),
        )
        .unwrap();
        let fit = model.fit(y.view(), None, &FitConfig::default()).unwrap();
        let pred = model.predict(x.view(), &fit).unwrap();
        for (p, f) in pred.iter().zip(fit.fitted.iter()) {
            assert_abs_diff_eq!(p, f, epsilon = 1e-9);
        }
        let field = model.lambda_field(&fit);
        assert_eq!(field.len(), 13); // c - q = 15 - 2
        assert!(field.windows(2).all(|w| w[0].position < w[1].position));
        assert!(field.iter().all(|p| p.lambda > 0.0));
    }

    #[test]
    fn surface_predict_grid_matches_fit_at_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let n = 150;
        let x1 = Array1::from_shape_fn(n, |_| rng.random::<f64>());
        let x2 = Array1::from_shape_fn(n, |_| rng.random::<f64>());
        let y = Array1::from_shape_fn(n, |i| {
            (3.0 * x1[i]).sin() * (2.0 * x2[i]).cos()
                + 0.05 * (rng.random::<f64>() - 0.5)
        });
        let model = SurfaceModel::build(
            x1.view(),
            x2.view(),
            BasisSpec::new(0.0, 1.0, 5, 2, 1),
            BasisSpec::new(0.0, 1.0, 5, 2, 1),
            AdaptiveSmoothSpec2d::new(2, 2, 2, 2),
        )
        .unwrap();
        let fit = model.fit(y.view(), None, &FitConfig::default()).unwrap();
        // evaluating the coefficient expansion at a data point reproduces eta
        let theta = model.coefficients(&fit);
        let c1 = model.spec1.basis_size();
        for i in 0..5 {
            let mut eta = 0.0;
            for j2 in 0..model.spec2.basis_size() {
                for j1 in 0..c1 {
                    eta += model.design1.values[[i, j1]]
                        * model.design2.values[[i, j2]]
                        * theta[j1 + c1 * j2];
                }
            }
            assert_abs_diff_eq!(eta, fit.linear_predictor[i], epsilon = 1e-9);
        }
        let (f1, f2) = model.lambda_fields(&fit);
        assert_eq!(f1.len(), (7 - 1) * 7);
        assert_eq!(f2.len(), 7 * (7 - 1));
        let grid = model
            .predict_grid(
                Array1::linspace(0.0, 1.0, 4).view(),
                Array1::linspace(0.0, 1.0, 3).view(),
                &fit,
            )
            .unwrap();
        assert_eq!(grid.len(), 12);
    }
}
