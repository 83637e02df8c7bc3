//! Adaptive penalized-spline regression in one and two dimensions.
//!
//! Smoothness is imposed by difference penalties whose weights vary with
//! position; the weight fields are themselves low-dimensional B-spline
//! expansions. Fitting works in the equivalent mixed-model form, where each
//! smoothing parameter becomes a variance component estimated by a
//! Harville-Schall-type fixed point that handles many penalties acting on
//! the same coefficients.

pub mod basis;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod mixed;
pub mod penalty;
pub mod reml;
pub mod report;
pub mod sim;
pub mod solver;

pub use basis::{bspline_design, difference_matrix, make_knots, BasisSpec, DesignMatrix,
                DifferenceMatrix};
pub use engine::{CurveModel, LambdaPoint, LambdaPoint2d, SurfaceModel};
pub use error::{Result, SopError};
pub use mixed::{precision_matrix, reparameterize_1d, reparameterize_2d, ComponentForm,
                MixedParts, PenaltyComponent, PrecisionModel, RandomLayout};
pub use penalty::{adaptive_penalty_1d, adaptive_penalty_2d, smoothing_basis_1d,
                  smoothing_basis_2d, standard_penalty, AdaptiveSmoothSpec,
                  AdaptiveSmoothSpec2d, PenaltyMatrix, SmoothingBasis, SmoothingBasis2d};
pub use reml::{optimize_reml, reml_value, RemlEvaluation};
pub use report::{ComponentReport, RunReport};
pub use solver::{effective_dimensions, fit_gaussian, fit_glm, solve_penalized_system, Family,
                 FitConfig, FitResult, IterationRecord, PenalizedSolve};
