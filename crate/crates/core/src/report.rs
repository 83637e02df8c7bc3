//! Structured summary of a completed fit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::mixed::MixedParts;
use crate::solver::{Family, FitResult};

/// One variance component in the report: its mixed-model variance, the
/// implied smoothing parameter `phi = sigma2 / tau2`, and its effective
/// dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentReport {
    pub label: String,
    pub tau2: f64,
    pub phi: f64,
    pub ed: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub family: String,
    pub n: usize,
    /// Echo of the configuration the fit ran with.
    pub config: BTreeMap<String, String>,
    pub components: Vec<ComponentReport>,
    pub sigma2: f64,
    pub fixed_rank: usize,
    /// Sum of the component effective dimensions.
    pub ed_total: f64,
    /// Directly computed trace of the random-effects hat matrix; must
    /// reconcile with `ed_total` within reporting precision.
    pub random_hat_trace: f64,
    pub deviance: f64,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_seconds: f64,
    /// Set when the adaptive configuration collapses to a single constant
    /// smoothing component (a standard P-spline fit).
    pub nonadaptive_reduction: bool,
}

pub fn build_report(
    family: Family,
    parts: &MixedParts,
    fit: &FitResult,
    y: &[f64],
    weights: Option<&[f64]>,
    config: BTreeMap<String, String>,
    wall_seconds: f64,
    nonadaptive_reduction: bool,
) -> RunReport {
    let components = parts
        .components
        .iter()
        .zip(fit.tau2.iter())
        .zip(fit.ed.iter())
        .map(|((comp, &tau2), &ed)| ComponentReport {
            label: comp.label.clone(),
            tau2,
            phi: fit.sigma2 / tau2,
            ed,
        })
        .collect();
    let rss: f64 = y
        .iter()
        .enumerate()
        .map(|(i, &yi)| {
            let w = weights.map_or(1.0, |w| w[i]);
            let r = yi - fit.fitted[i];
            w * r * r
        })
        .sum();
    RunReport {
        family: match family {
            Family::Gaussian => "gaussian".into(),
            Family::Poisson => "poisson".into(),
        },
        n: y.len(),
        config,
        components,
        sigma2: fit.sigma2,
        fixed_rank: parts.n_fixed(),
        ed_total: fit.ed_total(),
        random_hat_trace: fit.hat_trace,
        deviance: fit.trace.last().map_or(f64::NAN, |r| r.deviance),
        rss,
        iterations: fit.iterations,
        converged: fit.converged,
        wall_seconds,
        nonadaptive_reduction,
    }
}
