use rand::seq::index::sample;
use thiserror::Error;

use crate::rng;

/// Denominator floor of the relative error, so parameters whose true
/// gradient is zero compare on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GradCheckError {
    #[error("loss is not finite ({0})")]
    NonFinite(f64),
    #[error("step {0} is outside [1e-6, 1e-4]")]
    Step(f64),
    #[error("{params} parameters but {grads} gradient entries")]
    Length { params: usize, grads: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Index of the worst parameter.
    pub worst: Option<usize>,
    pub checked: usize,
}

/// Compares `analytic` against central differences of `loss` at `params`.
/// At most `max_checks` coordinates are tested; above that a seeded
/// random subset is used. The relative error of a coordinate is
/// `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn grad_check(
    loss: impl Fn(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    eps: f64,
    max_checks: usize,
    seed: u64,
) -> Result<GradCheckReport, GradCheckError> {
    if !(1e-6..=1e-4).contains(&eps) {
        return Err(GradCheckError::Step(eps));
    }
    if params.len() != analytic.len() {
        return Err(GradCheckError::Length { params: params.len(), grads: analytic.len() });
    }
    let base = loss(params);
    if !base.is_finite() {
        return Err(GradCheckError::NonFinite(base));
    }
    let indices: Vec<usize> = if params.len() <= max_checks {
        (0..params.len()).collect()
    } else {
        let mut v = sample(&mut rng::stream(seed, &[]), params.len(), max_checks).into_vec();
        v.sort_unstable();
        v
    };
    let mut p = params.to_vec();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, checked: indices.len() };
    for &i in &indices {
        let orig = p[i];
        p[i] = orig + eps;
        let plus = loss(&p);
        p[i] = orig - eps;
        let minus = loss(&p);
        p[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(GradCheckError::NonFinite(if plus.is_finite() { minus } else { plus }));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some(i);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_and_constant() {
        let f = |p: &[f64]| p[0] * p[0] + 3.0 * p[1] * p[0] - p[2].sin();
        let x = [0.3f64, -1.1, 0.7];
        let g = [2.0 * x[0] + 3.0 * x[1], 3.0 * x[0], -x[2].cos()];
        assert!(grad_check(f, &x, &g, 1e-5, 100, 0).unwrap().max_rel_error < 1e-8);
        let bad = [g[0], g[1] + 0.1, g[2]];
        let r = grad_check(f, &x, &bad, 1e-5, 100, 0).unwrap();
        assert_eq!(r.worst, Some(1));
        let c = grad_check(|_| 4.0, &x, &[0.0; 3], 1e-5, 100, 0).unwrap();
        assert_eq!(c.max_rel_error, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(grad_check(|_| 1.0, &[1.0], &[0.0], 1e-2, 1, 0), Err(GradCheckError::Step(_))));
        assert!(matches!(grad_check(|_| f64::NAN, &[1.0], &[0.0], 1e-5, 1, 0), Err(GradCheckError::NonFinite(_))));
        assert!(matches!(grad_check(|_| 1.0, &[1.0], &[], 1e-5, 1, 0), Err(GradCheckError::Length { .. })));
    }

    #[test]
    fn subsamples_large_vectors() {
        let x = vec![0.5; 1000];
        let r = grad_check(|p| p.iter().map(|v| v * v).sum(), &x, &vec![1.0; 1000], 1e-5, 37, 1).unwrap();
        assert_eq!(r.checked, 37);
        assert!(r.max_rel_error < 1e-8);
    }
}
