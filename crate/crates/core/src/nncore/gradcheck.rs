/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub worst_index: Option<usize>,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares `analytic` against fourth-order central differences of `f` at
/// `params`: `(-f(x+2e) + 8 f(x+e) - 8 f(x-e) + f(x-2e)) / 12e`.
///
/// The error of one coordinate is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn gradient_check<F>(mut f: F, params: &[f64], analytic: &[f64], epsilon: f64) -> GradientCheck
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length differs from parameter length");
    let mut probe = params.to_vec();
    let mut report = GradientCheck { max_relative_error: 0.0, worst_index: None, analytic: 0.0, numeric: 0.0 };
    for i in 0..params.len() {
        let mut at = |offset: f64| {
            probe[i] = params[i] + offset;
            f(&probe)
        };
        let (p2, p1, m1, m2) = (at(2.0 * epsilon), at(epsilon), at(-epsilon), at(-2.0 * epsilon));
        probe[i] = params[i];
        let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * epsilon);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if err > report.max_relative_error || report.worst_index.is_none() {
            report = GradientCheck { max_relative_error: err, worst_index: Some(i), analytic: a, numeric };
        }
    }
    report
}
