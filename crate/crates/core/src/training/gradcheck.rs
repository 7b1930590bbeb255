/// Default step for central differences.
pub const DEFAULT_STEP: f64 = 1e-4;

/// Magnitude below which gradient entries are compared absolutely.
pub const ABS_FLOOR: f64 = 1e-6;

/// Per-coordinate comparison of an analytic gradient against central
/// differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Coordinate with the largest error.
    pub worst: usize,
    pub numeric: Vec<f64>,
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central-difference check of `analytic` against `f` at `params`.
pub fn finite_diff_check_with<F: Fn(&[f64]) -> f64>(
    f: F,
    params: &[f64],
    analytic: &[f64],
    h: f64,
    floor: f64,
) -> GradCheck {
    assert_eq!(
        params.len(),
        analytic.len(),
        "one analytic entry per parameter"
    );
    let mut x = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let (mut max_rel_error, mut worst) = (0.0_f64, 0);
    for i in 0..params.len() {
        x[i] = params[i] + h;
        let up = f(&x);
        x[i] = params[i] - h;
        let down = f(&x);
        x[i] = params[i];
        let n = (up - down) / (2.0 * h);
        let e = relative_error(analytic[i], n, floor);
        if !max_rel_error.is_nan() && (e.is_nan() || e > max_rel_error) {
            max_rel_error = e;
            worst = i;
        }
        numeric.push(n);
    }
    GradCheck {
        max_rel_error,
        worst,
        numeric,
    }
}

/// Largest relative gradient error, with the default floor.
pub fn finite_diff_check<F: Fn(&[f64]) -> f64>(
    f: F,
    params: &[f64],
    analytic: &[f64],
    h: f64,
) -> f64 {
    finite_diff_check_with(f, params, analytic, h, ABS_FLOOR).max_rel_error
}
