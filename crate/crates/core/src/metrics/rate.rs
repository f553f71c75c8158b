use crate::error::{Error, Result};

const MIN_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLinearFit {
    /// Slope of `ln(value)` per unit of `t`.
    pub slope: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `ln(series[t])` against the index `t`, over the
/// trailing `tail_fraction` of the series.
pub fn fit_log_linear_rate(series: &[f64], tail_fraction: f64) -> Result<LogLinearFit> {
    let ts: Vec<f64> = (0..series.len()).map(|t| t as f64).collect();
    fit_log_linear_rate_at(&ts, series, tail_fraction)
}

/// Same as [`fit_log_linear_rate`] with explicit abscissae, for series
/// recorded every few iterations.
pub fn fit_log_linear_rate_at(ts: &[f64], values: &[f64], tail_fraction: f64) -> Result<LogLinearFit> {
    if ts.len() != values.len() {
        return Err(Error::Dimension(format!(
            "{} abscissae for {} values",
            ts.len(),
            values.len()
        )));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::validation("tail_fraction", "must lie in (0, 1]"));
    }
    let len = values.len();
    let window = ((len as f64 * tail_fraction).ceil() as usize).min(len);
    let start = len - window;
    if window < MIN_POINTS {
        return Err(Error::WindowTooSmall {
            points: window,
            needed: MIN_POINTS,
        });
    }
    if let Some(bad) = values[start..].iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::validation(
            "series",
            format!("log-linear fit needs positive finite values, found {bad}"),
        ));
    }

    let xs = &ts[start..];
    let ys: Vec<f64> = values[start..].iter().map(|v| v.ln()).collect();
    let n = window as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let dx = x - x_mean;
        let dy = y - y_mean;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::validation("t", "fit window has a single abscissa"));
    }
    let slope = sxy / sxx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - y_mean - slope * (x - x_mean)).powi(2))
        .sum();
    // A flat series is fit exactly by a zero slope.
    let r_squared = if syy <= f64::EPSILON * n * y_mean.abs().max(1.0) {
        1.0
    } else {
        1.0 - sse / syy
    };
    Ok(LogLinearFit { slope, r_squared })
}
