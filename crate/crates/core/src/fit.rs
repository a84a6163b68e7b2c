//! Small least-squares helpers.

/// Slope of the least-squares line through (x, y).
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    line(x, y).1
}

/// (intercept, slope) of the least-squares line.
pub fn line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

/// Power law y ~ C x^p through log-log least squares; returns (C, p).
pub fn power_law(x: &[f64], y: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.max(1e-300).ln()).collect();
    let (c, p) = line(&lx, &ly);
    (c.exp(), p)
}

/// Least-squares line with the standard error of the slope:
/// (intercept, slope, stderr).
pub fn line_se(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let (c, b) = line(x, y);
    let n = x.len() as f64;
    if n < 3.0 {
        return (c, b, f64::INFINITY);
    }
    let mx = x.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let rss: f64 = x.iter().zip(y).map(|(a, v)| (v - c - b * a).powi(2)).sum();
    (c, b, (rss / (n - 2.0) / sxx).sqrt())
}
