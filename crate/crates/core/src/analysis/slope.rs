//! Log-log slope fits.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; NaN with two points.
    pub stderr: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn ols(points: &[(f64, f64)]) -> LineFit {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let stderr = if points.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    LineFit {
        slope,
        intercept,
        stderr,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub fit: LineFit,
    pub used: usize,
    /// Indices of inputs left out because the run diverged or the value was
    /// not positive and finite.
    pub excluded: Vec<usize>,
}

/// Fits `log y = a + b log T` over `(T, min |∇f|^2)` pairs; `None` marks a
/// diverged run.
pub fn fit_convergence_slope(points: &[(f64, Option<f64>)]) -> Result<SlopeFit> {
    let mut used = Vec::new();
    let mut excluded = Vec::new();
    for (i, &(t, y)) in points.iter().enumerate() {
        match y {
            Some(y) if y.is_finite() && y > 0.0 && t.is_finite() && t > 0.0 => {
                used.push((t.ln(), y.ln()))
            }
            _ => excluded.push(i),
        }
    }
    if used.len() < 3 {
        return Err(Error::invalid(format!(
            "slope fit needs at least 3 usable points, got {}",
            used.len()
        )));
    }
    let distinct = used.iter().any(|p| p.0 != used[0].0);
    if !distinct {
        return Err(Error::invalid(
            "slope fit needs at least two distinct horizons",
        ));
    }
    Ok(SlopeFit {
        fit: ols(&used),
        used: used.len(),
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let ts = [256.0, 1024.0, 4096.0, 16384.0];
        let inv: Vec<_> = ts.iter().map(|&t| (t, Some(1.0 / t))).collect();
        let f = fit_convergence_slope(&inv).unwrap();
        assert!((f.fit.slope + 1.0).abs() < 1e-12);
        assert!(f.fit.stderr < 1e-12);
        let half: Vec<_> = ts.iter().map(|&t| (t, Some(3.0 / t.sqrt()))).collect();
        let f = fit_convergence_slope(&half).unwrap();
        assert!((f.fit.slope + 0.5).abs() < 1e-12);
        assert!((f.fit.intercept - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn diverged_runs_are_excluded() {
        let pts = [
            (1.0, Some(1.0)),
            (2.0, None),
            (4.0, Some(0.25)),
            (8.0, Some(0.125)),
            (16.0, Some(f64::NAN)),
        ];
        let f = fit_convergence_slope(&pts).unwrap();
        assert_eq!(f.excluded, vec![1, 4]);
        assert_eq!(f.used, 3);
        assert!(fit_convergence_slope(&pts[..3]).is_err());
    }
}
