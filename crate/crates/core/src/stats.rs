use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval at 95% for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Least-squares slope and its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension("x and y lengths differ".into()));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::TooFewPoints(n));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Precondition("x values must not all coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    Ok(SlopeFit {
        slope,
        stderr: (ssr / (nf - 2.0) / sxx).sqrt(),
    })
}
