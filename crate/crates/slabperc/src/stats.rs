//! Small statistics helpers: Wilson intervals, moments, least squares.

/// Wilson 95% score interval for a binomial proportion. Returns
/// (center estimate, half-width). For n = 0 returns (0.5, 0.5).
pub fn wilson_ci95(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.5, 0.5);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = (z / denom) * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt();
    (center, half)
}

/// Plain binomial standard error of the sample proportion.
pub fn binom_se(successes: u64, trials: u64) -> f64 {
    if trials == 0 {
        return 0.5;
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    (p * (1.0 - p) / n).sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n-1 denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Clone, Copy, Debug)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// Residual sum of squares.
    pub rss: f64,
    pub n: usize,
}

impl LineFit {
    /// 95% confidence interval half-width of the slope (normal
    /// approximation; adequate for the handful of points fitted here).
    pub fn slope_ci95(&self) -> f64 {
        1.959_963_984_540_054 * self.slope_se
    }
}

/// Ordinary least squares y = slope*x + intercept. Needs >= 3 points for
/// a finite slope standard error.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let slope_se = if n > 2 {
        (rss / (n as f64 - 2.0) / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    Some(LineFit { slope, intercept, slope_se, rss, n })
}
