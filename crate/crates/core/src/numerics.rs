//! Small numerical helpers shared by every module.

/// Neumaier-compensated running sum. Summation order is the caller's
/// iteration order, so results are reproducible bit for bit.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.carry += (self.sum - t) + value;
        } else {
            self.carry += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Least-squares slope of `log y` against `log x`. Pairs with a
/// non-positive coordinate are skipped; `None` if fewer than two remain.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// max/min of a list of positive values (the "spread"). Infinite when the
/// minimum is zero and the maximum is not.
pub fn spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        1.0
    } else if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Standard C^∞ bump exp(-1/(1-r²)) for r < 1, zero otherwise.
#[inline]
pub fn unit_bump(r_squared: f64) -> f64 {
    if r_squared < 1.0 {
        (-1.0 / (1.0 - r_squared)).exp()
    } else {
        0.0
    }
}

/// The radial profile exp(1/(s²-1)) on s < 1 attains its steepest slope at
/// s = 3^{-1/4}; this is that slope (per unit radius).
pub fn unit_bump_max_slope() -> f64 {
    let u = 1.0 - 1.0 / 3f64.sqrt();
    let s = (1.0 - u).sqrt();
    2.0 * s / (u * u) * (-1.0 / u).exp()
}

/// ψ(r) = exp(-1/r) for r > 0, zero otherwise.
#[inline]
fn psi(r: f64) -> f64 {
    if r > 0.0 {
        (-1.0 / r).exp()
    } else {
        0.0
    }
}

/// Smooth step with u = 0 on [0, 1/2], u = 1 on [1, ∞), C^∞ in between.
#[inline]
pub fn smooth_step(s: f64) -> f64 {
    let a = psi(2.0 * s - 1.0);
    let b = psi(2.0 - 2.0 * s);
    if a == 0.0 {
        0.0
    } else if b == 0.0 {
        1.0
    } else {
        a / (a + b)
    }
}

pub fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Median of a nonempty list (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Formats a float with 17 significant digits, dot decimal.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut values = vec![1.0e16, 1.0, -1.0e16];
        values.extend(std::iter::repeat_n(1.0, 10));
        assert_eq!(compensated_sum(values), 11.0);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = (1..6)
            .map(|k| (k as f64, 3.0 * (k as f64).powf(-2.0)))
            .collect();
        assert!((loglog_slope(&pts).unwrap() + 2.0).abs() < 1e-12);
        assert!(loglog_slope(&pts[..1]).is_none());
    }

    #[test]
    fn smooth_step_sandwich() {
        for k in 0..=4000 {
            let s = k as f64 / 1000.0;
            let u = smooth_step(s);
            let lower = if s >= 1.0 { 1.0 } else { 0.0 };
            let upper = if s >= 0.5 { 1.0 } else { 0.0 };
            assert!(lower <= u && u <= upper, "s = {s}, u = {u}");
        }
        assert_eq!(smooth_step(0.75), 0.5);
    }

    #[test]
    fn bump_slope_matches_dense_search() {
        let profile = |s: f64| {
            if s < 1.0 {
                (1.0 / (s * s - 1.0)).exp()
            } else {
                0.0
            }
        };
        let h = 1e-6;
        let dense = (1..999_999)
            .map(|k| {
                let s = k as f64 * 1e-6;
                ((profile(s + h) - profile(s - h)) / (2.0 * h)).abs()
            })
            .fold(0.0, f64::max);
        assert!((dense - unit_bump_max_slope()).abs() < 1e-6 * dense);
    }

    #[test]
    fn spread_and_median() {
        assert_eq!(spread(&[1.0, 2.0, 4.0]), 4.0);
        assert_eq!(spread(&[0.0, 0.0]), 1.0);
        assert!(spread(&[0.0, 1.0]).is_infinite());
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
