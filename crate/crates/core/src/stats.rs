//! Small numeric helpers: compensated sums, sample moments, least squares.

use serde::{Deserialize, Serialize};

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::Sum<f64> for CompensatedSum {
    fn sum<I: Iterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().sum::<CompensatedSum>().value()
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

impl MeanEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let count = samples.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
                count,
            };
        }
        let mean = compensated_sum(samples.iter().copied()) / count as f64;
        let var = if count > 1 {
            compensated_sum(samples.iter().map(|x| (x - mean) * (x - mean))) / (count - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / count as f64).sqrt(),
            count,
        }
    }
}

/// Combined standard error of a difference of independent estimates.
pub fn combined_se(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolated quantile of an unsorted slice.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] * (1.0 - frac) + v[hi] * frac
}

/// Ordinary least squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Weights `w` such that `sum_i w_i y_i` is the least-squares coefficient of
/// `t` in the model `y(t) = a t + b ln t + c`, fitted at the given `t`.
pub fn log_corrected_slope_weights(ts: &[f64]) -> Vec<f64> {
    assert!(ts.len() >= 3, "log-corrected fit needs at least 3 points");
    let rows: Vec<[f64; 3]> = ts.iter().map(|&t| [t, t.ln(), 1.0]).collect();
    let mut xtx = [[0.0f64; 3]; 3];
    for r in &rows {
        for i in 0..3 {
            for j in 0..3 {
                xtx[i][j] += r[i] * r[j];
            }
        }
    }
    let inv = invert3(&xtx);
    rows.iter().map(|r| (0..3).map(|j| inv[0][j] * r[j]).sum()).collect()
}

pub fn log_corrected_slope(ts: &[f64], ys: &[f64]) -> f64 {
    log_corrected_slope_weights(ts).iter().zip(ys).map(|(w, y)| w * y).sum()
}

#[allow(clippy::needless_range_loop)]
fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = match j {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let (c0, c1) = match i {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let minor = m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            inv[i][j] = sign * minor / det;
        }
    }
    inv
}
