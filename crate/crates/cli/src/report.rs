//! Trend checks and plain-text summaries over sweep and cross-table results.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    NonIncreasing,
    NonDecreasing,
    /// Every value must be >= 0 (pointwise comparisons stored as differences).
    NonNegative,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendCheck {
    pub name: String,
    pub values: Vec<f64>,
    pub direction: Direction,
}

impl TrendCheck {
    pub fn passes(&self) -> bool {
        let tol = 1e-9;
        match self.direction {
            Direction::NonNegative => self.values.iter().all(|&v| v >= -tol),
            _ => self.values.windows(2).all(|w| match self.direction {
                Direction::NonIncreasing => w[1] <= w[0] + tol,
                Direction::NonDecreasing => w[1] >= w[0] - tol,
                Direction::NonNegative => unreachable!(),
            }),
        }
    }
}

/// Spearman rank correlation (average ranks on ties).
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(std::cmp::Ordering::Equal));
        let mut ranks = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                ranks[idx[k]] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx.sqrt() * vy.sqrt())
}

/// One-sided Mann-Whitney rank-sum test: the p-value (normal approximation,
/// tie-corrected) against the hypothesis that `a` stochastically exceeds `b`.
/// Small p means `a` really is greater.
pub fn rank_sum_p_greater(a: &[f64], b: &[f64]) -> f64 {
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    if n1 == 0.0 || n2 == 0.0 {
        return 1.0;
    }
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    let mean = n1 * n2 / 2.0;
    let sd = (n1 * n2 * (n1 + n2 + 1.0) / 12.0).sqrt();
    if sd == 0.0 {
        return if u > mean { 0.0 } else { 1.0 };
    }
    let z = (u - mean) / sd;
    // upper-tail p of the standard normal
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Complementary error function (Abramowitz-Stegun 7.1.26 rational fit).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Text summary: one pass/fail line per trend check.
pub fn emit_report(checks: &[TrendCheck]) -> String {
    let mut out = String::new();
    out.push_str(&format!("trend checks: {}\n", checks.len()));
    for c in checks {
        let values = c
            .values
            .iter()
            .map(|v| format!("{v:.4}"))
            .collect::<Vec<_>>()
            .join(" -> ");
        out.push_str(&format!(
            "[{}] {} ({:?}): {}\n",
            if c.passes() { "PASS" } else { "FAIL" },
            c.name,
            c.direction,
            values
        ));
    }
    out
}
