//! Bimatrix Nash solving: equal-size support enumeration with a certified
//! deviation gap, and a fictitious-play fallback for larger games.

use serde::{Deserialize, Serialize};

/// A probability vector over a strategy pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedProfile(pub Vec<f64>);

impl MixedProfile {
    pub fn pure(n: usize, i: usize) -> MixedProfile {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        MixedProfile(v)
    }

    pub fn uniform(n: usize) -> MixedProfile {
        MixedProfile(vec![1.0 / n as f64; n])
    }

    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 1e-12)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_distribution(&self) -> bool {
        self.0.iter().all(|&p| p >= -1e-12)
            && (self.0.iter().sum::<f64>() - 1.0).abs() <= 1e-12
    }

    fn normalize(&mut self) {
        for p in self.0.iter_mut() {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let s: f64 = self.0.iter().sum();
        if s > 0.0 {
            for p in self.0.iter_mut() {
                *p /= s;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveMethod {
    SupportEnumeration,
    FictitiousPlay,
}

#[derive(Debug, Clone)]
pub struct NashSolution {
    pub row: MixedProfile,
    pub col: MixedProfile,
    /// Certified maximum unilateral pure-deviation gain on the input matrix.
    pub gap: f64,
    pub method: SolveMethod,
}

/// Expected payoffs (row player via `a`, column player via `b`).
pub fn profile_values(a: &[Vec<f64>], b: &[Vec<f64>], p: &MixedProfile, q: &MixedProfile) -> (f64, f64) {
    let mut va = 0.0;
    let mut vb = 0.0;
    for (i, &pi) in p.0.iter().enumerate() {
        for (j, &qj) in q.0.iter().enumerate() {
            va += pi * qj * a[i][j];
            vb += pi * qj * b[i][j];
        }
    }
    (va, vb)
}

/// Maximum unilateral pure-deviation gain against (p, q); non-negative.
pub fn deviation_gap(a: &[Vec<f64>], b: &[Vec<f64>], p: &MixedProfile, q: &MixedProfile) -> f64 {
    let (va, vb) = profile_values(a, b, p, q);
    let m = a.len();
    let n = a[0].len();
    let mut gap: f64 = 0.0;
    for i in 0..m {
        let vi: f64 = (0..n).map(|j| q.0[j] * a[i][j]).sum();
        gap = gap.max(vi - va);
    }
    for j in 0..n {
        let vj: f64 = (0..m).map(|i| p.0[i] * b[i][j]).sum();
        gap = gap.max(vj - vb);
    }
    gap.max(0.0)
}

/// Gaussian elimination with partial pivoting; None when singular.
fn solve_linear(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = m.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

/// Iterate k-subsets of 0..n in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // advance
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Solve the equalization system for one support pair. Returns (p, q) if both
/// mixtures are valid and no outside strategy beats the support value.
fn try_support(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    rows: &[usize],
    cols: &[usize],
) -> Option<(MixedProfile, MixedProfile)> {
    let k = rows.len();
    let m = a.len();
    let n = a[0].len();
    let tol = 1e-9;

    // column mixture q equalizes the row player's supported payoffs
    let mut sys = vec![vec![0.0; k + 1]; k + 1];
    let mut rhs = vec![0.0; k + 1];
    for (r, &i) in rows.iter().enumerate() {
        for (c, &j) in cols.iter().enumerate() {
            sys[r][c] = a[i][j];
        }
        sys[r][k] = -1.0; // -v
    }
    for c in 0..k {
        sys[k][c] = 1.0;
    }
    rhs[k] = 1.0;
    let sol = solve_linear(sys, rhs)?;
    let (q_support, v_row) = (&sol[..k], sol[k]);
    if q_support.iter().any(|&x| x < -tol) {
        return None;
    }
    let mut q = MixedProfile(vec![0.0; n]);
    for (c, &j) in cols.iter().enumerate() {
        q.0[j] = q_support[c].max(0.0);
    }
    q.normalize();
    for i in 0..m {
        if rows.contains(&i) {
            continue;
        }
        let vi: f64 = (0..n).map(|j| q.0[j] * a[i][j]).sum();
        if vi > v_row + tol {
            return None;
        }
    }

    // row mixture p equalizes the column player's supported payoffs
    let mut sys = vec![vec![0.0; k + 1]; k + 1];
    let mut rhs = vec![0.0; k + 1];
    for (c, &j) in cols.iter().enumerate() {
        for (r, &i) in rows.iter().enumerate() {
            sys[c][r] = b[i][j];
        }
        sys[c][k] = -1.0;
    }
    for r in 0..k {
        sys[k][r] = 1.0;
    }
    rhs[k] = 1.0;
    let sol = solve_linear(sys, rhs)?;
    let (p_support, v_col) = (&sol[..k], sol[k]);
    if p_support.iter().any(|&x| x < -tol) {
        return None;
    }
    let mut p = MixedProfile(vec![0.0; m]);
    for (r, &i) in rows.iter().enumerate() {
        p.0[i] = p_support[r].max(0.0);
    }
    p.normalize();
    for j in 0..n {
        if cols.contains(&j) {
            continue;
        }
        let vj: f64 = (0..m).map(|i| p.0[i] * b[i][j]).sum();
        if vj > v_col + tol {
            return None;
        }
    }
    Some((p, q))
}

fn support_enumeration(a: &[Vec<f64>], b: &[Vec<f64>]) -> Option<NashSolution> {
    let m = a.len();
    let n = a[0].len();
    for k in 1..=m.min(n) {
        for rows in combinations(m, k) {
            for cols in combinations(n, k) {
                if let Some((p, q)) = try_support(a, b, &rows, &cols) {
                    let gap = deviation_gap(a, b, &p, &q);
                    if gap <= 1e-8 {
                        return Some(NashSolution {
                            row: p,
                            col: q,
                            gap,
                            method: SolveMethod::SupportEnumeration,
                        });
                    }
                }
            }
        }
    }
    None
}

fn fictitious_play(a: &[Vec<f64>], b: &[Vec<f64>], iters: usize) -> NashSolution {
    let m = a.len();
    let n = a[0].len();
    let mut row_counts = vec![1.0; m];
    let mut col_counts = vec![1.0; n];
    for _ in 0..iters {
        let ct: f64 = col_counts.iter().sum();
        let best_row = (0..m)
            .map(|i| (0..n).map(|j| col_counts[j] / ct * a[i][j]).sum::<f64>())
            .enumerate()
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let rt: f64 = row_counts.iter().sum();
        let best_col = (0..n)
            .map(|j| (0..m).map(|i| row_counts[i] / rt * b[i][j]).sum::<f64>())
            .enumerate()
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(j, _)| j)
            .unwrap_or(0);
        row_counts[best_row] += 1.0;
        col_counts[best_col] += 1.0;
    }
    let rt: f64 = row_counts.iter().sum();
    let ct: f64 = col_counts.iter().sum();
    let p = MixedProfile(row_counts.iter().map(|c| c / rt).collect());
    let q = MixedProfile(col_counts.iter().map(|c| c / ct).collect());
    let gap = deviation_gap(a, b, &p, &q);
    NashSolution {
        row: p,
        col: q,
        gap,
        method: SolveMethod::FictitiousPlay,
    }
}

/// Pool size above which support enumeration gives way to fictitious play.
pub const SUPPORT_ENUMERATION_LIMIT: usize = 12;

/// Solve a bimatrix game. Both payoff matrices are row-player-indexed:
/// `a[i][j]` pays the row player, `b[i][j]` the column player.
pub fn solve_bimatrix(a: &[Vec<f64>], b: &[Vec<f64>]) -> NashSolution {
    assert!(!a.is_empty() && !a[0].is_empty(), "matrix must be non-empty");
    assert_eq!(a.len(), b.len());
    assert_eq!(a[0].len(), b[0].len());
    let m = a.len();
    let n = a[0].len();
    if m.max(n) <= SUPPORT_ENUMERATION_LIMIT {
        if let Some(sol) = support_enumeration(a, b) {
            return sol;
        }
    }
    fictitious_play(a, b, 200_000)
}
