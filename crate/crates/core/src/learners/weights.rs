/// Exponential weights: `p_a ∝ exp(scale * score_a)`, computed stably.
pub(crate) fn softmax_into(scores: &[f64], scale: f64, out: &mut [f64]) {
    let max = scores
        .iter()
        .map(|s| s * scale)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, s) in out.iter_mut().zip(scores) {
        *o = (s * scale - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Anytime learning rate `sqrt(ln n / (k t))`.
pub(crate) fn anytime_rate(n: usize, t: u64, k: f64) -> f64 {
    let n = n.max(2) as f64;
    (n.ln() / (k * t as f64)).sqrt()
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 500;

/// Stationary distribution `p = p Q` of the row-stochastic matrix `q`.
///
/// Power iteration from `warm` (typically last round's answer) until the
/// L1 change drops below 1e-10; chains that mix too slowly for that fall
/// back to a direct linear solve.
pub fn stationary_distribution(q: &[Vec<f64>], warm: &[f64]) -> Vec<f64> {
    let n = q.len();
    if n == 1 {
        return vec![1.0];
    }
    let mut p: Vec<f64> = if warm.len() == n && warm.iter().all(|v| v.is_finite() && *v >= 0.0) {
        warm.to_vec()
    } else {
        vec![1.0 / n as f64; n]
    };
    let mut next = vec![0.0; n];
    for _ in 0..POWER_MAX_ITERS {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in q.iter().enumerate() {
            let pi = p[i];
            for (nj, qij) in next.iter_mut().zip(row) {
                *nj += pi * qij;
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let change: f64 = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut p, &mut next);
        if change < POWER_TOL {
            return p;
        }
    }
    direct_stationary(q).unwrap_or(p)
}

/// Solves `p (Q - I) = 0`, `sum p = 1` by Gaussian elimination with
/// partial pivoting.
fn direct_stationary(q: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = q.len();
    // Rows of the system are the columns of (Q - I)^T; the last equation is
    // replaced by normalization.
    let mut a = vec![vec![0.0; n + 1]; n];
    for j in 0..n {
        for i in 0..n {
            a[j][i] = q[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for v in a[n - 1].iter_mut() {
        *v = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    let mut p: Vec<f64> = (0..n).map(|i| (a[i][n] / a[i][i]).max(0.0)).collect();
    let total: f64 = p.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    p.iter_mut().for_each(|v| *v /= total);
    Some(p)
}
