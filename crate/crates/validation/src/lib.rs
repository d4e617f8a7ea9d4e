//! Reference computations written without the solver's code paths, used to
//! cross-check it. Everything works on plain nested `Vec<f64>` data.

/// Interference plus noise at receiver `user`, divided by its direct gain,
/// summed term by term. `gain[j][i][k]`, `noise[i][k]`, `p[j][k]`.
pub fn normalized_interference(
    gain: &[Vec<Vec<f64>>],
    noise: &[Vec<f64>],
    p: &[Vec<f64>],
    user: usize,
) -> Vec<f64> {
    let k_len = noise[user].len();
    let mut out = Vec::with_capacity(k_len);
    for k in 0..k_len {
        let mut total = noise[user][k];
        for (j, row) in p.iter().enumerate() {
            if j != user {
                total += row[k] * gain[j][user][k];
            }
        }
        out.push(total / gain[user][user][k]);
    }
    out
}

/// `sum_k ln(1 + p_k / s_k)`.
pub fn rate(s: &[f64], p: &[f64]) -> f64 {
    s.iter().zip(p).map(|(s, p)| (1.0 + p / s).ln()).sum()
}

/// Largest rate over every allocation on the grid `step * n` that fits the
/// masks and the budget. Exhaustive over the grid; the separable objective
/// lets a knapsack table enumerate it in `O(K B^2)`.
pub fn grid_max_rate(s: &[f64], p_max: f64, mask: &[f64], step: f64) -> f64 {
    let units = (p_max / step + 1e-9).floor() as usize;
    // best[b]: highest rate of the channels so far using at most b units
    let mut best = vec![0.0f64; units + 1];
    for (&s_k, &m_k) in s.iter().zip(mask) {
        let cap = ((m_k / step + 1e-9).floor() as usize).min(units);
        let gains: Vec<f64> = (0..=cap)
            .map(|j| (1.0 + j as f64 * step / s_k).ln())
            .collect();
        let mut next = vec![f64::NEG_INFINITY; units + 1];
        for (b, slot) in next.iter_mut().enumerate() {
            for (j, g) in gains.iter().enumerate().take(cap.min(b) + 1) {
                let v = g + best[b - j];
                if v > *slot {
                    *slot = v;
                }
            }
        }
        best = next;
    }
    best[units]
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut d = 1.0;
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
            .unwrap();
        if a[piv][c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            a.swap(piv, c);
            d = -d;
        }
        d *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for cc in c..n {
                a[r][cc] -= f * a[c][cc];
            }
        }
    }
    d
}

/// `det(lambda I - A)`.
pub fn char_poly(a: &[Vec<f64>], lambda: f64) -> f64 {
    let m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, v)| if i == j { lambda - v } else { -v })
                .collect()
        })
        .collect();
    det(&m)
}

/// Largest real root of the characteristic polynomial, found by scanning
/// down from an upper bound for the first sign change, then bisecting.
/// `None` when no sign change is seen (a root of even multiplicity).
pub fn largest_real_eigenvalue(a: &[Vec<f64>]) -> Option<f64> {
    let n = a.len();
    if n == 0 {
        return None;
    }
    let upper = a
        .iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let hi_bound = upper * (1.0 + 1e-6) + 1e-12;
    let steps = 4000;
    let h = 2.0 * hi_bound / steps as f64;
    let mut hi = hi_bound;
    // det(lambda I - A) is positive beyond every real eigenvalue
    let mut f_hi = char_poly(a, hi);
    for s in 1..=steps {
        let lo = hi_bound - s as f64 * h;
        let f_lo = char_poly(a, lo);
        if f_lo == 0.0 {
            return Some(lo);
        }
        if f_lo.signum() != f_hi.signum() {
            let (mut l, mut r) = (lo, hi);
            for _ in 0..200 {
                let mid = 0.5 * (l + r);
                if mid <= l || mid >= r {
                    break;
                }
                let f_mid = char_poly(a, mid);
                if f_mid == 0.0 {
                    return Some(mid);
                }
                if f_mid.signum() == f_lo.signum() {
                    l = mid;
                } else {
                    r = mid;
                }
            }
            return Some(0.5 * (l + r));
        }
        hi = lo;
        f_hi = f_lo;
    }
    None
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let scale: f64 = m.iter().flatten().map(|v| v * v).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Largest singular value via the eigenvalues of `A^T A`.
pub fn spectral_norm(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let gram: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|r| a[r][i] * a[r][j]).sum())
                .collect()
        })
        .collect();
    symmetric_eigenvalues(&gram)
        .last()
        .map_or(0.0, |v| v.max(0.0).sqrt())
}

/// Whether the directed graph of the nonzero pattern is strongly connected.
pub fn is_irreducible(a: &[Vec<f64>]) -> bool {
    let n = a.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let edge = if forward { a[u][v] } else { a[v][u] };
                if edge != 0.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    n > 0 && reach(true) && reach(false)
}
