//! Sufficient conditions for equilibrium uniqueness and for convergence of
//! the distributed iterations, the small dense linear algebra behind them,
//! and profile-level diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{user_utility, NetworkScenario, PowerProfile, UncertaintySpec};
use crate::scalar::Scalar;

pub const POWER_ITER_MAX: usize = 10_000;
pub const POWER_ITER_TOL: f64 = 1e-10;
/// Power above which a user counts as active on a channel.
pub const ACTIVITY_TOL: f64 = 1e-3;

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("matrix is not square"));
        }
        Ok(SquareMatrix {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        SquareMatrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i))
    }

    /// `(A + A^T) / 2`
    pub fn symmetric_part(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.n, |i, j| (self.get(i, j) + self.get(j, i)) * half)
    }

    /// `A^T A`
    pub fn gram(&self) -> Self {
        let n = self.n;
        Self::from_fn(n, |i, j| {
            (0..n).map(|r| self.get(r, i) * self.get(r, j)).sum()
        })
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    fn mul_vec_into(&self, x: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.data[i * self.n..(i + 1) * self.n]
                .iter()
                .zip(x)
                .map(|(a, b)| *a * *b)
                .sum();
        }
    }

    fn max_row_sum(&self) -> T {
        self.data
            .chunks(self.n.max(1))
            .map(|r| r.iter().copied().sum::<T>())
            .fold(T::zero(), T::max)
    }
}

fn check_nonnegative<T: Scalar>(a: &SquareMatrix<T>) -> Result<()> {
    if a.data.iter().any(|v| !v.is_finite() || *v < T::zero()) {
        return Err(Error::invalid(
            "matrix must be finite and entrywise nonnegative",
        ));
    }
    Ok(())
}

/// Spectral radius of an entrywise nonnegative matrix by power iteration.
///
/// The radius is the largest one among the diagonal blocks of the strongly
/// connected components of the nonzero pattern, so each block is irreducible.
/// A block is iterated as `B + cI` with `c` its largest row sum, which keeps
/// every iterate strictly positive and separates the Perron root from
/// eigenvalues on the same circle (e.g. `-rho` for bipartite patterns). For a
/// positive vector `x` the Collatz-Wielandt ratios `min_i (Bx)_i/x_i` and
/// `max_i (Bx)_i/x_i` bracket the radius; iteration stops when the bracket is
/// narrower than `tol` relative to the radius. If the bracket has not closed
/// after [`POWER_ITER_MAX`] steps the iteration restarts once from a
/// pseudo-random positive vector and returns the midpoint reached.
pub fn spectral_radius<T: Scalar>(a: &SquareMatrix<T>, tol: T) -> Result<T> {
    check_nonnegative(a)?;
    let mut rho = T::zero();
    for comp in strong_components(a) {
        let block = SquareMatrix::from_fn(comp.len(), |i, j| a.get(comp[i], comp[j]));
        rho = rho.max(block_radius(&block, tol));
    }
    Ok(rho)
}

/// Strongly connected components of the pattern `a[i][j] != 0` (Kosaraju).
fn strong_components<T: Scalar>(a: &SquareMatrix<T>) -> Vec<Vec<usize>> {
    let n = a.dim();
    let edge = |u: usize, v: usize, forward: bool| {
        let w = if forward { a.get(u, v) } else { a.get(v, u) };
        w != T::zero()
    };
    // finishing order of a depth-first search on the forward graph
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut stack = vec![(root, 0usize)];
        while let Some((u, next)) = stack.last_mut() {
            let u = *u;
            match (*next..n).find(|&v| !seen[v] && edge(u, v, true)) {
                Some(v) => {
                    *next = v + 1;
                    seen[v] = true;
                    stack.push((v, 0));
                }
                None => {
                    order.push(u);
                    stack.pop();
                }
            }
        }
    }
    let mut comp_of = vec![usize::MAX; n];
    let mut comps = Vec::new();
    for &root in order.iter().rev() {
        if comp_of[root] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut members = vec![root];
        comp_of[root] = id;
        let mut i = 0;
        while i < members.len() {
            let u = members[i];
            for v in 0..n {
                if comp_of[v] == usize::MAX && edge(u, v, false) {
                    comp_of[v] = id;
                    members.push(v);
                }
            }
            i += 1;
        }
        members.sort_unstable();
        comps.push(members);
    }
    comps
}

fn block_radius<T: Scalar>(a: &SquareMatrix<T>, tol: T) -> T {
    let n = a.dim();
    if n == 1 {
        return a.get(0, 0);
    }
    let shift = a.max_row_sum();
    if shift == T::zero() {
        return T::zero();
    }
    let ones = vec![T::one(); n];
    let (lo, hi, closed) = perron_bracket(a, shift, ones, tol);
    let (lo, hi) = if closed {
        (lo, hi)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let start = (0..n).map(|_| T::lit(0.5 + rng.random::<f64>())).collect();
        let (lo2, hi2, _) = perron_bracket(a, shift, start, tol);
        // both runs bracket the same root; keep the tighter intersection
        (lo.max(lo2), hi.min(hi2))
    };
    let two = T::lit(2.0);
    ((lo + hi) / two - shift).max(T::zero())
}

fn perron_bracket<T: Scalar>(a: &SquareMatrix<T>, shift: T, mut x: Vec<T>, tol: T) -> (T, T, bool) {
    let n = a.dim();
    let mut y = vec![T::zero(); n];
    let mut lo = T::zero();
    let mut hi = T::infinity();
    // rounding floor of the shifted ratios
    let floor = T::epsilon() * T::lit(16.0);
    for _ in 0..POWER_ITER_MAX {
        a.mul_vec_into(&x, &mut y);
        let mut rmin = T::infinity();
        let mut rmax = T::zero();
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi = *yi + shift * *xi;
            let r = *yi / *xi;
            rmin = rmin.min(r);
            rmax = rmax.max(r);
        }
        lo = lo.max(rmin);
        hi = hi.min(rmax);
        if hi - lo <= tol * (hi - shift).max(T::zero()) + floor * hi {
            return (lo, hi, true);
        }
        let norm = y.iter().copied().fold(T::zero(), T::max);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = *yi / norm;
        }
    }
    (lo, hi, false)
}

/// Largest singular value, `sqrt(rho(A^T A))`.
pub fn operator_norm_l2<T: Scalar>(a: &SquareMatrix<T>, tol: T) -> Result<T> {
    check_nonnegative(a)?;
    Ok(spectral_radius(&a.gram(), tol)?.sqrt())
}

pub fn frobenius_norm<T: Scalar>(a: &SquareMatrix<T>) -> T {
    a.data.iter().map(|v| *v * *v).sum::<T>().sqrt()
}

fn l2<T: Scalar>(v: impl Iterator<Item = T>) -> T {
    v.map(|x| x * x).sum::<T>().sqrt()
}

/// Cross-to-direct gain ratios at each receiver, zero on the diagonal.
/// Row `i` is receiver `i`; entry `(i, j)` is `g[j][i] / g[i][i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct InterferenceRatioMatrix<T>(SquareMatrix<T>);

impl<T: Scalar> InterferenceRatioMatrix<T> {
    /// Ratios on one sub-channel.
    pub fn per_channel(scn: &NetworkScenario<T>, k: usize) -> Self {
        InterferenceRatioMatrix(SquareMatrix::from_fn(scn.num_users(), |i, j| {
            if i == j {
                T::zero()
            } else {
                scn.gain(j, i, k) / scn.gain(i, i, k)
            }
        }))
    }

    /// Entrywise maximum of the per-channel ratios over all sub-channels.
    pub fn channel_max(scn: &NetworkScenario<T>) -> Self {
        InterferenceRatioMatrix(SquareMatrix::from_fn(scn.num_users(), |i, j| {
            if i == j {
                T::zero()
            } else {
                (0..scn.num_channels())
                    .map(|k| scn.gain(j, i, k) / scn.gain(i, i, k))
                    .fold(T::zero(), T::max)
            }
        }))
    }

    pub fn matrix(&self) -> &SquareMatrix<T> {
        &self.0
    }
}

/// Evaluated uniqueness and convergence conditions. Each holds when its
/// left-hand side is strictly below one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct ConditionReport<T> {
    pub per_channel_lhs: Vec<T>,
    pub uniqueness_holds: Option<bool>,
    pub convergence_lhs: Option<T>,
    pub convergence_holds: Option<bool>,
}

/// Per channel `k`:
/// `min(rho((S + S^T)/2), ||S||_2) + ||(eps_1^k, ..., eps_M^k)||_2 < 1`
/// where `S` is the channel's ratio matrix and `eps` the effective relative
/// uncertainty (`|multiplier - 1|`, zero in nominal mode).
pub fn check_uniqueness<T: Scalar>(
    scn: &NetworkScenario<T>,
    unc: &UncertaintySpec<T>,
) -> Result<ConditionReport<T>> {
    unc.check_dims(scn)?;
    let tol = T::lit(POWER_ITER_TOL);
    let mut lhs = Vec::with_capacity(scn.num_channels());
    for k in 0..scn.num_channels() {
        let s = InterferenceRatioMatrix::per_channel(scn, k);
        let sym = if s.matrix().is_symmetric() {
            spectral_radius(s.matrix(), tol)?
        } else {
            spectral_radius(&s.matrix().symmetric_part(), tol)?
                .min(operator_norm_l2(s.matrix(), tol)?)
        };
        let eps = l2((0..scn.num_users()).map(|i| unc.effective_epsilon(i, k)));
        lhs.push(sym + eps);
    }
    let holds = lhs.iter().all(|v| *v < T::one());
    Ok(ConditionReport {
        per_channel_lhs: lhs,
        uniqueness_holds: Some(holds),
        convergence_lhs: None,
        convergence_holds: None,
    })
}

/// Upper bound on every user's nominal floor over all feasible profiles:
/// opponents transmitting at full mask on every channel.
pub fn interference_upper_bound<T: Scalar>(scn: &NetworkScenario<T>) -> PowerProfile<T> {
    let (m, k) = (scn.num_users(), scn.num_channels());
    let rows = (0..m)
        .map(|i| {
            (0..k)
                .map(|c| {
                    let cross: T = (0..m)
                        .filter(|&j| j != i)
                        .map(|j| scn.p_mask()[c] * scn.gain(j, i, c))
                        .sum();
                    (cross + scn.noise(i, c)) / scn.gain(i, i, c)
                })
                .collect()
        })
        .collect();
    PowerProfile::from_rows(rows).expect("bound is finite and positive")
}

/// `||S_max||_2 + sqrt(M) ||s_max||_2 < 1`, with `S_max` the channel-max
/// ratio matrix and `s_max[i] = max_k s_bar_bound[i][k] * eps[i][k]`.
pub fn check_convergence<T: Scalar>(
    scn: &NetworkScenario<T>,
    unc: &UncertaintySpec<T>,
    s_bar_bound: &PowerProfile<T>,
) -> Result<ConditionReport<T>> {
    unc.check_dims(scn)?;
    s_bar_bound.check_dims(scn)?;
    let m = scn.num_users();
    let tol = T::lit(POWER_ITER_TOL);
    let smax = InterferenceRatioMatrix::channel_max(scn);
    let norm = operator_norm_l2(smax.matrix(), tol)?;
    let svec = (0..m).map(|i| {
        (0..scn.num_channels())
            .map(|k| s_bar_bound.get(i, k) * unc.effective_epsilon(i, k))
            .fold(T::zero(), T::max)
    });
    let lhs = norm + T::from_usize_lossy(m).sqrt() * l2(svec);
    Ok(ConditionReport {
        per_channel_lhs: Vec::new(),
        uniqueness_holds: None,
        convergence_lhs: Some(lhs),
        convergence_holds: Some(lhs < T::one()),
    })
}

/// Both conditions, the convergence one evaluated at
/// [`interference_upper_bound`].
pub fn evaluate_conditions<T: Scalar>(
    scn: &NetworkScenario<T>,
    unc: &UncertaintySpec<T>,
) -> Result<ConditionReport<T>> {
    let mut report = check_uniqueness(scn, unc)?;
    let conv = check_convergence(scn, unc, &interference_upper_bound(scn))?;
    report.convergence_lhs = conv.convergence_lhs;
    report.convergence_holds = conv.convergence_holds;
    Ok(report)
}

/// Fraction of sub-channels with at most one user above `activity_tol`.
pub fn orthogonality_index<T: Scalar>(profile: &PowerProfile<T>, activity_tol: T) -> T {
    let k = profile.num_channels();
    let orthogonal = (0..k)
        .filter(|&c| {
            (0..profile.num_users())
                .filter(|&i| profile.get(i, c) > activity_tol)
                .count()
                <= 1
        })
        .count();
    T::from_usize_lossy(orthogonal) / T::from_usize_lossy(k)
}

/// Sum of user rates, each scored under `unc_for_evaluation`.
pub fn social_utility<T: Scalar>(
    scn: &NetworkScenario<T>,
    profile: &PowerProfile<T>,
    unc_for_evaluation: &UncertaintySpec<T>,
) -> Result<T> {
    (0..scn.num_users())
        .map(|i| user_utility(scn, profile, i, unc_for_evaluation))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> SquareMatrix<f64> {
        SquareMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn zero_matrix() {
        let z = SquareMatrix::<f64>::zeros(4);
        assert_eq!(spectral_radius(&z, 1e-10).unwrap(), 0.0);
        assert_eq!(operator_norm_l2(&z, 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn bipartite_two_by_two() {
        let a = m(&[&[0.0, 0.5], &[0.5, 0.0]]);
        assert!((spectral_radius(&a, 1e-12).unwrap() - 0.5).abs() < 1e-12);
        // eigenvalues +-sqrt(ab)
        let b = m(&[&[0.0, 0.9], &[0.1, 0.0]]);
        assert!((spectral_radius(&b, 1e-12).unwrap() - 0.3).abs() < 1e-10);
    }

    #[test]
    fn antidiagonal_norm_is_larger_entry() {
        // A^T A = diag(b^2, a^2)
        for (a, b) in [(0.3, 0.7), (2.0, 0.5), (0.0, 1.5)] {
            let mat = m(&[&[0.0, a], &[b, 0.0]]);
            let n = operator_norm_l2(&mat, 1e-12).unwrap();
            assert!((n - f64::max(a, b)).abs() < 1e-9, "{a} {b} {n}");
        }
    }

    #[test]
    fn nilpotent_has_zero_radius() {
        let a = m(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]]);
        assert!(spectral_radius(&a, 1e-10).unwrap() < 1e-3);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(SquareMatrix::<f64>::from_rows(&[vec![1.0, 2.0]]).is_err());
        assert!(spectral_radius(&m(&[&[0.0, -1.0], &[1.0, 0.0]]), 1e-10).is_err());
    }

    fn isolated(m_users: usize, k: usize) -> NetworkScenario<f64> {
        NetworkScenario::from_fn(
            m_users,
            k,
            |j, i, _| if i == j { 1.0 } else { 0.0 },
            |_, _| 0.1,
            vec![1.0; m_users],
            vec![1.0; k],
        )
        .unwrap()
    }

    #[test]
    fn single_user_lhs_is_epsilon() {
        let scn = isolated(1, 3);
        let r = check_uniqueness(&scn, &UncertaintySpec::nominal(1, 3)).unwrap();
        assert_eq!(r.per_channel_lhs, vec![0.0; 3]);
        assert_eq!(r.uniqueness_holds, Some(true));
        let unc = UncertaintySpec::worst_case_uniform(1, 3, 0.4).unwrap();
        let r = check_uniqueness(&scn, &unc).unwrap();
        assert!(r.per_channel_lhs.iter().all(|v| (v - 0.4).abs() < 1e-15));
        assert_eq!(r.uniqueness_holds, Some(true));
        let unc = UncertaintySpec::worst_case_uniform(1, 3, 1.0).unwrap();
        assert_eq!(
            check_uniqueness(&scn, &unc).unwrap().uniqueness_holds,
            Some(false)
        );
    }

    #[test]
    fn no_cross_gain_holds_everything() {
        let scn = isolated(3, 4);
        let r = evaluate_conditions(&scn, &UncertaintySpec::nominal(3, 4)).unwrap();
        assert_eq!(r.uniqueness_holds, Some(true));
        assert_eq!(r.convergence_lhs, Some(0.0));
        assert_eq!(r.convergence_holds, Some(true));
    }

    #[test]
    fn convergence_lhs_hand_evaluated() {
        // S_max = [[0, .3], [.3, 0]] has norm 0.3; s_max = (.1, .1).
        let scn = NetworkScenario::from_fn(
            2,
            2,
            |j, i, k| {
                if i == j {
                    1.0
                } else if k == 0 {
                    0.3
                } else {
                    0.1
                }
            },
            |_, _| 0.05,
            vec![1.0; 2],
            vec![1.0; 2],
        )
        .unwrap();
        let unc = UncertaintySpec::worst_case_uniform(2, 2, 0.5).unwrap();
        let bound = PowerProfile::from_rows(vec![vec![0.2, 0.1], vec![0.05, 0.2]]).unwrap();
        let r = check_convergence(&scn, &unc, &bound).unwrap();
        let want = 0.3 + 2f64.sqrt() * 0.02f64.sqrt();
        assert!((r.convergence_lhs.unwrap() - want).abs() < 1e-9);
        assert!((want - 0.5).abs() < 1e-12);
        assert_eq!(r.convergence_holds, Some(true));
    }

    #[test]
    fn symmetric_shortcut_matches_general_form() {
        let scn = NetworkScenario::from_fn(
            3,
            1,
            |j, i, _| {
                if i == j {
                    2.0
                } else {
                    0.2 + 0.1 * (i + j) as f64
                }
            },
            |_, _| 1.0,
            vec![1.0; 3],
            vec![1.0],
        )
        .unwrap();
        let s = InterferenceRatioMatrix::per_channel(&scn, 0);
        assert!(s.matrix().is_symmetric());
        let general = spectral_radius(&s.matrix().symmetric_part(), 1e-12)
            .unwrap()
            .min(operator_norm_l2(s.matrix(), 1e-12).unwrap());
        let r = check_uniqueness(&scn, &UncertaintySpec::nominal(3, 1)).unwrap();
        assert!((r.per_channel_lhs[0] - general).abs() < 1e-9);
    }

    #[test]
    fn probabilistic_half_has_no_effective_uncertainty() {
        let scn = isolated(2, 2);
        let unc = UncertaintySpec::probabilistic_uniform(2, 2, 0.8, 0.5).unwrap();
        assert_eq!(
            check_uniqueness(&scn, &unc).unwrap().per_channel_lhs,
            vec![0.0; 2]
        );
    }

    #[test]
    fn orthogonality() {
        let single = PowerProfile::from_rows(vec![vec![0.3, 0.0, 0.7]]).unwrap();
        assert_eq!(orthogonality_index(&single, ACTIVITY_TOL), 1.0);
        let shared = PowerProfile::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.0005]]).unwrap();
        assert_eq!(orthogonality_index(&shared, ACTIVITY_TOL), 0.5);
        assert_eq!(orthogonality_index(&shared, 1e-6), 0.0);
    }

    #[test]
    fn zero_profile_has_zero_social_utility() {
        let scn = isolated(3, 2);
        let u = social_utility(
            &scn,
            &PowerProfile::zeros(3, 2),
            &UncertaintySpec::nominal(3, 2),
        )
        .unwrap();
        assert_eq!(u, 0.0);
    }
}
