//! Scenario data, power profiles, uncertainty description and the derived
//! per-user quantities (normalized interference, rates).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative slack allowed on the budget and mask constraints when validating
/// a profile. Water-filling meets the budget only to solver precision.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Static snapshot of an `M`-user, `K`-channel interference network.
///
/// `gain(j, i, k)` is the power gain from transmitter `j` to receiver `i` on
/// sub-channel `k`; the direct gains `gain(i, i, k)` must be strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "ScenarioDoc<T>",
    into = "ScenarioDoc<T>",
    bound(
        serialize = "T: Scalar + Serialize",
        deserialize = "T: Scalar + Deserialize<'de>"
    )
)]
pub struct NetworkScenario<T> {
    num_users: usize,
    num_channels: usize,
    // [j][i][k], flattened
    gain: Vec<T>,
    // [i][k]
    noise: Vec<T>,
    p_max: Vec<T>,
    p_mask: Vec<T>,
}

/// On-disk layout of a scenario; the key names are part of the file format.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc<T> {
    num_users: usize,
    num_channels: usize,
    gain: Vec<Vec<Vec<T>>>,
    noise: Vec<Vec<T>>,
    p_max: Vec<T>,
    p_mask: Vec<T>,
}

impl<T: Scalar> TryFrom<ScenarioDoc<T>> for NetworkScenario<T> {
    type Error = Error;

    fn try_from(doc: ScenarioDoc<T>) -> Result<Self> {
        NetworkScenario::new(
            doc.num_users,
            doc.num_channels,
            doc.gain,
            doc.noise,
            doc.p_max,
            doc.p_mask,
        )
    }
}

impl<T: Scalar> From<NetworkScenario<T>> for ScenarioDoc<T> {
    fn from(s: NetworkScenario<T>) -> Self {
        let (m, k) = (s.num_users, s.num_channels);
        ScenarioDoc {
            num_users: m,
            num_channels: k,
            gain: (0..m)
                .map(|j| {
                    (0..m)
                        .map(|i| (0..k).map(|c| s.gain(j, i, c)).collect())
                        .collect()
                })
                .collect(),
            noise: s.noise.chunks(k).map(<[T]>::to_vec).collect(),
            p_max: s.p_max,
            p_mask: s.p_mask,
        }
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::invalid(format!(
            "{what}: expected length {want}, found {got}"
        )));
    }
    Ok(())
}

impl<T: Scalar> NetworkScenario<T> {
    /// Build from nested arrays: `gain[j][i][k]`, `noise[i][k]`.
    pub fn new(
        num_users: usize,
        num_channels: usize,
        gain: Vec<Vec<Vec<T>>>,
        noise: Vec<Vec<T>>,
        p_max: Vec<T>,
        p_mask: Vec<T>,
    ) -> Result<Self> {
        let (m, k) = (num_users, num_channels);
        check_len("gain", gain.len(), m)?;
        for (j, row) in gain.iter().enumerate() {
            check_len(&format!("gain[{j}]"), row.len(), m)?;
            for (i, col) in row.iter().enumerate() {
                check_len(&format!("gain[{j}][{i}]"), col.len(), k)?;
            }
        }
        check_len("noise", noise.len(), m)?;
        for (i, row) in noise.iter().enumerate() {
            check_len(&format!("noise[{i}]"), row.len(), k)?;
        }
        let gain = gain.into_iter().flatten().flatten().collect();
        let noise = noise.into_iter().flatten().collect();
        Self::from_flat(m, k, gain, noise, p_max, p_mask)
    }

    /// Build from row-major flat storage (`gain` indexed `(j*M + i)*K + k`).
    pub fn from_flat(
        num_users: usize,
        num_channels: usize,
        gain: Vec<T>,
        noise: Vec<T>,
        p_max: Vec<T>,
        p_mask: Vec<T>,
    ) -> Result<Self> {
        let (m, k) = (num_users, num_channels);
        if m == 0 || k == 0 {
            return Err(Error::invalid(
                "num_users and num_channels must be positive",
            ));
        }
        check_len("gain", gain.len(), m * m * k)?;
        check_len("noise", noise.len(), m * k)?;
        check_len("p_max", p_max.len(), m)?;
        check_len("p_mask", p_mask.len(), k)?;
        let scn = NetworkScenario {
            num_users: m,
            num_channels: k,
            gain,
            noise,
            p_max,
            p_mask,
        };
        scn.validate()?;
        Ok(scn)
    }

    /// Build by evaluating closures: `gain(j, i, k)`, `noise(i, k)`.
    pub fn from_fn(
        num_users: usize,
        num_channels: usize,
        mut gain: impl FnMut(usize, usize, usize) -> T,
        mut noise: impl FnMut(usize, usize) -> T,
        p_max: Vec<T>,
        p_mask: Vec<T>,
    ) -> Result<Self> {
        let (m, k) = (num_users, num_channels);
        let mut g = Vec::with_capacity(m * m * k);
        for j in 0..m {
            for i in 0..m {
                for c in 0..k {
                    g.push(gain(j, i, c));
                }
            }
        }
        let mut n = Vec::with_capacity(m * k);
        for i in 0..m {
            for c in 0..k {
                n.push(noise(i, c));
            }
        }
        Self::from_flat(m, k, g, n, p_max, p_mask)
    }

    fn validate(&self) -> Result<()> {
        let (m, k) = (self.num_users, self.num_channels);
        for j in 0..m {
            for i in 0..m {
                for c in 0..k {
                    let g = self.gain(j, i, c);
                    if !g.is_finite() || g < T::zero() {
                        return Err(Error::invalid(format!(
                            "gain[{j}][{i}][{c}] = {g} must be finite and nonnegative"
                        )));
                    }
                    if i == j && g <= T::zero() {
                        return Err(Error::invalid(format!(
                            "direct gain[{i}][{i}][{c}] must be positive"
                        )));
                    }
                }
            }
        }
        for i in 0..m {
            for c in 0..k {
                let n = self.noise(i, c);
                if !n.is_finite() || n <= T::zero() {
                    return Err(Error::invalid(format!(
                        "noise[{i}][{c}] = {n} must be positive"
                    )));
                }
            }
        }
        for (i, &p) in self.p_max.iter().enumerate() {
            if !p.is_finite() || p <= T::zero() {
                return Err(Error::invalid(format!("p_max[{i}] = {p} must be positive")));
            }
        }
        for (c, &p) in self.p_mask.iter().enumerate() {
            if !p.is_finite() || p <= T::zero() {
                return Err(Error::invalid(format!(
                    "p_mask[{c}] = {p} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Parse the JSON scenario format. Missing or unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        match serde_json::from_str::<ScenarioDoc<T>>(text) {
            Ok(doc) => doc.try_into(),
            Err(e) => Err(Error::Parse(e)),
        }
    }

    pub fn to_json(&self) -> String
    where
        T: Serialize,
    {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    /// Gain from transmitter `from` to receiver `to` on channel `k`.
    #[inline]
    pub fn gain(&self, from: usize, to: usize, k: usize) -> T {
        self.gain[(from * self.num_users + to) * self.num_channels + k]
    }

    #[inline]
    pub fn noise(&self, user: usize, k: usize) -> T {
        self.noise[user * self.num_channels + k]
    }

    pub fn p_max(&self) -> &[T] {
        &self.p_max
    }

    pub fn p_mask(&self) -> &[T] {
        &self.p_mask
    }
}

/// `M x K` transmit-power matrix, one row per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "Vec<Vec<T>>",
    into = "Vec<Vec<T>>",
    bound(
        serialize = "T: Scalar + Serialize",
        deserialize = "T: Scalar + Deserialize<'de>"
    )
)]
pub struct PowerProfile<T> {
    num_users: usize,
    num_channels: usize,
    p: Vec<T>,
}

impl<T: Scalar> TryFrom<Vec<Vec<T>>> for PowerProfile<T> {
    type Error = Error;

    fn try_from(rows: Vec<Vec<T>>) -> Result<Self> {
        PowerProfile::from_rows(rows)
    }
}

impl<T: Scalar> From<PowerProfile<T>> for Vec<Vec<T>> {
    fn from(p: PowerProfile<T>) -> Self {
        p.rows().map(<[T]>::to_vec).collect()
    }
}

impl<T: Scalar> PowerProfile<T> {
    pub fn zeros(num_users: usize, num_channels: usize) -> Self {
        PowerProfile {
            num_users,
            num_channels,
            p: vec![T::zero(); num_users * num_channels],
        }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let m = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if m == 0 || k == 0 {
            return Err(Error::invalid("power profile must be non-empty"));
        }
        for (i, r) in rows.iter().enumerate() {
            check_len(&format!("profile row {i}"), r.len(), k)?;
            if r.iter().any(|x| !x.is_finite() || *x < T::zero()) {
                return Err(Error::invalid(format!(
                    "profile row {i} has negative or non-finite power"
                )));
            }
        }
        Ok(PowerProfile {
            num_users: m,
            num_channels: k,
            p: rows.into_iter().flatten().collect(),
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    #[inline]
    pub fn get(&self, user: usize, k: usize) -> T {
        self.p[user * self.num_channels + k]
    }

    pub fn row(&self, user: usize) -> &[T] {
        &self.p[user * self.num_channels..(user + 1) * self.num_channels]
    }

    pub fn row_mut(&mut self, user: usize) -> &mut [T] {
        &mut self.p[user * self.num_channels..(user + 1) * self.num_channels]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.p.chunks(self.num_channels)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.p
    }

    /// Largest absolute entrywise difference.
    pub fn sup_distance(&self, other: &Self) -> T {
        self.p
            .iter()
            .zip(&other.p)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn check_dims(&self, scn: &NetworkScenario<T>) -> Result<()> {
        if self.num_users != scn.num_users() || self.num_channels != scn.num_channels() {
            return Err(Error::invalid(format!(
                "profile is {}x{}, scenario is {}x{}",
                self.num_users,
                self.num_channels,
                scn.num_users(),
                scn.num_channels()
            )));
        }
        Ok(())
    }

    /// Check the mask and budget constraints with [`FEASIBILITY_TOL`] relative slack.
    pub fn check_feasible(&self, scn: &NetworkScenario<T>) -> Result<()> {
        self.check_dims(scn)?;
        let tol = T::lit(FEASIBILITY_TOL);
        for (i, row) in self.rows().enumerate() {
            for (k, &p) in row.iter().enumerate() {
                let mask = scn.p_mask()[k];
                if !(p >= T::zero()) || p > mask * (T::one() + tol) {
                    return Err(Error::invalid(format!(
                        "p[{i}][{k}] = {p} violates 0 <= p <= {mask}"
                    )));
                }
            }
            let total: T = row.iter().copied().sum();
            let budget = scn.p_max()[i];
            if total > budget * (T::one() + tol) {
                return Err(Error::invalid(format!(
                    "user {i} total power {total} exceeds budget {budget}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_feasible(&self, scn: &NetworkScenario<T>) -> bool {
        self.check_feasible(scn).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustnessMode {
    Nominal,
    WorstCase,
    Probabilistic,
}

/// Relative interval uncertainty on normalized interference.
///
/// The true floor of user `i` on channel `k` lies in
/// `[s(1 - eps), s(1 + eps)]` around the estimate `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct UncertaintySpec<T> {
    num_users: usize,
    num_channels: usize,
    epsilon: Vec<T>,
    mode: RobustnessMode,
    delta0: T,
}

impl<T: Scalar> UncertaintySpec<T> {
    pub fn new(
        num_users: usize,
        num_channels: usize,
        epsilon: Vec<T>,
        mode: RobustnessMode,
        delta0: T,
    ) -> Result<Self> {
        check_len("epsilon", epsilon.len(), num_users * num_channels)?;
        if epsilon.iter().any(|e| !e.is_finite() || *e < T::zero()) {
            return Err(Error::invalid("epsilon must be finite and nonnegative"));
        }
        if !(delta0 >= T::zero() && delta0 <= T::one()) {
            return Err(Error::invalid(format!("delta0 = {delta0} outside [0, 1]")));
        }
        Ok(UncertaintySpec {
            num_users,
            num_channels,
            epsilon,
            mode,
            delta0,
        })
    }

    pub fn nominal(num_users: usize, num_channels: usize) -> Self {
        UncertaintySpec {
            num_users,
            num_channels,
            epsilon: vec![T::zero(); num_users * num_channels],
            mode: RobustnessMode::Nominal,
            delta0: T::zero(),
        }
    }

    pub fn worst_case_uniform(num_users: usize, num_channels: usize, eps: T) -> Result<Self> {
        Self::new(
            num_users,
            num_channels,
            vec![eps; num_users * num_channels],
            RobustnessMode::WorstCase,
            T::zero(),
        )
    }

    pub fn probabilistic_uniform(
        num_users: usize,
        num_channels: usize,
        eps: T,
        delta0: T,
    ) -> Result<Self> {
        Self::new(
            num_users,
            num_channels,
            vec![eps; num_users * num_channels],
            RobustnessMode::Probabilistic,
            delta0,
        )
    }

    pub fn mode(&self) -> RobustnessMode {
        self.mode
    }

    pub fn delta0(&self) -> T {
        self.delta0
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    #[inline]
    pub fn epsilon(&self, user: usize, k: usize) -> T {
        self.epsilon[user * self.num_channels + k]
    }

    /// Factor applied to the nominal floor.
    ///
    /// Probabilistic mode uses `1 + eps (2 delta0 - 1)`, which equals
    /// `1 - eps + 2 eps delta0` but is exactly 1 at `delta0 = 0.5` and exactly
    /// `1 + eps` at `delta0 = 1` in floating point.
    #[inline]
    pub fn multiplier(&self, user: usize, k: usize) -> T {
        match self.mode {
            RobustnessMode::Nominal => T::one(),
            RobustnessMode::WorstCase => T::one() + self.epsilon(user, k),
            RobustnessMode::Probabilistic => {
                let two = T::lit(2.0);
                T::one() + self.epsilon(user, k) * (two * self.delta0 - T::one())
            }
        }
    }

    /// Relative half-width that the planned floor deviates from the nominal
    /// one, `|multiplier - 1|`; zero in nominal mode.
    pub fn effective_epsilon(&self, user: usize, k: usize) -> T {
        (self.multiplier(user, k) - T::one()).abs()
    }

    pub fn check_dims(&self, scn: &NetworkScenario<T>) -> Result<()> {
        if self.num_users != scn.num_users() || self.num_channels != scn.num_channels() {
            return Err(Error::invalid(format!(
                "uncertainty is {}x{}, scenario is {}x{}",
                self.num_users,
                self.num_channels,
                scn.num_users(),
                scn.num_channels()
            )));
        }
        Ok(())
    }
}

/// Interference-plus-noise at `user`'s receiver divided by its direct gain,
/// per channel: `(sum_{j != i} p[j][k] g[j][i][k] + noise[i][k]) / g[i][i][k]`.
pub fn normalized_interference<T: Scalar>(
    scn: &NetworkScenario<T>,
    profile: &PowerProfile<T>,
    user: usize,
) -> Result<Vec<T>> {
    profile.check_dims(scn)?;
    if user >= scn.num_users() {
        return Err(Error::invalid(format!("user index {user} out of range")));
    }
    let mut out = vec![T::zero(); scn.num_channels()];
    fill_normalized_interference(scn, profile, user, &mut out);
    Ok(out)
}

pub(crate) fn fill_normalized_interference<T: Scalar>(
    scn: &NetworkScenario<T>,
    profile: &PowerProfile<T>,
    user: usize,
    out: &mut [T],
) {
    for (k, s) in out.iter_mut().enumerate() {
        let mut acc = scn.noise(user, k);
        for j in (0..scn.num_users()).filter(|&j| j != user) {
            acc = acc + profile.get(j, k) * scn.gain(j, user, k);
        }
        *s = acc / scn.gain(user, user, k);
    }
}

/// The floor a user plans against under `unc`.
pub fn effective_interference<T: Scalar>(
    s_nominal: &[T],
    unc: &UncertaintySpec<T>,
    user: usize,
) -> Result<Vec<T>> {
    if user >= unc.num_users() || s_nominal.len() != unc.num_channels() {
        return Err(Error::invalid(
            "interference vector does not match uncertainty dimensions",
        ));
    }
    let mut out = s_nominal.to_vec();
    apply_multiplier(&mut out, unc, user)?;
    Ok(out)
}

pub(crate) fn apply_multiplier<T: Scalar>(
    s: &mut [T],
    unc: &UncertaintySpec<T>,
    user: usize,
) -> Result<()> {
    if unc.mode() == RobustnessMode::Nominal {
        return Ok(());
    }
    for (k, v) in s.iter_mut().enumerate() {
        let m = unc.multiplier(user, k);
        if !(m > T::zero()) {
            return Err(Error::DegenerateMultiplier {
                user,
                channel: k,
                multiplier: m.to_f64().unwrap_or(f64::NAN),
            });
        }
        *v = *v * m;
    }
    Ok(())
}

/// Rate of `user` in nats: `sum_k ln(1 + p[i][k] / s_eff[k])`.
pub fn user_utility<T: Scalar>(
    scn: &NetworkScenario<T>,
    profile: &PowerProfile<T>,
    user: usize,
    unc: &UncertaintySpec<T>,
) -> Result<T> {
    unc.check_dims(scn)?;
    let mut s = normalized_interference(scn, profile, user)?;
    apply_multiplier(&mut s, unc, user)?;
    Ok(rate(profile.row(user), &s))
}

pub(crate) fn rate<T: Scalar>(power: &[T], floor: &[T]) -> T {
    power
        .iter()
        .zip(floor)
        .map(|(&p, &s)| (p / s).ln_1p())
        .sum()
}
