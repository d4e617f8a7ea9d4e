//! Best-response dynamics: simultaneous and sequential iterative water-filling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    apply_multiplier, fill_normalized_interference, rate, NetworkScenario, PowerProfile,
    UncertaintySpec,
};
use crate::scalar::Scalar;
use crate::waterfill::best_response;

pub const DEFAULT_CONV_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Every user responds to the previous iterate.
    Simultaneous,
    /// Round-robin: one user per step, the others carry forward.
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    rename_all = "snake_case",
    bound(
        serialize = "T: Scalar + Serialize",
        deserialize = "T: Scalar + Deserialize<'de>"
    )
)]
pub enum InitialProfile<T> {
    Zeros,
    /// Every channel at its mask, scaled down uniformly where that breaks the budget.
    Masks,
    /// Budget split evenly over the channels, capped by the masks.
    UniformBudget,
    /// Uniform draws in the mask box, rescaled into the budget.
    Random(u64),
    Given(PowerProfile<T>),
}

impl<T: Scalar> InitialProfile<T> {
    pub fn build(&self, scn: &NetworkScenario<T>) -> Result<PowerProfile<T>> {
        let (m, k) = (scn.num_users(), scn.num_channels());
        let mut p = PowerProfile::zeros(m, k);
        match self {
            InitialProfile::Zeros => {}
            InitialProfile::Masks => {
                for i in 0..m {
                    let row = p.row_mut(i);
                    row.copy_from_slice(scn.p_mask());
                    fit_budget(row, scn.p_max()[i]);
                }
            }
            InitialProfile::UniformBudget => {
                let k_t = T::from_usize_lossy(k);
                for i in 0..m {
                    let share = scn.p_max()[i] / k_t;
                    for (c, v) in p.row_mut(i).iter_mut().enumerate() {
                        *v = share.min(scn.p_mask()[c]);
                    }
                }
            }
            InitialProfile::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                for i in 0..m {
                    let row = p.row_mut(i);
                    for (c, v) in row.iter_mut().enumerate() {
                        let u: f64 = rng.random();
                        *v = T::lit(u) * scn.p_mask()[c];
                    }
                    fit_budget(row, scn.p_max()[i]);
                }
            }
            InitialProfile::Given(given) => {
                given.check_feasible(scn)?;
                p = given.clone();
            }
        }
        Ok(p)
    }
}

fn fit_budget<T: Scalar>(row: &mut [T], budget: T) {
    let total: T = row.iter().copied().sum();
    if total > budget {
        let f = budget / total;
        row.iter_mut().for_each(|v| *v = *v * f);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct IterationConfig<T> {
    pub schedule: Schedule,
    /// Maximum number of rounds. A sequential round is `M` single-user steps.
    pub max_iters: usize,
    /// Sup-norm threshold on the profile change over one round.
    pub conv_tol: T,
    pub initial: InitialProfile<T>,
}

impl<T: Scalar> IterationConfig<T> {
    pub fn new(schedule: Schedule) -> Self {
        IterationConfig {
            schedule,
            max_iters: DEFAULT_MAX_ITERS,
            conv_tol: T::lit(DEFAULT_CONV_TOL),
            initial: InitialProfile::Zeros,
        }
    }

    pub fn with_initial(mut self, initial: InitialProfile<T>) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_tol(mut self, tol: T) -> Self {
        self.conv_tol = tol;
        self
    }

    pub fn with_max_iters(mut self, n: usize) -> Self {
        self.max_iters = n;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.conv_tol > T::zero()) {
            return Err(Error::invalid("conv_tol must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct EquilibriumReport<T> {
    pub profile: PowerProfile<T>,
    pub converged: bool,
    /// Rounds executed.
    pub iterations: usize,
    /// Single-user updates executed (equals `iterations * M` for sequential runs).
    pub steps: usize,
    /// Sup-norm profile change of every round.
    pub residual_trace: Vec<T>,
    /// Per-user utility under the run's uncertainty model.
    pub utilities: Vec<T>,
    pub social_utility: T,
}

/// Per-user workspace: floor vector reused across updates.
struct Responder<'a, T> {
    scn: &'a NetworkScenario<T>,
    unc: &'a UncertaintySpec<T>,
    floor: Vec<T>,
}

impl<'a, T: Scalar> Responder<'a, T> {
    fn new(scn: &'a NetworkScenario<T>, unc: &'a UncertaintySpec<T>) -> Self {
        Responder {
            scn,
            unc,
            floor: vec![T::zero(); scn.num_channels()],
        }
    }

    fn planned_floor(&mut self, against: &PowerProfile<T>, user: usize) -> Result<&[T]> {
        fill_normalized_interference(self.scn, against, user, &mut self.floor);
        apply_multiplier(&mut self.floor, self.unc, user)?;
        Ok(&self.floor)
    }

    fn respond(&mut self, against: &PowerProfile<T>, user: usize) -> Result<Vec<T>> {
        let scn = self.scn;
        let floor = self.planned_floor(against, user)?;
        Ok(best_response(floor, scn.p_max()[user], scn.p_mask())?.power)
    }

    fn utility(&mut self, profile: &PowerProfile<T>, user: usize) -> Result<T> {
        let floor = self.planned_floor(profile, user)?;
        Ok(rate(profile.row(user), floor))
    }
}

/// Run iterative water-filling until the profile stops moving.
pub fn run_iwfa<T: Scalar>(
    scn: &NetworkScenario<T>,
    unc: &UncertaintySpec<T>,
    cfg: &IterationConfig<T>,
) -> Result<EquilibriumReport<T>> {
    cfg.validate()?;
    unc.check_dims(scn)?;
    let m = scn.num_users();
    let mut profile = cfg.initial.build(scn)?;
    let mut responder = Responder::new(scn, unc);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut steps = 0;

    for _ in 0..cfg.max_iters {
        let start = profile.clone();
        match cfg.schedule {
            Schedule::Simultaneous => {
                for i in 0..m {
                    let row = responder.respond(&start, i)?;
                    profile.row_mut(i).copy_from_slice(&row);
                }
                steps += m;
            }
            Schedule::Sequential => {
                for i in 0..m {
                    let row = responder.respond(&profile, i)?;
                    profile.row_mut(i).copy_from_slice(&row);
                    steps += 1;
                }
            }
        }
        let change = profile.sup_distance(&start);
        trace.push(change);
        if change <= cfg.conv_tol {
            converged = true;
            break;
        }
    }

    let utilities = (0..m)
        .map(|i| responder.utility(&profile, i))
        .collect::<Result<Vec<_>>>()?;
    let social_utility = utilities.iter().copied().sum();
    Ok(EquilibriumReport {
        profile,
        converged,
        iterations: trace.len(),
        steps,
        residual_trace: trace,
        utilities,
        social_utility,
    })
}

/// Whether `profile` is a fixed point of the best-response map: every user's
/// water-filling answer to the others reproduces its row within `tol`.
pub fn is_equilibrium<T: Scalar>(
    scn: &NetworkScenario<T>,
    unc: &UncertaintySpec<T>,
    profile: &PowerProfile<T>,
    tol: T,
) -> bool {
    max_deviation(scn, unc, profile).is_some_and(|d| d <= tol)
}

/// Largest entrywise gap between the profile and the best responses to it;
/// `None` when the profile is infeasible or a best response cannot be formed.
pub fn max_deviation<T: Scalar>(
    scn: &NetworkScenario<T>,
    unc: &UncertaintySpec<T>,
    profile: &PowerProfile<T>,
) -> Option<T> {
    if profile.check_feasible(scn).is_err() || unc.check_dims(scn).is_err() {
        return None;
    }
    let mut responder = Responder::new(scn, unc);
    let mut worst = T::zero();
    for i in 0..scn.num_users() {
        let row = responder.respond(profile, i).ok()?;
        for (a, b) in row.iter().zip(profile.row(i)) {
            worst = worst.max((*a - *b).abs());
        }
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coupled() -> NetworkScenario<f64> {
        NetworkScenario::from_fn(
            3,
            4,
            |j, i, k| {
                if i == j {
                    1.0 + 0.2 * k as f64
                } else {
                    0.15 + 0.05 * ((j + k) % 3) as f64
                }
            },
            |i, k| 0.1 + 0.05 * ((i + 2 * k) % 4) as f64,
            vec![1.0, 1.5, 2.0],
            vec![0.8; 4],
        )
        .unwrap()
    }

    #[test]
    fn single_user_is_plain_water_filling() {
        let scn = NetworkScenario::from_fn(
            1,
            3,
            |_, _, k| [1.0, 0.5, 0.25][k],
            |_, _| 1.0,
            vec![3.0],
            vec![10.0; 3],
        )
        .unwrap();
        let unc = UncertaintySpec::nominal(1, 3);
        for schedule in [Schedule::Simultaneous, Schedule::Sequential] {
            let rep = run_iwfa(&scn, &unc, &IterationConfig::new(schedule)).unwrap();
            assert!(rep.converged);
            // first round moves from zeros, the second confirms
            assert_eq!(rep.iterations, 2);
            let wf = best_response(&[1.0, 2.0, 4.0], 3.0, &[10.0; 3]).unwrap();
            assert!(
                rep.profile
                    .sup_distance(&PowerProfile::from_rows(vec![wf.power]).unwrap())
                    < 1e-12
            );
        }
    }

    #[test]
    fn converged_runs_are_fixed_points() {
        let scn = coupled();
        for unc in [
            UncertaintySpec::nominal(3, 4),
            UncertaintySpec::worst_case_uniform(3, 4, 0.5).unwrap(),
        ] {
            for schedule in [Schedule::Simultaneous, Schedule::Sequential] {
                let cfg = IterationConfig::new(schedule);
                let rep = run_iwfa(&scn, &unc, &cfg).unwrap();
                assert!(rep.converged);
                assert!(*rep.residual_trace.last().unwrap() <= cfg.conv_tol);
                assert!(is_equilibrium(
                    &scn,
                    &unc,
                    &rep.profile,
                    10.0 * cfg.conv_tol
                ));
                assert!(rep.profile.is_feasible(&scn));
            }
        }
    }

    #[test]
    fn report_utilities_recompute_from_profile() {
        let scn = coupled();
        let unc = UncertaintySpec::worst_case_uniform(3, 4, 0.3).unwrap();
        let rep = run_iwfa(&scn, &unc, &IterationConfig::new(Schedule::Sequential)).unwrap();
        for i in 0..3 {
            let u = crate::model::user_utility(&scn, &rep.profile, i, &unc).unwrap();
            assert_eq!(u, rep.utilities[i]);
        }
        assert_eq!(rep.social_utility, rep.utilities.iter().sum::<f64>());
    }

    #[test]
    fn zeros_are_not_an_equilibrium() {
        let scn = coupled();
        let unc = UncertaintySpec::nominal(3, 4);
        assert!(!is_equilibrium(
            &scn,
            &unc,
            &PowerProfile::zeros(3, 4),
            1e-6
        ));
    }

    #[test]
    fn infeasible_initial_is_rejected() {
        let scn = coupled();
        let unc = UncertaintySpec::nominal(3, 4);
        let bad = PowerProfile::from_rows(vec![vec![0.8; 4]; 3]).unwrap();
        let cfg =
            IterationConfig::new(Schedule::Sequential).with_initial(InitialProfile::Given(bad));
        assert!(matches!(
            run_iwfa(&scn, &unc, &cfg),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn presets_are_feasible() {
        let scn = coupled();
        for init in [
            InitialProfile::Zeros,
            InitialProfile::Masks,
            InitialProfile::UniformBudget,
            InitialProfile::Random(7),
        ] {
            assert!(init.build(&scn).unwrap().is_feasible(&scn), "{init:?}");
        }
        assert_eq!(
            InitialProfile::<f64>::Random(3).build(&scn).unwrap(),
            InitialProfile::<f64>::Random(3).build(&scn).unwrap()
        );
    }

    #[test]
    fn sequential_counts_single_steps() {
        let scn = coupled();
        let unc = UncertaintySpec::nominal(3, 4);
        let rep = run_iwfa(&scn, &unc, &IterationConfig::new(Schedule::Sequential)).unwrap();
        assert_eq!(rep.steps, 3 * rep.iterations);
    }

    #[test]
    fn round_cap_reports_non_convergence() {
        let scn = coupled();
        let unc = UncertaintySpec::nominal(3, 4);
        let cfg = IterationConfig::new(Schedule::Simultaneous).with_max_iters(1);
        let rep = run_iwfa(&scn, &unc, &cfg).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn bad_config() {
        let scn = coupled();
        let unc = UncertaintySpec::nominal(3, 4);
        let cfg = IterationConfig::new(Schedule::Simultaneous).with_tol(0.0);
        assert!(run_iwfa(&scn, &unc, &cfg).is_err());
        let cfg = IterationConfig::new(Schedule::Simultaneous).with_max_iters(0);
        assert!(run_iwfa(&scn, &unc, &cfg).is_err());
    }
}
