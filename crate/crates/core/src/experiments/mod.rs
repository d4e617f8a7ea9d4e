//! Scenario generators, the fixed 3-user reference network, Monte-Carlo
//! sweeps and the fixed reproduction pipelines.

mod reproduce;
mod sweep;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NetworkScenario;

pub use reproduce::{
    reproduce, table_pipeline, Check, FigureReproduction, Reproduction, TableReproduction, Target,
    EQUILIBRIUM_TOL, FIG2_BATCHES, FIG_REALIZATIONS, FIG_SEED, POWER_TOL, PROB_EPSILON,
    TABLE_EPSILON, TREND_SLACK, UTILITY_TOL,
};
pub use sweep::{
    realization_seed, run_sweep, Evaluation, RealizationRecord, SweepMode, SweepResult, SweepRow,
    SweepSpec, CSV_HEADER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    LowInterference,
    HighInterference,
}

/// Half-open interval `(lo, hi]`.
pub type Interval = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGeneratorSpec {
    pub regime: Regime,
    pub num_users: usize,
    pub num_channels: usize,
    pub seed: u64,
    pub direct_gain_range: Interval,
    pub cross_gain_range: Interval,
    pub noise_range: Interval,
    /// Multiply every gain by an independent unit-mean exponential
    /// (squared magnitude of a unit-variance complex Gaussian).
    pub fading: bool,
    pub p_max: f64,
    pub p_mask: f64,
}

impl ScenarioGeneratorSpec {
    pub fn new(regime: Regime, num_users: usize, num_channels: usize, seed: u64) -> Self {
        let cross = match regime {
            Regime::LowInterference => (0.0, 0.01),
            Regime::HighInterference => (0.0, 1.0),
        };
        ScenarioGeneratorSpec {
            regime,
            num_users,
            num_channels,
            seed,
            direct_gain_range: (0.0, 0.1),
            cross_gain_range: cross,
            noise_range: (0.0, 0.01),
            fading: true,
            p_max: 1.0,
            p_mask: 1.0,
        }
    }

    /// 8 users on 64 sub-channels, the size of the Monte-Carlo experiments.
    pub fn experiment_size(regime: Regime, seed: u64) -> Self {
        Self::new(regime, 8, 64, seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ScenarioGeneratorSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_channels == 0 {
            return Err(Error::invalid(
                "generator needs at least one user and channel",
            ));
        }
        for (name, (lo, hi)) in [
            ("direct_gain_range", self.direct_gain_range),
            ("cross_gain_range", self.cross_gain_range),
            ("noise_range", self.noise_range),
        ] {
            if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} = ({lo}, {hi}] must satisfy 0 <= lo < hi"
                )));
            }
        }
        if !(self.p_max > 0.0 && self.p_mask > 0.0) {
            return Err(Error::invalid("p_max and p_mask must be positive"));
        }
        Ok(())
    }
}

fn draw_open_low(rng: &mut ChaCha8Rng, (lo, hi): Interval) -> f64 {
    loop {
        let u: f64 = rng.random();
        let v = hi - u * (hi - lo);
        if v > lo {
            return v;
        }
    }
}

fn fade(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let f: f64 = rng.sample(Exp1);
        if f > 0.0 {
            return f;
        }
    }
}

/// Draw a scenario; identical specs give identical scenarios.
pub fn generate_scenario(spec: &ScenarioGeneratorSpec) -> Result<NetworkScenario<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (m, k) = (spec.num_users, spec.num_channels);
    let mut gain = Vec::with_capacity(m * m * k);
    for j in 0..m {
        for i in 0..m {
            let range = if i == j {
                spec.direct_gain_range
            } else {
                spec.cross_gain_range
            };
            for _ in 0..k {
                let mut g = draw_open_low(&mut rng, range);
                if spec.fading {
                    g *= fade(&mut rng);
                }
                gain.push(g);
            }
        }
    }
    let noise = (0..m * k)
        .map(|_| draw_open_low(&mut rng, spec.noise_range))
        .collect();
    NetworkScenario::from_flat(m, k, gain, noise, vec![spec.p_max; m], vec![spec.p_mask; k])
}

// Rows are h_{ab}: gain from transmitter a to receiver b, channels 1..6.
const TABLE1_GAINS: [[[f64; 6]; 3]; 3] = [
    [
        [20.52, 2.0, 2.08, 10.56, 0.44, 1.6],
        [4.91, 4.97, 3.95, 3.94, 2.95, 5.95],
        [7.9, 5.97, 2.97, 4.92, 1.93, 6.94],
    ],
    [
        [0.92, 0.94, 0.95, 0.92, 0.95, 0.99],
        [2.44, 26.32, 23.2, 3.64, 3.92, 0.68],
        [0.91, 0.96, 0.99, 0.99, 0.934, 0.95],
    ],
    [
        [0.91, 0.95, 0.98, 0.98, 0.93, 0.96],
        [0.93, 0.96, 0.90, 0.96, 0.98, 0.97],
        [3.6, 24.0, 6.0, 1.6, 34.0, 40.0],
    ],
];

const TABLE1_NOISE: [[f64; 6]; 3] = [
    [2.2, 0.26, 4.1, 3.06, 0.02, 0.02],
    [8.24, 0.08, 0.18, 0.08, 0.04, 0.06],
    [0.22, 0.26, 4.08, 1.06, 0.02, 0.02],
];

/// The 3-user, 6-channel reference network with `p_max = 1 W` and
/// `p_mask = 0.5 W` on every channel.
pub fn table1_scenario() -> NetworkScenario<f64> {
    NetworkScenario::from_fn(
        3,
        6,
        |j, i, k| TABLE1_GAINS[j][i][k],
        |i, k| TABLE1_NOISE[i][k],
        vec![1.0; 3],
        vec![0.5; 6],
    )
    .expect("reference network is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{check_convergence, check_uniqueness, interference_upper_bound};
    use crate::model::UncertaintySpec;

    #[test]
    fn table1_constants() {
        let scn = table1_scenario();
        assert_eq!((scn.num_users(), scn.num_channels()), (3, 6));
        assert_eq!(scn.gain(0, 0, 0), 20.52);
        assert_eq!(scn.noise(1, 0), 8.24);
        assert_eq!(scn.gain(1, 2, 4), 0.934);
        assert_eq!(scn.gain(2, 2, 5), 40.0);
        assert_eq!(scn.p_max(), &[1.0; 3]);
        assert_eq!(scn.p_mask(), &[0.5; 6]);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = ScenarioGeneratorSpec::new(Regime::LowInterference, 4, 8, 99);
        assert_eq!(
            generate_scenario(&spec).unwrap(),
            generate_scenario(&spec).unwrap()
        );
        assert_ne!(
            generate_scenario(&spec).unwrap(),
            generate_scenario(&spec.with_seed(100)).unwrap()
        );
    }

    #[test]
    fn draws_respect_intervals_without_fading() {
        let mut spec = ScenarioGeneratorSpec::new(Regime::HighInterference, 5, 16, 3);
        spec.fading = false;
        let scn = generate_scenario(&spec).unwrap();
        for j in 0..5 {
            for i in 0..5 {
                for k in 0..16 {
                    let g = scn.gain(j, i, k);
                    let (lo, hi) = if i == j {
                        spec.direct_gain_range
                    } else {
                        spec.cross_gain_range
                    };
                    assert!(g > lo && g <= hi);
                }
            }
        }
        for i in 0..5 {
            for k in 0..16 {
                assert!(scn.noise(i, k) > 0.0 && scn.noise(i, k) <= 0.01);
            }
        }
    }

    #[test]
    fn rejects_bad_intervals() {
        let mut spec = ScenarioGeneratorSpec::new(Regime::LowInterference, 2, 2, 0);
        spec.noise_range = (0.1, 0.1);
        assert!(generate_scenario(&spec).is_err());
        spec.noise_range = (-1.0, 0.1);
        assert!(generate_scenario(&spec).is_err());
    }

    #[test]
    fn table1_is_high_interference() {
        let scn = table1_scenario();
        let nominal = UncertaintySpec::nominal(3, 6);
        let r = check_uniqueness(&scn, &nominal).unwrap();
        assert_eq!(r.uniqueness_holds, Some(false));
        let c = check_convergence(&scn, &nominal, &interference_upper_bound(&scn)).unwrap();
        assert_eq!(c.convergence_holds, Some(false));
    }
}
