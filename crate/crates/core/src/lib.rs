//! Non-cooperative power allocation over shared orthogonal sub-channels.
//!
//! Users (transmitter/receiver pairs) split a power budget across `K`
//! sub-channels and each one maximizes its own rate by water-filling against
//! the interference it sees. The robust variant plans against the largest
//! normalized interference in a symmetric relative interval, which reduces to
//! ordinary water-filling on an inflated floor.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the `f64`
//! aliases at the crate root are what the experiment harness and the CLI use.
//!
//! ```
//! use robust_iwf::{table1_scenario, run_iwfa, IterationConfig, UncertaintySpec, Schedule};
//!
//! let scn = table1_scenario();
//! let unc = UncertaintySpec::worst_case_uniform(3, 6, 3.0).unwrap();
//! let cfg = IterationConfig::new(Schedule::Sequential);
//! let report = run_iwfa(&scn, &unc, &cfg).unwrap();
//! assert!(report.converged);
//! ```

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod game;
pub mod model;
pub mod scalar;
pub mod waterfill;

pub use analysis::{
    check_convergence, check_uniqueness, evaluate_conditions, frobenius_norm,
    interference_upper_bound, operator_norm_l2, orthogonality_index, social_utility,
    spectral_radius, ConditionReport, InterferenceRatioMatrix, SquareMatrix,
};
pub use error::{Error, Result};
pub use experiments::{
    generate_scenario, run_sweep, table1_scenario, Evaluation, Regime, ScenarioGeneratorSpec,
    SweepMode, SweepResult, SweepRow, SweepSpec,
};
pub use game::{
    is_equilibrium, run_iwfa, EquilibriumReport, InitialProfile, IterationConfig, Schedule,
};
pub use model::{
    effective_interference, normalized_interference, user_utility, NetworkScenario, PowerProfile,
    RobustnessMode, UncertaintySpec,
};
pub use scalar::Scalar;
pub use waterfill::{best_response, verify_kkt, BestResponse};

/// Double-precision scenario.
pub type Scenario = model::NetworkScenario<f64>;
/// Double-precision power profile.
pub type Profile = model::PowerProfile<f64>;
/// Double-precision uncertainty description.
pub type Uncertainty = model::UncertaintySpec<f64>;
/// Double-precision equilibrium report.
pub type Report = game::EquilibriumReport<f64>;
/// Double-precision condition report.
pub type Conditions = analysis::ConditionReport<f64>;
/// Double-precision square matrix.
pub type Matrix = analysis::SquareMatrix<f64>;
