//! Network Polya contagion: urn-process simulation, the one-step
//! infection-curing exposure game and its saddle-point solver, and a Monte
//! Carlo harness comparing equilibrium and uniform allocation policies.

pub mod error;
pub mod experiment;
pub mod exposure;
pub mod graph;
pub mod report;
pub mod simplex;
pub mod solver;
pub mod urn;

pub use error::{PolyaError, Result};
pub use exposure::{
    coefficients, expected_exposure_exact, expected_exposure_mc, gradient_check, node_exposure,
    ExposureCoefficients, ExposureEvaluation, ExposureGame, McEstimate, OutcomeMatrices, ENUMERATION_CAP,
};
pub use experiment::{
    case_policy, run_case, run_figure4, CurveRecord, ExperimentConfig, Figure4Config, InfectionCurve, PolicyCase,
    PolicyMode,
};
pub use graph::{parse_network, BuiltinKind, Network, NetworkDocument, SelfAdjacency};
pub use simplex::project_simplex;
pub use solver::{
    restricted_gap, solve_equilibrium, solve_equilibrium_from, solve_saddle, Equilibrium, GapCertificate, Method,
    SolverOptions, StepRule,
};
pub use urn::{network_step, simulate_trajectory, trial_rng, ClassicalUrn, PolicyPair, Trajectory, UrnState};
