//! Multi-branch virtual-resistance current control for a grid-connected
//! inverter, with Lyapunov/LMI certificates of input-to-state stability.
//!
//! * [`linalg`]: small dense symmetric matrices, Jacobi eigen-solver, block assembly.
//! * [`plant`]: dq-frame interface dynamics and the closed-loop current error.
//! * [`vr`]: scalar nonlinear elements, branches and banks.
//! * [`persidskii`]: Persidskii form, Lyapunov function, certificate checks.
//! * [`search`]: certificate search by projected subgradient ascent.
//! * [`sim`]: fixed-step RK4 simulation, scenarios, metrics, trajectory checks.

// NaN must fail validation, so negated comparisons are deliberate
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod persidskii;
pub mod plant;
pub mod rng;
pub mod search;
pub mod sim;
pub mod vr;

pub use error::{Error, Result};
pub use linalg::{block_assemble, is_neg_semidef, is_pos_def, sym_eig, Definiteness, EigResult, Mat};
pub use persidskii::{
    assemble_psi, iss_gain, lyapunov_gradient, lyapunov_value, theorem1_sampled_check, to_persidskii,
    verify_certificate, verify_certificate_at, IssCertificate, LyapunovSpec, Margins, PsiMode, Theorem1Config,
    Theorem1Report, VerificationReport,
};
pub use plant::{coupling_matrix, feedforward_v0, system_matrix, DqVec, GridParams};
pub use rng::SplitMix64;
pub use search::{search_certificate, SearchConfig, SearchReport};
pub use sim::{
    check_dissipation, check_iss_envelope, compute_metrics, integrate, scenario_random_resistance,
    scenario_voltage_pulse, Disturbance, Metrics, Scenario, Trajectory,
};
pub use vr::{classify_bank, VrBank, VrBranch, VrElement};
