//! Closed-form results for the Gaussian feature model, numerical oracles
//! that check them, and exact enumeration on a small discrete causal model.

mod gaussian;
mod oracle;
mod tables;
mod toy;

pub use gaussian::{
    c_prime, cmid_closed_form_2f, cmid_closed_form_3f, erm_closed_form, gaussian_cmi, monte_carlo_cmi, monte_carlo_mse,
    population_mse, sigma_ratio_gap, simple_erm, smallness_limit, thm1_check, GaussParams, LinearSolution, Provenance,
    TheoryConfig, Thm1Check,
};
pub use oracle::{constrained_oracle, golden_section, Quadratic};
pub use tables::{
    fig4_tables, fig5_table, max_rel_gap, random_params_2f, random_params_3f, verification_sweep, verify, BoundaryRow,
    PointRow, RegularizationRow, VerificationRow, C_RANGE, ETA_RANGE, MU_RANGE, SIGMA_RANGE,
};
pub use toy::{check_assumptions, mip_enumerate, AssumptionReport, Candidate, CandidateReport, Cell, MipResult, ToyCausalModel};
