//! Carleman weight `φ_λ(t) = e^{2(T-t+a)^λ}`, the associated substitution
//! and term-by-term evaluation of the two weighted estimates.

mod audit;
mod params;
mod quadrature;
mod terms;
mod transform;

pub use audit::{proof_step_audit, AuditCheck, AuditReport};
pub use params::{default_shift, lambda_threshold, rho, CarlemanParams};
pub use quadrature::WeightedTime;
pub use terms::{
    first_estimate_terms, identity_360_residual, quasi_estimate_terms,
    quasi_estimate_terms_with_c1, BoundaryMode, EstimateTerms, QuasiEstimateReport, Side, Term,
};
pub use transform::{carleman_transform, derivative_identity_defect, inverse_transform};
