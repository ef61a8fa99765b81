//! Multi-objective contextual bandits ordered by a polyhedral preference cone,
//! under covariate shift.
//!
//! The crate provides the cone order and Pareto machinery ([`cone`], [`pareto`]),
//! the dyadic context partition ([`partition`]), the elimination policy
//! ([`policy`]), shift environments ([`environment`]), regret and bound
//! evaluation ([`analysis`]) and a configuration-driven runner ([`harness`]).

pub mod analysis;
pub mod cone;
pub mod environment;
pub mod harness;
pub mod pareto;
pub mod partition;
pub mod policy;
