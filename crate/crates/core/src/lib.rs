//! Postselected weak measurements: exact simulation, weak values, the
//! approximation tiers of the conditional detector output, and the extremal
//! outputs reachable over preparations and postselections.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod optimizer;
pub mod oracle;
pub mod simulator;
pub mod states;
pub mod weak_values;

pub use error::{Error, Result};
pub use linalg::{
    hermitian_eig, partial_trace, tensor_product, unitary_exp, ComplexMatrix, HermitianEigen, Subsystem, Tolerances,
    C64, MAX_COMBINED_DIM,
};
pub use optimizer::{
    amplifying_detector_state, extremal_outputs, optimal_coupling, standardize, tradeoff_bound, AmplificationPlan,
    CouplingOptimum, DetectorMoments, ExtremumResult, Rescale, TradeoffBound, WeakValuePoint,
};
pub use oracle::ScanConfig;
pub use simulator::{conditional_mean, validity_report, ConditionalOutput, ProbabilityReport, ValidityReport};
pub use states::{DensityMatrix, MeasurementSetup, Observable, PovmElement};
pub use weak_values::{CanonicalWeakValues, WeakValueTriple};
