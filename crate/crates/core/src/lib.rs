//! RIS-assisted integrated sensing and communication with split SO/ISAC
//! bands: channel models, NOMA metrics, the delay CRB and its alternating
//! minimization over receive beamforming, bandwidth split and RIS phases.

pub mod channel;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod optimizer;
pub mod scenario;
pub mod sdp;

pub use channel::{ChannelSet, RisPhase};
pub use error::{Error, Result};
pub use geometry::{ArrayLayout, FieldRegime, Position};
pub use harness::{load_config, run_sweep, write_results, RunRecord};
pub use linalg::{CMatrix, CVector, HermEig, C64};
pub use metrics::{BandSplit, FimScaling, InterferenceSum, LinkBudget};
pub use optimizer::{run_ao, AoTrace, DesignVariables, Scheme};
pub use scenario::{AlgorithmKnobs, ScenarioConfig, SweepSpec, SweepVariable};
pub use sdp::{SdpProblem, SdpSolution, SdpStatus};
