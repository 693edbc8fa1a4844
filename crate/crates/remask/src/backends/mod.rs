//! Concrete model backends: deterministic toy models for desk-scale work,
//! JSON/HTTP clients for remote inference, a response cache, and the mock
//! protocol server.

pub mod cache;
pub mod counting;
pub mod gradcheck;
pub mod mock;
pub mod remote;
pub mod restoring;
pub mod toy_mlm;
pub mod toy_victim;

pub use cache::ResponseCache;
pub use counting::{CountingGradientVictim, CountingMaskedLm, CountingVictim};
pub use mock::{MockServerHandle, MockState};
pub use remote::{RemoteBackendConfig, RemoteClient, RemoteMaskedLm, RemoteVictim};
pub use restoring::RestoringMaskedLm;
pub use toy_mlm::ToyMaskedLm;
pub use toy_victim::{ToyVictimModel, ToyVictimTrainConfig};
