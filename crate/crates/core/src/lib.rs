//! LWE-based secure remote password protocol.

pub mod credstore;
pub mod harness;
pub mod modq;
pub mod params;
pub mod reconcile;
pub mod regev;
pub mod sampler;
pub mod srp;
pub mod wire;
