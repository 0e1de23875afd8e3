pub mod audit_random;
pub mod bulletin;
pub mod clock;
pub mod codec;
pub mod crypto;
pub mod ops;
pub mod pricing;
pub mod protocol;
pub mod rangeproof;
