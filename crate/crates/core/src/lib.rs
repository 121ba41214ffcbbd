pub mod bounds;
pub mod control;
pub mod harness;
pub mod memory;
pub mod photonics;
pub mod qstate;
pub mod tomography;
