//! Egomotion estimation from event-camera streams with networks of Time
//! Difference Encoder (TDE) units.
//!
//! Pipeline: [`events`] streams feed a [`network`] of LR/RL tuned TDE units,
//! whose output spikes the [`readout`] integrates into a signed activity
//! trace. [`metrics`] scores that trace against ground-truth yaw with the
//! average relative rotation error. [`analog`] models the CMOS TDE synapse in
//! closed form.

pub mod analog;
pub mod events;
pub mod metrics;
pub mod network;
pub mod readout;
pub mod stats;
pub mod tde;
