//! Bundled charts shared by the benchmarks.

pub const SENDER_RECEIVER: &str = include_str!("../../core/models/sender_receiver.pchart");
pub const RFID: &str = include_str!("../../core/models/rfid.pchart");
pub const HUBBLE: &str = include_str!("../../core/models/hubble.pchart");
pub const PUMP: &str = include_str!("../../core/models/pump.pchart");
