pub mod cli;
pub mod dashhls;
pub mod isobmff;
pub mod mpegts;
pub mod nalio;
pub mod serve;
pub mod synth;
