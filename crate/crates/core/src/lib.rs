#[cfg(feature = "native")]
pub mod dataset;
#[cfg(feature = "native")]
pub mod config;
pub mod grpo;
pub mod metrics;
pub mod pool;
pub mod response_format;
pub mod reward;
pub mod toolchain;
pub mod verilog_mini;

pub use verilog_mini::PpaMetrics;
