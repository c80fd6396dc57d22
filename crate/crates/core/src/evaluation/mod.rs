//! Quality metrics, BD-rate, receptive fields, complexity and latency.

pub mod bdrate;
pub mod complexity;
pub mod erf;
pub mod latency;
pub mod metrics;

pub use bdrate::{bd_rate, RdCurve, RdPoint, RdRow};
pub use complexity::{count_params_flops, Complexity};
pub use erf::{effective_receptive_field, ErfMap};
pub use latency::{profile_latency, LatencyProfile};
pub use metrics::{ms_ssim, ms_ssim_var, mse, psnr, psnr_from_mse};
