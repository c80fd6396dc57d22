//! Rate-distortion training.

pub mod checkpoint;
pub mod dataset;
pub mod loss;
pub mod optim;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use dataset::{list_images, load_image, rgb_to_tensor, save_image, tensor_to_rgb, PatchSource};
pub use loss::{rd_loss, rd_objective, Metric, RdTerms, MSE_LAMBDAS, MS_SSIM_LAMBDAS};
pub use optim::{clip_grad_norm, learning_rate, Adam, AdamConfig};
pub use trainer::{StepLog, TrainConfig, TrainSummary, Trainer};
