//! The HCL-Net: layers with hand-written backward passes, the penalty loss
//! and the training loop.

pub mod hcl;
pub mod loss;
pub mod tensor;
pub mod train;
pub mod window;

pub use hcl::{HclNet, HclShape, NetworkParams};
pub use loss::{gradient, loss_and_gradient, penalty_loss, BeamNet, LossBreakdown};
pub use tensor::Tensor;
pub use train::{train, TrainHyper, TrainReport};
pub use window::{map_input, HistoryWindow, TrainingExample};
