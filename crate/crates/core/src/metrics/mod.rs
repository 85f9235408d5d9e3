//! Evaluation metrics and the finite-difference gradient checker.

mod eval;
pub mod gradcheck;
mod ssim;

pub use eval::{evaluate, evaluate_with, EvalReport, FrameScore};
pub use gradcheck::{finite_diff_check, finite_diff_check_at, relative_error};
pub use ssim::{ssim, ssim_windowed, SsimConsts};
