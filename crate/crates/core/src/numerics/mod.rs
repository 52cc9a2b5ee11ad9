//! Tensors, dense kernels, losses and the optimizer.

pub mod adam;
pub mod gradcheck;
pub mod kernels;
pub mod loss;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{
    central_difference, finite_diff_grad_check, finite_diff_grad_check_sampled, relative_error, GradCheckReport,
};
pub use kernels::{
    causal, layer_norm, layer_norm_backward, linear, linear_backward, masked_softmax, relu, relu_backward,
    LayerNormCache, LN_EPS,
};
pub use loss::{bce_term, stable_bce_with_logits};
pub use tensor::{check_finite, Tensor};
