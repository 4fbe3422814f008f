//! The stacked model: configuration, parameters, forward and backward passes.

mod config;
mod dense;
mod forward;
mod gradcheck;
mod params;

pub use config::{DropoutRates, Precision, RunConfig, Task};
pub use dense::dense_reference_forward;
pub use forward::{
    backward, batch_loss, cls_logits, forward, forward_cached, init_states, lm_logits, loss_and_grads, sample_loss,
    Dropout, ForwardCache, Sample, PAD_ID,
};
pub use gradcheck::{gradcheck_config, gradient_check, GradCheckReport, GroupError};
pub use params::{expected_param_count, LayerParams, ModelParams};
