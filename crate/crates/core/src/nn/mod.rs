//! Numeric kernels shared by the acoustic model and the vocoder.

mod attention;
mod conv;
mod ops;

pub use attention::{
    masked_attention_probs, masked_mhsa, mhsa_streaming_step, AttentionWeights, AttnCache,
    MASK_LOGIT,
};
pub use conv::{
    conv1d, conv1d_streaming_step, nearest_upsample, nearest_upsample_tm, Conv1d, ConvCache,
    ConvSpec, Padding,
};
pub use ops::{
    leaky_relu_inplace, linear, relu_inplace, softmax_inplace, softmax_rows, tanh_inplace,
    LayerNorm, Linear,
};
