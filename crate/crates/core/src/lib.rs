//! Split inference of a small MNIST CNN between a data owner, who keeps the
//! image and the secret key, and a data scientist, who keeps the model and
//! evaluates its tail under CKKS.
//!
//! Plaintext layers are generic over the scalar via [`Real`]; the encrypted
//! path and the flow use `f64`.

pub mod cli;
pub mod error;
pub mod flow;
pub mod he;
pub mod mnist;
pub mod model;
pub mod privacy;
pub mod report;
pub mod selftest;
pub mod tensor;

pub use duetlite_ckks::Real;
pub use error::{DuetError, Result};
pub use flow::{compare_splits, direct_inference, run_flow, run_flow_with, FlowConfig, Session};
pub use he::encrypted_forward;
pub use mnist::{load_mnist, MnistImage};
pub use model::{
    chain_for_depth, gen_weights, required_depth, split_at, split_model, Layer, LayerShape, LayerSpec, Model, Model32,
    Model64, SplitModel, SplitPoint,
};
pub use report::{ComparisonReport, FlowReport, FlowRow, OutputFormat, Processor};
pub use tensor::{Conv2d, Dense, Tensor, Tensor32, Tensor64};
