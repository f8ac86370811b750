pub mod autodiff;
mod binio;
pub mod coreset;
pub mod data;
pub mod distill;
pub mod energy;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod langevin;
pub mod models;
pub mod scalar;
pub mod seed;
pub mod tensor;
pub mod train;
pub mod trajectory;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Graph64 = autodiff::Graph<f64>;
pub type ParamVector64 = models::ParamVector<f64>;
pub type LabeledDataset64 = data::LabeledDataset<f64>;
pub type SyntheticSet64 = coreset::SyntheticSet<f64>;
pub type Trajectory64 = trajectory::Trajectory<f64>;
pub type Buffer64 = trajectory::Buffer<f64>;

pub type Tensor32 = Tensor<f32>;
pub type Graph32 = autodiff::Graph<f32>;
pub type ParamVector32 = models::ParamVector<f32>;
pub type LabeledDataset32 = data::LabeledDataset<f32>;
pub type SyntheticSet32 = coreset::SyntheticSet<f32>;
pub type Trajectory32 = trajectory::Trajectory<f32>;
pub type Buffer32 = trajectory::Buffer<f32>;
