//! Trajectory persistence, dataset assembly and replay sampling.

mod dataset;
mod sampler;
mod trajectory;
mod transitions;

pub use dataset::Dataset;
pub use sampler::UniformSampler;
pub use trajectory::{Sample, Trajectory, TRAJECTORY_VERSION};
pub use transitions::{assemble, TransitionView};
