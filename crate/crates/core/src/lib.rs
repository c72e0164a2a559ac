pub mod io;
pub mod metrics;
pub mod nncore;
pub mod taxonomy;
pub mod vae;
pub mod synthetic;
pub mod sampler;
pub mod captioner;
pub mod tcav;
pub mod pipeline;
