pub mod circle;
pub mod detect;
pub mod error;
pub mod io;
pub mod kde;
pub mod local;
pub mod partition;
pub mod pipeline;
pub mod quad;
pub mod sim;
pub mod spline;
