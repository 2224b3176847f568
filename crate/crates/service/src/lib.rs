//! Install pipeline, session handling and HTTP API on top of `cai-core`.

pub mod cache;
pub mod http;
pub mod install;
pub mod pipeline;
