pub mod adapters;
pub mod annotation;
pub mod formulations;
pub mod graph;
pub mod interpretation;
pub mod metrics;
pub mod model_client;
pub mod pipeline;
pub mod svg;
