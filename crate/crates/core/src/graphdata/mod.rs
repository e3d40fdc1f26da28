//! Graph collections: loading, normalization, partitioning and episodes.

mod graph;
mod jsonl;
mod split;
mod synth;
mod tud;

pub use graph::{
    label_matrix, normalized_adjacency, row_normalize_features, Graph, GraphCollection,
    NodeLabel, Propagation,
};
pub use jsonl::{load_jsonl, parse_jsonl, write_jsonl};
pub use split::{partition_graphs, partition_sizes, sample_episode, EpisodeSplit, SplitRatios};
pub use synth::{synth_collection, SynthConfig};
pub use tud::{load_tudataset, TudOptions};
