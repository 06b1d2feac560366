//! Algorithms for comparing network embeddings against graph structure.
//!
//! The crate covers the whole analysis chain: graph loading and synthetic
//! generators ([`graph`]), per-node centrality signatures ([`metrics`]),
//! random-walk embeddings ([`embed`]), regression of embedding distances on
//! metric differences ([`regress`]), ego-network clustering and distance
//! profiles ([`structure`]), neighbor rankings scored by NDCG ([`ranking`])
//! and exact t-SNE ([`projection`]).

pub mod embed;
pub mod error;
pub mod format;
pub mod graph;
pub mod metrics;
pub mod projection;
pub mod ranking;
pub mod regress;
pub mod structure;

pub use embed::{embed, EmbeddingMatrix, ModelKind, ModelSpec, Node2vecParams, Struc2vecConfig, WalkConfig};
pub use error::{Error, Result};
pub use graph::{largest_component, Graph, NodeId, SyntheticSpec};
pub use metrics::{compute_metrics, detect_communities, normalize_metrics, CommunityAssignment, Metric, MetricsTable};
