//! Document graph: node vectors, attention context for mention pairs, edge
//! features and their per-family linear reductions.

mod attention;
mod edges;
mod nodes;
mod structure;

pub use attention::{mm_context, MmContext};
pub use edges::{build_edges, entity_pair_features, EdgeGraph};
pub use nodes::{construct_nodes, NodeSet};
pub use structure::{
    distance_bucket, edge_structure, existence_mask, full_structure, graph_dump, mention_distance,
    DumpNode, DumpRecord, EdgeFamily, EdgeSpec, NodeKind, NodeLayout, DISTANCE_BUCKETS,
};

use rand::Rng;

use crate::autodiff::{ParamId, ParamStore};

/// Sizes and switches of the graph layers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphOptions {
    /// Width of the contextual word vectors.
    pub word_dim: usize,
    pub node_type_dim: usize,
    pub distance_dim: usize,
    pub edge_dim: usize,
    pub node_types: bool,
    pub mm_context: bool,
    pub distances: bool,
    /// Reduction layers to allocate, indexed by [`EdgeFamily::index`].
    pub families: [bool; 6],
}

#[derive(Clone, Copy, Debug)]
pub struct GraphParams {
    pub options: GraphOptions,
    pub types: Option<ParamId>,
    pub mention_distance: Option<ParamId>,
    pub sentence_distance: Option<ParamId>,
    pub reductions: [Option<ParamId>; 6],
}

impl GraphParams {
    pub fn new<R: Rng>(store: &mut ParamStore, options: GraphOptions, rng: &mut R) -> Self {
        let types = options
            .node_types
            .then(|| store.add_embedding("node_types", 3, options.node_type_dim, rng));
        let (mention_distance, sentence_distance) = if options.distances {
            (
                Some(store.add_embedding("distance.mention", DISTANCE_BUCKETS, options.distance_dim, rng)),
                Some(store.add_embedding("distance.sentence", DISTANCE_BUCKETS, options.distance_dim, rng)),
            )
        } else {
            (None, None)
        };
        let mut params = Self {
            options,
            types,
            mention_distance,
            sentence_distance,
            reductions: [None; 6],
        };
        for family in EdgeFamily::ALL {
            if options.families[family.index()] {
                let fan_in = params.feature_dim(family);
                params.reductions[family.index()] =
                    Some(store.add_weight(format!("reduce.{family}"), fan_in, options.edge_dim, rng));
            }
        }
        params
    }

    pub fn node_dim(&self) -> usize {
        self.options.word_dim + if self.options.node_types { self.options.node_type_dim } else { 0 }
    }

    /// Width of the raw feature `x_z` of a family.
    pub fn feature_dim(&self, family: EdgeFamily) -> usize {
        let o = &self.options;
        let dist = if o.distances { o.distance_dim } else { 0 };
        let pair = 2 * self.node_dim();
        match family {
            EdgeFamily::MM => pair + if o.mm_context { o.word_dim } else { 0 } + dist,
            EdgeFamily::SS => pair + dist,
            _ => pair,
        }
    }
}
