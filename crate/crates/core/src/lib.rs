//! Spectral sparsification of dynamic graph streams from linear sketches.
//!
//! A stream of edge insertions and deletions is folded into a [`SketchStack`]
//! whose state depends only on the final graph. Decoding the stack yields a
//! weighted subgraph whose Laplacian approximates the input spectrally.
//!
//! ```
//! use spectral_sketch::{decode, new_stack, EdgeKey, EdgeUpdate, GlobalParams, Seed, Variant};
//!
//! let params = GlobalParams::new(6, 0.5, Variant::N32, None).with_qjl(16);
//! let mut stack = new_stack(&params, Seed::from_u64(1));
//! for (u, v) in [(0, 1), (1, 2), (0, 2)] {
//!     stack.apply_update(EdgeUpdate::insert(EdgeKey::new(u, v).unwrap())).unwrap();
//! }
//! let out = decode(&params, &stack, Seed::from_u64(2)).unwrap();
//! assert_eq!(out.sparsifier.edge_count(), 3);
//! ```

pub mod decode;
pub mod exact_oracles;
pub mod graph_core;
pub mod prg;
pub mod resistance;
pub mod sketches;

pub use decode::{
    ball_carving, build_tree, decode, gamma_schedule, new_stack, DecodeError, DecodeOutput, DecodeStats, Decoder,
    GlobalParams, Partitioning, RecursionTree, TreeNode, Variant,
};
pub use exact_oracles::{exact_effective_resistance, is_spectral_sparsifier, relative_spectrum, Resistance};
pub use graph_core::{generators, laplacian, DemandVector, EdgeKey, Graph, GraphError, VertexId, WeightedGraph};
pub use prg::{PrgChain, Seed};
pub use resistance::{
    build_embedding, contract, potentials, solve_laplacian, CoarseSparsifier, Contraction, ResistanceEmbedding,
    SolveError,
};
pub use sketches::{EdgeUpdate, SketchConfig, SketchError, SketchStack};
