//! Topological language for RNA pseudoknot structures.
//!
//! A pseudoknot structure is a diagram over a linear backbone. Collapsing the
//! backbone yields a fatgraph whose genus classifies the structure. The dual
//! unicellular map is sliced down to a planar tree, and every such sequence of
//! slicings (a blueprint) is encoded as a noncrossing diagram with arc labels
//! in F_2^r, a lambda-structure. Lambda-structures are generated unambiguously
//! by a labeled context-free grammar, which carries a stochastic model for
//! training, scoring and Boltzmann sampling.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod diagram;
pub mod fatgraph;
pub mod grammar;
pub mod lambda;
pub mod perm;
pub mod scfg;
pub mod unicellular;

pub use diagram::{Base, Diagram, IndexMap, Sequence};
pub use fatgraph::{Fatgraph, GenusReport};

pub use lambda::{Label, LambdaStructure, LambdaTree};
pub use perm::Permutation;
pub use unicellular::{Blueprint, UnicellularMap};
