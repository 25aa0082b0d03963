//! Laplacian and Schroedinger eigenmaps on kNN graphs, with barrier
//! potentials, vector angle classification and a UCI benchmark protocol.

pub mod benchmark;
pub mod classify;
pub mod data;
pub mod eigensolve;
pub mod embedding;
pub mod error;
pub mod graph;
pub mod operator;
pub mod sparse;

pub use benchmark::{BenchConfig, BenchResult};
pub use classify::{Label, VacModel};
pub use data::{LabeledDataset, PointCloud, TrainSplit};
pub use embedding::{EmbedParams, Embedding};
pub use eigensolve::{smallest_eigs, EigenResult, Method, SolverOptions};
pub use error::{Error, Result};
pub use graph::{EdgeSet, WeightedGraph};
pub use operator::{Potential, PotentialSpec, SchroedingerParams};
pub use sparse::SparseSym;
