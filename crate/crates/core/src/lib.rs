//! Equal-measure partitions of compact metric spaces and moment-matched
//! cubature rules for kernel integrals of the form
//!
//! ```text
//!     ∫_X Φ(ρ(x, y)) g(y) dμ(y)
//! ```
//!
//! The pipeline is:
//!
//! 1. [`geometry`]: the metric-measure space (unit sphere with geodesic
//!    distance, Euclidean ball) and a fine weighted point cloud standing in
//!    for μ.
//! 2. [`net_partition`]: greedy δ-net, index-tie-broken Voronoi cells, mass
//!    transfers and splitting into `N` cells of mass `1/N`; Besicovitch-style
//!    variable-radius cells for the Euclidean pipeline.
//! 3. [`function_classes`]: piecewise polynomial kernel profiles and the
//!    finite-dimensional polynomial spaces they are piecewise members of.
//! 4. [`moment_match`]: per-cell atomic rules with at most `r + 2`
//!    nonnegative atoms reproducing all moments of the basis.
//! 5. [`discretizer`]: global rules (plain, signed density, Euclidean with
//!    `L¹` density) and the Monte Carlo baseline.
//! 6. [`error_harness`]: sup-error measurement on evaluation nets, decay
//!    slope fitting and the theoretical constants.

pub mod discretizer;
pub mod error;
pub mod error_harness;
pub mod function_classes;
pub mod geometry;
pub mod kdtree;
pub mod moment_match;
pub mod net_partition;
pub mod nnls;
pub mod quadrature;
pub mod seeds;
mod summation;

pub use discretizer::{
    apply, build_euclidean, build_plain, build_signed, monte_carlo, CubatureRule, DensityField,
    NormKind, RuleMethod,
};
pub use error::{Error, Result};
pub use function_classes::{ball_basis, sphere_basis, BasisSet, KernelProfile, PiecewisePolynomial};
pub use geometry::{sample_uniform, SpaceKind, SpaceSpec, WeightedPointCloud};
pub use moment_match::{compress, AtomicRule, CompressMethod};
pub use net_partition::{partition_space, Cell, Partition, PartitionParams};
