//! Deterministic core of a paired 3D-editing dataset factory and its
//! evaluation protocol: multi-view 2D→3D mask lifting, mask-guided latent
//! repainting, a desk-scale dual-guidance editing transformer, and the 3D/2D
//! metric suite used to score edited assets.
//!
//! Everything here is seeded and reproducible: no wall clocks, no thread-count
//! dependence in any reported number.

pub mod dedup;
pub mod editformer;
pub mod geom;
pub mod maskvote;
pub mod metrics3d;
pub mod render2d;
pub mod repaint;

mod sum;

pub use sum::pairwise_sum;
