//! Learning regularization parameters for tomographic reconstruction by
//! differentiating through an unrolled projected-gradient solver.
//!
//! The crate is organized bottom-up:
//!
//! - [`grid`]: pixel grids, images, sinograms and the quadrature inner product.
//! - [`phantom`]: Shepp–Logan phantoms, randomized ensembles and noise.
//! - [`radon`]: the discrete parallel-beam Radon transform and its adjoint.
//! - [`fraclap`]: spectral fractional powers of the Dirichlet Laplacian.
//! - [`regularizer`]: no regularization, smoothed total variation and the
//!   fractional Laplacian, behind one interface.
//! - [`solver`]: projected gradient descent with Armijo line search.
//! - [`bonnet`]: sensitivities, the outer loss, training and testing.
//! - [`metrics`]: MSE, PSNR and SSIM.
//!
//! ```
//! use bonnet_core::{grid::Grid, phantom::shepp_logan, radon::RadonOperator};
//!
//! let grid = Grid::new(16).unwrap();
//! let op = RadonOperator::with_default_beamlets(grid, 8).unwrap();
//! let sino = op.apply(&shepp_logan(grid)).unwrap();
//! assert_eq!(sino.n_theta(), 8);
//! ```

pub mod bonnet;
pub mod error;
pub mod fraclap;
pub mod grid;
pub mod metrics;
pub mod phantom;
pub mod radon;
pub mod regularizer;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};

// The book's snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grid.md")]
    mod grid {}
    #[doc = include_str!("../../../book/src/radon.md")]
    mod radon {}
    #[doc = include_str!("../../../book/src/fractional.md")]
    mod fractional {}
    #[doc = include_str!("../../../book/src/regularizers.md")]
    mod regularizers {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
