//! Few-shot refinement of class text embeddings.
//!
//! Given a handful of exemplar image embeddings for a class and a starting
//! text embedding, [`optim::fit_class`] optimizes a single learnable embedding
//! that stays aligned with the images while keeping its place in the text
//! space: PCA over a local neighborhood of coarse (broader) and fine (sibling)
//! words splits the space into a high-variance coarse subspace, where the
//! embedding is pulled toward its category, and a low-variance fine subspace,
//! where it is pushed away from near-miss classes.
//!
//! ```no_run
//! use subspace_embed::fixtures::{collapse, collapse_config};
//! use subspace_embed::objective::LossWeights;
//! use subspace_embed::optim::fit_class;
//!
//! let f = collapse();
//! let t = &f.targets[0];
//! let report = fit_class(&t.exemplars, &t.z0, &t.spec, &f.vocab, &collapse_config(LossWeights::default()))?;
//! println!("{:?}", report.final_loss());
//! # Ok::<(), subspace_embed::Error>(())
//! ```
//!
//! Modules, bottom up: [`emb`] vectors and cosine, [`linalg`] and [`subspace`]
//! PCA, [`neighborhood`] candidate selection, [`objective`] losses and
//! gradients, [`encoder`] text-encoder stand-ins, [`optim`] the optimizer and
//! sequential driver, [`eval`] metrics, [`io`] file formats, [`cli`] the
//! `subembed` binary, and [`fixtures`] deterministic synthetic data.

pub mod cli;
pub mod emb;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod io;
pub mod linalg;
pub mod neighborhood;
pub mod objective;
pub mod optim;
pub mod subspace;

pub use error::{Error, Result};
