//! Balanced variance-component ANOVA.
//!
//! Computes ANOVA decompositions for balanced one-way, randomized complete
//! block, two-way and split-plot designs with any mix of fixed and random
//! effects, derives the exact law of every sum of squares by compounding
//! scaled noncentral chi-square distributions, and checks those laws with a
//! seeded Monte Carlo harness.
//!
//! ```
//! use vcomp::{anova, theory, Design, Factor, ModelParams, ModelSpec};
//!
//! let spec = ModelSpec::new(Design::OneWay, vec![Factor::random("A", 3)], 4, None)?;
//! let params = ModelParams::new(0.0, 1.0).with_variance("A", 2.0);
//!
//! let laws = theory::ss_laws(&spec, &params)?;
//! let a = &laws.get("A").unwrap().law; // 9 · χ²(2)
//! assert_eq!((a.scale(), a.df()), (9.0, 2));
//!
//! let power = anova::power(&spec, &params, 0.05)?;
//! assert!(power[0].power > 0.05);
//! # Ok::<(), vcomp::Error>(())
//! ```

// `!(x > 0.0)` rejects NaN along with nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anova;
pub mod designs;
pub mod distributions;
pub mod error;
pub mod simulation;
pub mod special;
pub mod theory;

mod quadrature;

pub use anova::{AnovaRow, AnovaTable};
pub use designs::{BalancedDataset, Design, EffectKind, Factor, ModelParams, ModelSpec, RawRecord};
pub use distributions::{compound, ScaledF, ScaledNoncentralChiSquare};
pub use error::{Error, Result};
pub use simulation::{SeedPolicy, SimReport};
pub use theory::SsLawSet;
