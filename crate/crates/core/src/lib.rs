//! Provably correct minimal abductive explanations for feedforward ReLU
//! classifiers, with lower bounds on the minimum explanation size.
//!
//! An *explanation* of a classification is a set of input features which,
//! fixed to their values, force the classifier's decision whatever the other
//! features do. This crate
//!
//! - evaluates layered affine/ReLU networks ([`nn`]),
//! - decides explanation queries exactly with a built-in verifier
//!   ([`verifier`]),
//! - shrinks the feature set to a minimal explanation while bounding the
//!   minimum one from below via contrastive singletons and pairs
//!   ([`explain`], [`duality`]),
//! - and repeats all of it over bundles of features ([`bundles`]).
//!
//! ```
//! use std::collections::BTreeSet;
//! use abdux::{explain, fixtures, ClassificationInstance};
//!
//! let net = fixtures::running_example();
//! let inst = ClassificationInstance::new(&net, vec![1.0, 1.0, 1.0]).unwrap();
//! assert_eq!(net.forward(&inst.input).unwrap(), vec![15.0, -4.0]);
//!
//! let third: BTreeSet<usize> = [2].into();
//! assert!(explain::check_minimal(&net, &inst, &third).unwrap());
//! ```

pub mod bundles;
pub mod duality;
pub mod error;
pub mod explain;
pub mod fixtures;
pub mod nn;
pub mod relevance;
pub mod verifier;

pub use error::{Error, Result};
pub use explain::{ExplainConfig, Explainer, ExplanationResult, LowerBoundResult, UbVariant};
pub use nn::{ClassificationInstance, FeatureDomain, InputSpace, Layer, Network};
pub use verifier::{FeatureConstraint, Query, Verdict, Verifier, VerifierConfig};
