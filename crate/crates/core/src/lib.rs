//! Predicts the morphosyntactic tag of an abbreviated word from the tags of
//! its sentence context, and expands the abbreviation to the matching
//! inflected form through a morphological dictionary.

pub mod corpus;
pub mod eval;
pub mod morphdict;
pub mod nn;
pub mod par;
pub mod synth;
pub mod tagset;
pub mod train;
