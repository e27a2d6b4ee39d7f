//! Discovery and disruption of recurring, context-dependent gate-sequence
//! error patterns in compiled quantum circuits.
//!
//! The offline half of the toolkit localizes segments of a compiled circuit
//! whose hardware error exceeds what a calibration-derived noise model
//! predicts ([`ddmin::discover`]), checks that the finding recurs across
//! calibration windows ([`patterns::verify`]) and stores verified templates
//! in a backend-specific [`patterns::PatternDb`]. The online half scans new
//! circuits for those templates and breaks each occurrence apart with
//! semantics-preserving commuting swaps ([`transform::disrupt`]).
//!
//! Real devices are replaced by [`hardware`], a seeded mock backend that adds
//! hidden context-dependent error rules and calibration drift on top of the
//! visible noise model.

pub mod circuit;
pub mod ddmin;
pub mod error;
pub mod experiments;
pub mod hardware;
pub mod lowering;
pub mod oracle;
pub mod patterns;
pub mod seed;
pub mod sim;
pub mod template;
pub mod transform;

pub use error::{Error, Result};
