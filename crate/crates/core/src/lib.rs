//! Coverless steganography by arrangement of an unmodified cover library,
//! together with the tools to judge its security: exact and simulated
//! library-exposure probabilities, histogram divergence tests, and a
//! learning/challenge attack game at four adversary knowledge levels.

pub mod attackgame;
pub mod bits;
pub mod budget;
pub mod divergence;
pub mod error;
pub mod library;
pub mod permcodec;
pub mod rng;
pub mod stego;

pub use bits::BitString;
pub use error::{Error, Result};
pub use library::{build_library, CoverEntry, CoverId, CoverLibrary};
pub use permcodec::{Arrangement, Capacity};
pub use stego::{embed, extract, keygen, Message, StegoKey, StegoSequence};
