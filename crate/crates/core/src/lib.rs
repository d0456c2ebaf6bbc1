//! Single-antenna emitter localization by asynchronous distributed receiver
//! beamforming.
//!
//! A receiver hovering at a location records packets from a remote emitter at
//! a set of slightly different positions. The captures are aligned on a
//! blindly extracted repetitive signature, which turns the hover positions
//! into a virtual antenna array. Sweeping the array factor of that virtual
//! array gives a direction of arrival; subsets of the positions and k-means
//! clustering of the resulting candidate directions suppress the effect of
//! bad alignments and position errors. Two locations give two bearings,
//! and the bearings intersect at the emitter.
//!
//! Pipeline stages and the module that owns each:
//!
//! | stage | module |
//! |-------|--------|
//! | surrogate waveforms, capture buffers, raw IQ files | [`signal`] |
//! | propagation phase, noise, multipath, CFO, position error | [`channel`] |
//! | energy gate, pattern discovery, signature extraction | [`detect`] |
//! | lag search, CFO estimate/correction | [`align`] |
//! | frames and the far-field distance term | [`geometry`] |
//! | array factor, grid sweep, lobes, analytic average pattern | [`beamform`] |
//! | subset expansion, k-means, the iterative DoA loop | [`cluster`] |
//! | two-location fix | [`fix`] |
//! | subspace baseline | [`music`] |
//! | scenario files, Monte-Carlo runs, CSV output | [`scenario`] |

pub mod align;
pub mod beamform;
pub mod bench;
pub mod channel;
pub mod cluster;
pub mod detect;
pub mod fix;
pub mod geometry;
pub mod music;
pub mod rng;
pub mod scenario;
pub mod signal;

pub use num_complex::Complex64 as C64;
