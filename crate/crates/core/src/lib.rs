//! Breathing-acoustics user identification toolkit.
//!
//! Everything needed to go from raw breath recordings (or synthetic
//! stand-ins) to a trained, quantized, benchmarked classifier:
//!
//! - [`audio`]: WAV I/O and deterministic synthetic breath clips
//! - [`features`]: framing, MFCC + delta extraction, sliding windows
//! - [`augment`]: time-warp / amplitude-scale training-set expansion
//! - [`dataset`]: session manifests and the train/validation/intra/inter split
//! - [`lstm`]: two-layer LSTM, exact BPTT gradients, Adam training loop
//! - [`selection`]: validation-curve smoothing, elbow rule, checkpoint choice
//! - [`quantize`]: 8-bit per-tensor min/max affine quantization
//! - [`store`]: binary model files (float and quantized flavors, CRC-checked)
//! - [`svm`]: one-vs-one linear SVM baseline trained with Pegasos
//! - [`bench`]: wall-clock micro-benchmarks for latency and model size
//!
//! All randomness is injected through explicit seeds; given the same seeds
//! and inputs, every pipeline stage reproduces its outputs byte for byte.

pub mod audio;
pub mod augment;
pub mod bench;
pub mod dataset;
pub mod features;
pub mod lstm;
pub mod quantize;
pub mod selection;
pub mod store;
pub mod svm;
