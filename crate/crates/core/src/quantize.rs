//! Per-tensor 8-bit affine quantization of stored (f32) parameters.
//!
//! Codes map the tensor's [min, max] range onto 0..=255 with
//! round-half-away-from-zero. Dequantization sends codes 0 and 255 back
//! to min and max literally, so range endpoints survive a round trip
//! bit-exactly; interior codes are reconstructed in f64 before narrowing.

use thiserror::Error;

use crate::lstm::LstmModel;

/// Quantization levels per tensor.
pub const LEVELS: u32 = 256;

#[derive(Debug, Error)]
pub enum QuantizeError {
    #[error("non-finite value in tensor {tensor}")]
    NonFiniteInput { tensor: String },
}

/// One tensor's codes plus the range that defines their meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub codes: Vec<u8>,
    pub min: f32,
    pub max: f32,
}

/// Worst-case absolute reconstruction error the scheme guarantees:
/// half a step plus f32 rounding headroom. The headroom covers the final
/// narrowing only for parameter-scale inputs (|x| < 2, where half an f32
/// ulp stays below 1e-7); at larger magnitudes the narrowing itself can
/// exceed it, whatever the codes say.
#[must_use]
pub fn quantization_bound(min: f32, max: f32) -> f64 {
    f64::from(max - min) / 510.0 + 1e-7
}

/// Quantizes one tensor against its own min/max. A constant tensor
/// (max == min) collapses to all-zero codes.
///
/// # Errors
///
/// `NonFiniteInput` when any value is NaN or infinite.
pub fn quantize_tensor(values: &[f32], name: &str) -> Result<QuantizedTensor, QuantizeError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(QuantizeError::NonFiniteInput {
            tensor: name.to_string(),
        });
    }
    let min = values.iter().copied().fold(f32::INFINITY, f32::min);
    let max = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if values.is_empty() || min == max {
        return Ok(QuantizedTensor {
            codes: vec![0; values.len()],
            min: if values.is_empty() { 0.0 } else { min },
            max: if values.is_empty() { 0.0 } else { min },
        });
    }

    let range = f64::from(max) - f64::from(min);
    let codes = values
        .iter()
        .map(|&v| {
            let scaled = (f64::from(v) - f64::from(min)) / range * 255.0;
            scaled.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok(QuantizedTensor { codes, min, max })
}

/// Reconstructs values from codes. Codes 0 and 255 return min and max
/// exactly; everything else is min + code·(max−min)/255 evaluated in f64.
#[must_use]
pub fn dequantize_tensor(q: &QuantizedTensor) -> Vec<f32> {
    let range = f64::from(q.max) - f64::from(q.min);
    q.codes
        .iter()
        .map(|&c| match c {
            0 => q.min,
            255 => q.max,
            _ => (f64::from(q.min) + f64::from(c) * range / 255.0) as f32,
        })
        .collect()
}

/// Canonical tensor names, matching the model's flat tensor order.
pub const TENSOR_NAMES: [&str; 6] = [
    "layer1.w",
    "layer1.b",
    "layer2.w",
    "layer2.b",
    "dense.w",
    "dense.b",
];

/// A fully quantized model: six tensors in canonical order plus the
/// geometry needed to rebuild an [`LstmModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub tensors: Vec<QuantizedTensor>,
    pub num_users: usize,
    pub window_len: usize,
}

/// Quantizes every tensor of a model (through its stored f32 form).
///
/// # Errors
///
/// `NonFiniteInput`, naming the offending tensor.
pub fn quantize_model(model: &LstmModel) -> Result<QuantizedModel, QuantizeError> {
    let mut tensors = Vec::with_capacity(6);
    for (slice, name) in model.tensors().iter().zip(TENSOR_NAMES) {
        let as_f32: Vec<f32> = slice.iter().map(|&v| v as f32).collect();
        tensors.push(quantize_tensor(&as_f32, name)?);
    }
    Ok(QuantizedModel {
        tensors,
        num_users: model.num_users,
        window_len: model.window_len,
    })
}

impl QuantizedModel {
    /// Rebuilds a float model by dequantizing every tensor. Callers doing
    /// repeated inference should dequantize once and keep the result.
    #[must_use]
    pub fn to_model(&self) -> LstmModel {
        let packed: Vec<f32> = self.tensors.iter().flat_map(|t| dequantize_tensor(t)).collect();
        LstmModel::unpack_f32(&packed, self.num_users, self.window_len)
    }

    /// Total quantized parameter count.
    #[must_use]
    pub fn code_count(&self) -> usize {
        self.tensors.iter().map(|t| t.codes.len()).sum()
    }
}

/// Logits of the dequantized model on one window.
///
/// # Errors
///
/// Propagates forward-pass dimension errors.
pub fn quantized_forward(
    q: &QuantizedModel,
    window: ndarray::ArrayView2<'_, f64>,
) -> Result<ndarray::Array1<f64>, crate::lstm::LstmError> {
    q.to_model().forward(window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_unit_range_hits_midpoint_code() {
        let q = quantize_tensor(&[-1.0, 0.0, 1.0], "t").unwrap();
        assert_eq!(q.codes, vec![0, 128, 255], "half rounds away from zero");
        assert_eq!(q.min, -1.0);
        assert_eq!(q.max, 1.0);
    }

    #[test]
    fn endpoints_round_trip_bit_exactly() {
        let values = [-0.37f32, 0.0, 0.1234, 0.9871];
        let q = quantize_tensor(&values, "t").unwrap();
        let back = dequantize_tensor(&q);
        assert_eq!(back[0].to_bits(), (-0.37f32).to_bits(), "min is literal");
        assert_eq!(back[3].to_bits(), 0.9871f32.to_bits(), "max is literal");
    }

    #[test]
    fn constant_tensor_collapses_to_zero_codes() {
        let q = quantize_tensor(&[0.5; 7], "t").unwrap();
        assert_eq!(q.codes, vec![0; 7]);
        assert_eq!(q.min, q.max);
        assert!(dequantize_tensor(&q).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn empty_tensor_is_legal() {
        let q = quantize_tensor(&[], "t").unwrap();
        assert!(q.codes.is_empty());
        assert!(dequantize_tensor(&q).is_empty());
    }

    #[test]
    fn non_finite_values_are_rejected() {
        for bad in [f32::NAN, f32::INFINITY, f32::NEG_INFINITY] {
            let err = quantize_tensor(&[0.0, bad], "layer1.w").unwrap_err();
            let QuantizeError::NonFiniteInput { tensor } = err;
            assert_eq!(tensor, "layer1.w");
        }
    }

    proptest! {
        // Parameter-scale magnitudes: the bound's fixed headroom only
        // absorbs f32 narrowing below |x| = 2.
        #[test]
        fn reconstruction_error_stays_below_half_step(
            values in prop::collection::vec(-2.0f32..2.0, 1..200)
        ) {
            let q = quantize_tensor(&values, "t").unwrap();
            let back = dequantize_tensor(&q);
            let bound = quantization_bound(q.min, q.max);
            for (&v, &r) in values.iter().zip(&back) {
                let err = (f64::from(v) - f64::from(r)).abs();
                prop_assert!(err <= bound, "value {v}, restored {r}, err {err}, bound {bound}");
            }
        }

        #[test]
        fn requantizing_reconstructed_values_is_idempotent(
            values in prop::collection::vec(-50.0f32..50.0, 1..200)
        ) {
            let q = quantize_tensor(&values, "t").unwrap();
            let back = dequantize_tensor(&q);
            let q2 = quantize_tensor(&back, "t").unwrap();
            prop_assert_eq!(&q.codes, &q2.codes);
            prop_assert_eq!(q.min.to_bits(), q2.min.to_bits());
            prop_assert_eq!(q.max.to_bits(), q2.max.to_bits());
        }
    }

    #[test]
    fn model_quantization_covers_all_six_tensors() {
        let model = LstmModel::new(5, 30, 3);
        let q = quantize_model(&model).unwrap();
        assert_eq!(q.tensors.len(), 6);
        assert_eq!(q.code_count(), model.param_count());

        let restored = q.to_model();
        assert_eq!(restored.num_users, 5);
        assert_eq!(restored.window_len, 30);

        // Every restored parameter respects its tensor's bound relative to
        // the stored f32 original.
        for ((orig, tensor), name) in model.tensors().iter().zip(&q.tensors).zip(TENSOR_NAMES) {
            let back = dequantize_tensor(tensor);
            let bound = quantization_bound(tensor.min, tensor.max);
            for (&o, &b) in orig.iter().zip(&back) {
                let err = (f64::from(o as f32) - f64::from(b)).abs();
                assert!(err <= bound, "{name}: err {err} > bound {bound}");
            }
        }
    }

    #[test]
    fn dequantized_model_stays_close_in_logit_space() {
        let model = LstmModel::new(4, 8, 17);
        let q = quantize_model(&model).unwrap();
        let restored = q.to_model();

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let window = ndarray::Array2::from_shape_fn((8, 96), |_| rng.random_range(-1.0..1.0));
        let a = model.forward(window.view()).unwrap();
        let b = quantized_forward(&q, window.view()).unwrap();
        let c = restored.forward(window.view()).unwrap();
        for k in 0..4 {
            assert!((a[k] - b[k]).abs() < 0.5, "logit {k}: {} vs {}", a[k], b[k]);
            assert_eq!(b[k].to_bits(), c[k].to_bits());
        }
    }
}
