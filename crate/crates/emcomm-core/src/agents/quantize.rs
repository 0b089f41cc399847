//! Uniform payload quantization for the bandwidth-limited wire.
//!
//! Codes cover [-B, B] with both endpoints representable, so the
//! per-component roundtrip error is at most B / (2^bits - 1) (half a
//! step), and out-of-range values clamp to the endpoints.

use super::AgentError;

/// Quantized payload: one code per message component.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedPayload {
    pub bits: u8,
    pub range: f64,
    pub codes: Vec<u16>,
}

pub(crate) fn check_bits(bits: u8) -> Result<(), AgentError> {
    if ![4, 8, 16].contains(&bits) {
        return Err(AgentError::Quantize(format!(
            "bits {bits} must be one of 4, 8, 16"
        )));
    }
    Ok(())
}

/// Maps each payload component to a code in [0, 2^bits - 1].
pub fn quantize(payload: &[f64], bits: u8, range: f64) -> Result<QuantizedPayload, AgentError> {
    check_bits(bits)?;
    if range <= 0.0 || !range.is_finite() {
        return Err(AgentError::Quantize(format!("range {range} must be positive")));
    }
    if payload.iter().any(|v| !v.is_finite()) {
        return Err(AgentError::Quantize("payload has a non-finite component".into()));
    }
    let max_code = ((1u32 << bits) - 1) as f64;
    let codes = payload
        .iter()
        .map(|v| {
            let clamped = v.clamp(-range, range);
            ((clamped + range) * max_code / (2.0 * range)).round() as u16
        })
        .collect();
    Ok(QuantizedPayload { bits, range, codes })
}

/// Reconstructs payload values from codes; code 0 maps to -range and the
/// maximal code to +range exactly.
pub fn dequantize(quantized: &QuantizedPayload) -> Result<Vec<f64>, AgentError> {
    check_bits(quantized.bits)?;
    let max_code = ((1u32 << quantized.bits) - 1) as f64;
    let step = 2.0 * quantized.range / max_code;
    for c in &quantized.codes {
        if f64::from(*c) > max_code {
            return Err(AgentError::Quantize(format!(
                "code {c} exceeds the {}-bit maximum {max_code}",
                quantized.bits
            )));
        }
    }
    Ok(quantized
        .codes
        .iter()
        .map(|c| -quantized.range + f64::from(*c) * step)
        .collect())
}
