//! Binary message wire format.
//!
//! Layout (integers little-endian):
//! ```text
//! magic "EMC1" (4 bytes) | flags u8 | sender u16 | receiver u16 | dim u16
//! flags bit 0 clear: payload = dim x f32 (IEEE-754 LE)
//! flags bit 0 set:   bits u8 | range f32 | dim codes, each ceil(bits/8)
//!                    bytes LE
//! ```
//! Float messages roundtrip to f32 precision; quantized messages
//! roundtrip their codes exactly.

use super::quantize::{check_bits, dequantize, QuantizedPayload};
use super::{AgentError, Message};

const MAGIC: &[u8; 4] = b"EMC1";
const FLAG_QUANTIZED: u8 = 0b0000_0001;

pub fn serialize_message(msg: &Message) -> Result<Vec<u8>, AgentError> {
    if msg.payload.iter().any(|v| !v.is_finite()) {
        return Err(AgentError::Wire("payload has a non-finite component".into()));
    }
    let dim = msg.payload.len();
    for (name, value) in [("sender", msg.sender), ("receiver", msg.receiver), ("dim", dim)] {
        if value > u16::MAX as usize {
            return Err(AgentError::Wire(format!("{name} {value} exceeds u16")));
        }
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    match &msg.quantized {
        None => {
            buf.push(0);
            buf.extend_from_slice(&(msg.sender as u16).to_le_bytes());
            buf.extend_from_slice(&(msg.receiver as u16).to_le_bytes());
            buf.extend_from_slice(&(dim as u16).to_le_bytes());
            for v in &msg.payload {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        Some(q) => {
            check_bits(q.bits)?;
            if q.codes.len() != dim {
                return Err(AgentError::Wire(format!(
                    "quantized code count {} does not match payload dim {dim}",
                    q.codes.len()
                )));
            }
            buf.push(FLAG_QUANTIZED);
            buf.extend_from_slice(&(msg.sender as u16).to_le_bytes());
            buf.extend_from_slice(&(msg.receiver as u16).to_le_bytes());
            buf.extend_from_slice(&(dim as u16).to_le_bytes());
            buf.push(q.bits);
            buf.extend_from_slice(&(q.range as f32).to_le_bytes());
            let bytes_per_code = usize::from(q.bits).div_ceil(8);
            for code in &q.codes {
                buf.extend_from_slice(&code.to_le_bytes()[..bytes_per_code]);
            }
        }
    }
    Ok(buf)
}

pub fn deserialize_message(bytes: &[u8]) -> Result<Message, AgentError> {
    let mut cur = 0usize;
    let take = |cur: &mut usize, n: usize| -> Result<&[u8], AgentError> {
        if *cur + n > bytes.len() {
            return Err(AgentError::Wire(format!(
                "truncated buffer: need {} bytes at offset {}, have {}",
                n,
                *cur,
                bytes.len()
            )));
        }
        let s = &bytes[*cur..*cur + n];
        *cur += n;
        Ok(s)
    };
    let magic = take(&mut cur, 4)?;
    if magic != MAGIC {
        return Err(AgentError::Wire(format!(
            "bad magic {:02x?}, expected {:02x?}",
            magic, MAGIC
        )));
    }
    let flags = take(&mut cur, 1)?[0];
    if flags & !FLAG_QUANTIZED != 0 {
        return Err(AgentError::Wire(format!("unknown flag bits {flags:#010b}")));
    }
    let sender = u16::from_le_bytes(take(&mut cur, 2)?.try_into().unwrap()) as usize;
    let receiver = u16::from_le_bytes(take(&mut cur, 2)?.try_into().unwrap()) as usize;
    let dim = u16::from_le_bytes(take(&mut cur, 2)?.try_into().unwrap()) as usize;

    let msg = if flags & FLAG_QUANTIZED == 0 {
        let mut payload = Vec::with_capacity(dim);
        for _ in 0..dim {
            let v = f32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap());
            payload.push(f64::from(v));
        }
        Message {
            sender,
            receiver,
            payload,
            quantized: None,
        }
    } else {
        let bits = take(&mut cur, 1)?[0];
        check_bits(bits)?;
        let range = f64::from(f32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap()));
        let bytes_per_code = usize::from(bits).div_ceil(8);
        let mut codes = Vec::with_capacity(dim);
        for _ in 0..dim {
            let raw = take(&mut cur, bytes_per_code)?;
            let mut full = [0u8; 2];
            full[..bytes_per_code].copy_from_slice(raw);
            codes.push(u16::from_le_bytes(full));
        }
        let q = QuantizedPayload { bits, range, codes };
        let payload = dequantize(&q)?;
        Message {
            sender,
            receiver,
            payload,
            quantized: Some(q),
        }
    };
    if cur != bytes.len() {
        return Err(AgentError::Wire(format!(
            "{} trailing bytes after message",
            bytes.len() - cur
        )));
    }
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::quantize::quantize;
    use rand::Rng;

    #[test]
    fn float_section_has_canonical_ieee_bytes() {
        let msg = Message {
            sender: 1,
            receiver: 2,
            payload: vec![1.0, -1.0],
            quantized: None,
        };
        let bytes = serialize_message(&msg).unwrap();
        // magic(4) + flags(1) + sender(2) + receiver(2) + dim(2) = 11.
        assert_eq!(&bytes[11..], &[0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x80, 0xBF]);
    }

    #[test]
    fn float_roundtrip_is_f32_exact() {
        let mut rng = crate::rng::SeedSplitter::new(2).stream("wire");
        let payload: Vec<f64> = (0..16).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let msg = Message {
            sender: 3,
            receiver: 1,
            payload: payload.clone(),
            quantized: None,
        };
        let back = deserialize_message(&serialize_message(&msg).unwrap()).unwrap();
        assert_eq!(back.sender, 3);
        assert_eq!(back.receiver, 1);
        for (orig, rec) in payload.iter().zip(back.payload.iter()) {
            assert_eq!(*rec, f64::from(*orig as f32), "must match f32 rounding");
        }
    }

    #[test]
    fn quantized_roundtrip_preserves_codes() {
        let payload = vec![0.5, -3.9, 3.9, 0.0];
        let q = quantize(&payload, 8, 4.0).unwrap();
        let msg = Message {
            sender: 1,
            receiver: 2,
            payload: crate::agents::dequantize(&q).unwrap(),
            quantized: Some(q.clone()),
        };
        let back = deserialize_message(&serialize_message(&msg).unwrap()).unwrap();
        assert_eq!(back.quantized.as_ref().unwrap().codes, q.codes);
        assert_eq!(back.payload, msg.payload);
    }

    #[test]
    fn sixteen_bit_codes_use_two_bytes() {
        let q = quantize(&[0.0, 1.0], 16, 4.0).unwrap();
        let msg = Message {
            sender: 1,
            receiver: 2,
            payload: crate::agents::dequantize(&q).unwrap(),
            quantized: Some(q),
        };
        let bytes = serialize_message(&msg).unwrap();
        // 11 header + bits(1) + range(4) + 2 codes x 2 bytes.
        assert_eq!(bytes.len(), 11 + 5 + 4);
        let back = deserialize_message(&bytes).unwrap();
        assert_eq!(back.quantized.unwrap().codes.len(), 2);
    }

    #[test]
    fn truncated_and_bad_magic_buffers_error() {
        let err = deserialize_message(&[0x45, 0x4D, 0x43]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
        let err = deserialize_message(b"NOPE\x00\x00\x00\x00\x00\x00\x00").unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let msg = Message {
            sender: 1,
            receiver: 2,
            payload: vec![f64::NAN],
            quantized: None,
        };
        assert!(serialize_message(&msg).is_err());
    }
}
