//! Length-prefixed framing.
//!
//! ```text
//! [u32 LE topic length][topic bytes][u32 LE payload length][payload bytes]
//! ```

use super::BusError;

pub const MAX_TOPIC_LEN: usize = 255;
pub const MAX_PAYLOAD_LEN: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Envelope {
    pub topic: String,
    pub payload: Vec<u8>,
}

impl Envelope {
    pub fn new(topic: impl Into<String>, payload: impl Into<Vec<u8>>) -> Self {
        Self { topic: topic.into(), payload: payload.into() }
    }

    pub fn validate(&self) -> Result<(), BusError> {
        check_topic_len(self.topic.len())?;
        check_payload_len(self.payload.len())
    }
}

fn check_topic_len(n: usize) -> Result<(), BusError> {
    match n {
        0 => Err(BusError::EmptyTopic),
        n if n > MAX_TOPIC_LEN => Err(BusError::TopicTooLong(n)),
        _ => Ok(()),
    }
}

fn check_payload_len(n: usize) -> Result<(), BusError> {
    if n > MAX_PAYLOAD_LEN {
        Err(BusError::PayloadTooLarge(n))
    } else {
        Ok(())
    }
}

pub fn encode_frame(env: &Envelope) -> Result<Vec<u8>, BusError> {
    let mut out = Vec::with_capacity(8 + env.topic.len() + env.payload.len());
    encode_into(env, &mut out)?;
    Ok(out)
}

pub fn encode_into(env: &Envelope, out: &mut Vec<u8>) -> Result<(), BusError> {
    env.validate()?;
    out.extend_from_slice(&(env.topic.len() as u32).to_le_bytes());
    out.extend_from_slice(env.topic.as_bytes());
    out.extend_from_slice(&(env.payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&env.payload);
    Ok(())
}

fn read_u32(buf: &[u8]) -> Option<u32> {
    buf.get(..4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Parses one frame from the front of `buf`. `Ok(None)` means more bytes are
/// needed. Length prefixes are checked as soon as they are readable, so an
/// oversize declaration fails without waiting for its body.
fn parse_one(buf: &[u8]) -> Result<Option<(Envelope, usize)>, BusError> {
    let Some(topic_len) = read_u32(buf) else { return Ok(None) };
    let topic_len = topic_len as usize;
    check_topic_len(topic_len).map_err(|e| BusError::Protocol(e.to_string()))?;
    let topic_end = 4 + topic_len;
    let Some(payload_len) = buf.get(topic_end..).and_then(read_u32) else { return Ok(None) };
    let payload_len = payload_len as usize;
    check_payload_len(payload_len).map_err(|e| BusError::Protocol(e.to_string()))?;
    let end = topic_end + 4 + payload_len;
    if buf.len() < end {
        return Ok(None);
    }
    let topic = std::str::from_utf8(&buf[4..topic_end])
        .map_err(|e| BusError::Protocol(format!("topic is not UTF-8: {e}")))?
        .to_owned();
    Ok(Some((Envelope { topic, payload: buf[topic_end + 4..end].to_vec() }, end)))
}

/// Parses every complete frame in `buffer` and returns the unconsumed tail.
pub fn decode_frames(buffer: &[u8]) -> Result<(Vec<Envelope>, &[u8]), BusError> {
    let mut out = Vec::new();
    let mut rest = buffer;
    while let Some((env, used)) = parse_one(rest)? {
        out.push(env);
        rest = &rest[used..];
    }
    Ok((out, rest))
}

/// Incremental decoder for a byte stream. After a protocol error the decoder
/// is poisoned and the connection must be dropped.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    poisoned: bool,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, bytes: &[u8]) -> Result<Vec<Envelope>, BusError> {
        if self.poisoned {
            return Err(BusError::Protocol("decoder poisoned by an earlier error".into()));
        }
        self.buf.extend_from_slice(bytes);
        match decode_frames(&self.buf) {
            Ok((envs, rest)) => {
                let consumed = self.buf.len() - rest.len();
                self.buf.drain(..consumed);
                Ok(envs)
            }
            Err(e) => {
                self.poisoned = true;
                self.buf.clear();
                Err(e)
            }
        }
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_minimal_frame() {
        let bytes = encode_frame(&Envelope::new("a", Vec::new())).unwrap();
        assert_eq!(bytes, [0x01, 0, 0, 0, 0x61, 0, 0, 0, 0]);
    }

    #[test]
    fn rejects_bad_envelopes() {
        assert!(matches!(encode_frame(&Envelope::new("", b"x".to_vec())), Err(BusError::EmptyTopic)));
        assert!(matches!(encode_frame(&Envelope::new("t".repeat(256), vec![])), Err(BusError::TopicTooLong(256))));
        assert!(encode_frame(&Envelope::new("t".repeat(255), vec![])).is_ok());
        assert!(matches!(
            encode_frame(&Envelope::new("t", vec![0; MAX_PAYLOAD_LEN + 1])),
            Err(BusError::PayloadTooLarge(_))
        ));
    }

    #[test]
    fn empty_buffer_decodes_to_nothing() {
        let (envs, rest) = decode_frames(&[]).unwrap();
        assert!(envs.is_empty() && rest.is_empty());
    }

    #[test]
    fn oversize_declaration_is_protocol_error() {
        assert!(matches!(decode_frames(&[0xff, 0xff, 0xff, 0xff]), Err(BusError::Protocol(_))));
        assert!(matches!(decode_frames(&[0, 0, 0, 0]), Err(BusError::Protocol(_))));
        let mut bad = vec![1, 0, 0, 0, b'a'];
        bad.extend_from_slice(&((MAX_PAYLOAD_LEN as u32) + 1).to_le_bytes());
        assert!(matches!(decode_frames(&bad), Err(BusError::Protocol(_))));
    }

    #[test]
    fn partial_frame_is_left_in_tail() {
        let bytes = encode_frame(&Envelope::new("/x", b"hello".to_vec())).unwrap();
        let (envs, rest) = decode_frames(&bytes[..bytes.len() - 1]).unwrap();
        assert!(envs.is_empty());
        assert_eq!(rest.len(), bytes.len() - 1);
    }

    #[test]
    fn poisoned_decoder_stays_poisoned() {
        let mut d = FrameDecoder::new();
        assert!(d.feed(&[0xff, 0xff, 0xff, 0xff]).is_err());
        let good = encode_frame(&Envelope::new("a", vec![])).unwrap();
        assert!(d.feed(&good).is_err());
        assert_eq!(FrameDecoder::new().feed(&good).unwrap().len(), 1);
    }
}
