//! Length-delimited wire frames.
//!
//! ```text
//! magic "PPAC" | version u8 | msg_type u8 | sender_id u32 | round u32 | payload_len u32 | payload
//! ```
//!
//! All integers are big-endian. The header is 18 bytes.

use std::io::{self, Read, Write};

use ppac_core::paillier::{Ciphertext, KeyId, PaillierError, PublicKey};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"PPAC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 18;
/// Upper bound on accepted payloads; generous for 4096-bit keys.
pub const MAX_PAYLOAD: u32 = 1 << 20;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("payload of {0} bytes exceeds the limit")]
    PayloadTooLarge(u32),
    #[error("malformed payload: {0}")]
    Payload(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<PaillierError> for FrameError {
    fn from(e: PaillierError) -> Self {
        FrameError::Payload(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    KeyAnnounce = 1,
    SharePlain = 2,
    ShareEnc = 3,
    RoundSync = 4,
}

impl TryFrom<u8> for MsgType {
    type Error = FrameError;

    fn try_from(v: u8) -> Result<Self, FrameError> {
        Ok(match v {
            1 => MsgType::KeyAnnounce,
            2 => MsgType::SharePlain,
            3 => MsgType::ShareEnc,
            4 => MsgType::RoundSync,
            other => return Err(FrameError::UnknownType(other)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireFrame {
    pub msg_type: MsgType,
    pub sender_id: u32,
    pub round: u32,
    pub payload: Vec<u8>,
}

impl WireFrame {
    pub fn new(msg_type: MsgType, sender_id: u32, round: u32, payload: Vec<u8>) -> Self {
        Self { msg_type, sender_id, round, payload }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.sender_id.to_be_bytes());
        out.extend_from_slice(&self.round.to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, FrameError> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        let magic: [u8; 4] = header[0..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(FrameError::BadMagic(magic));
        }
        if header[4] != VERSION {
            return Err(FrameError::BadVersion(header[4]));
        }
        let msg_type = MsgType::try_from(header[5])?;
        let word = |i: usize| u32::from_be_bytes(header[i..i + 4].try_into().expect("4 bytes"));
        let (sender_id, round, len) = (word(6), word(10), word(14));
        if len > MAX_PAYLOAD {
            return Err(FrameError::PayloadTooLarge(len));
        }
        let mut payload = vec![0u8; len as usize];
        r.read_exact(&mut payload)?;
        Ok(Self { msg_type, sender_id, round, payload })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&self.encode())?;
        w.flush()
    }
}

/// Two big-endian `f64`s.
pub fn plain_share_payload(s: f64, w: f64) -> Vec<u8> {
    let mut out = Vec::with_capacity(16);
    out.extend_from_slice(&s.to_be_bytes());
    out.extend_from_slice(&w.to_be_bytes());
    out
}

pub fn parse_plain_share(payload: &[u8]) -> Result<(f64, f64), FrameError> {
    if payload.len() != 16 {
        return Err(FrameError::Payload(format!("plain share of {} bytes", payload.len())));
    }
    let s = f64::from_be_bytes(payload[..8].try_into().expect("8 bytes"));
    let w = f64::from_be_bytes(payload[8..].try_into().expect("8 bytes"));
    Ok((s, w))
}

/// Two length-prefixed ciphertexts.
pub fn enc_share_payload(s: &Ciphertext, w: &Ciphertext) -> Vec<u8> {
    let mut out = s.to_bytes();
    out.extend(w.to_bytes());
    out
}

pub fn parse_enc_share(payload: &[u8], key_id: KeyId) -> Result<(Ciphertext, Ciphertext), FrameError> {
    let (s, used) = Ciphertext::from_bytes(payload, key_id)?;
    let (w, used_w) = Ciphertext::from_bytes(&payload[used..], key_id)?;
    if used + used_w != payload.len() {
        return Err(FrameError::Payload("trailing bytes after ciphertexts".into()));
    }
    Ok((s, w))
}

pub fn key_payload(key: &PublicKey) -> Vec<u8> {
    key.to_bytes()
}

pub fn parse_key(payload: &[u8]) -> Result<PublicKey, FrameError> {
    let (key, used) = PublicKey::from_bytes(payload)?;
    if used != payload.len() {
        return Err(FrameError::Payload("trailing bytes after key".into()));
    }
    Ok(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;

    #[test]
    fn header_layout() {
        let f = WireFrame::new(MsgType::SharePlain, 0x0102_0304, 7, plain_share_payload(1.5, -0.25));
        let bytes = f.encode();
        assert_eq!(bytes.len(), HEADER_LEN + 16);
        assert_eq!(&bytes[..6], b"PPAC\x01\x02");
        assert_eq!(&bytes[6..10], &[1, 2, 3, 4]);
        assert_eq!(&bytes[10..14], &[0, 0, 0, 7]);
        assert_eq!(&bytes[14..18], &[0, 0, 0, 16]);
        assert_eq!(&bytes[18..26], &1.5f64.to_be_bytes());
        let back = WireFrame::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, f);
        assert_eq!(parse_plain_share(&back.payload).unwrap(), (1.5, -0.25));
    }

    #[test]
    fn rejects_corruption() {
        let good = WireFrame::new(MsgType::RoundSync, 1, 0, vec![]).encode();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(WireFrame::read_from(&mut bad.as_slice()), Err(FrameError::BadMagic(_))));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(WireFrame::read_from(&mut bad.as_slice()), Err(FrameError::BadVersion(2))));
        let mut bad = good.clone();
        bad[5] = 9;
        assert!(matches!(WireFrame::read_from(&mut bad.as_slice()), Err(FrameError::UnknownType(9))));
        let mut bad = good.clone();
        bad[14..18].copy_from_slice(&u32::MAX.to_be_bytes());
        assert!(matches!(WireFrame::read_from(&mut bad.as_slice()), Err(FrameError::PayloadTooLarge(_))));
        let truncated = &good[..10];
        assert!(matches!(WireFrame::read_from(&mut &truncated[..]), Err(FrameError::Io(_))));
        assert!(parse_plain_share(&[0; 15]).is_err());
    }

    #[test]
    fn key_and_ciphertext_payloads() {
        let key = PublicKey::from_modulus(BigUint::from(35u32)).unwrap();
        assert_eq!(parse_key(&key_payload(&key)).unwrap(), key);
        let s = Ciphertext { value: BigUint::from(1234u32), key_id: key.id() };
        let w = Ciphertext { value: BigUint::from(99u32), key_id: key.id() };
        let payload = enc_share_payload(&s, &w);
        assert_eq!(payload, [0, 0, 0, 2, 0x04, 0xd2, 0, 0, 0, 1, 99]);
        assert_eq!(parse_enc_share(&payload, key.id()).unwrap(), (s, w));
        assert!(parse_enc_share(&payload[..7], key.id()).is_err());
    }
}
