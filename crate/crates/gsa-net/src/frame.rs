//! Frame format and symbol packing.
//!
//! Every message on the wire is one frame:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "GSA1"
//! 4       1     type: HELLO=1 ROUND1=2 SURVIVORS=3 ROUND2=4 RESULT=5 ERROR=6
//! 5       2     user id, big-endian (0 = server)
//! 7       4     payload length, big-endian
//! 11      -     payload
//! ```
//!
//! Symbol payloads pack each field symbol as a little-endian 4-byte residue;
//! for `q <= 251` a 1-byte-per-symbol packing can be negotiated in HELLO.
//! Headers big-endian, symbols little-endian: arbitrary but frozen.

use std::io::{Read, Write};

use crate::NetError;

pub const MAGIC: [u8; 4] = *b"GSA1";
pub const HEADER_LEN: usize = 11;
/// Largest modulus eligible for 1-byte symbol packing.
pub const BYTE_PACKING_MAX_Q: u64 = 251;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    Hello = 1,
    Round1 = 2,
    Survivors = 3,
    Round2 = 4,
    Result = 5,
    Error = 6,
}

impl MsgType {
    fn from_byte(b: u8) -> Option<MsgType> {
        Some(match b {
            1 => MsgType::Hello,
            2 => MsgType::Round1,
            3 => MsgType::Survivors,
            4 => MsgType::Round2,
            5 => MsgType::Result,
            6 => MsgType::Error,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub user_id: u16,
    pub payload: Vec<u8>,
}

/// Writes one frame. Returns the total bytes put on the wire.
pub fn write_frame(
    w: &mut impl Write,
    msg_type: MsgType,
    user_id: u16,
    payload: &[u8],
) -> std::io::Result<usize> {
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(&MAGIC);
    header[4] = msg_type as u8;
    header[5..7].copy_from_slice(&user_id.to_be_bytes());
    header[7..11].copy_from_slice(&(payload.len() as u32).to_be_bytes());
    w.write_all(&header)?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(HEADER_LEN + payload.len())
}

/// Reads one frame, refusing to allocate or read past `max_payload`. The
/// declared length is checked against the cap before any payload byte is
/// read, so an oversized announcement cannot exhaust the peer.
pub fn read_frame(r: &mut impl Read, max_payload: usize) -> Result<Frame, NetError> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if header[..4] != MAGIC {
        return Err(NetError::ProtocolViolation("bad magic".into()));
    }
    let msg_type = MsgType::from_byte(header[4])
        .ok_or_else(|| NetError::ProtocolViolation(format!("unknown frame type {}", header[4])))?;
    let user_id = u16::from_be_bytes([header[5], header[6]]);
    let declared = u32::from_be_bytes([header[7], header[8], header[9], header[10]]) as usize;
    if declared > max_payload {
        return Err(NetError::ProtocolViolation(format!(
            "declared payload of {declared} bytes exceeds the {max_payload}-byte cap"
        )));
    }
    let mut payload = vec![0u8; declared];
    r.read_exact(&mut payload)?;
    Ok(Frame {
        msg_type,
        user_id,
        payload,
    })
}

/// Symbol packing width in bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Packing {
    Byte,
    Word,
}

impl Packing {
    pub fn width(self) -> usize {
        match self {
            Packing::Byte => 1,
            Packing::Word => 4,
        }
    }

    pub fn code(self) -> u8 {
        self.width() as u8
    }

    pub fn from_code(code: u8, q: u64) -> Result<Packing, NetError> {
        match code {
            1 if q <= BYTE_PACKING_MAX_Q => Ok(Packing::Byte),
            1 => Err(NetError::ProtocolViolation(format!(
                "1-byte packing requires q <= {BYTE_PACKING_MAX_Q}, got q = {q}"
            ))),
            4 => Ok(Packing::Word),
            _ => Err(NetError::ProtocolViolation(format!(
                "unsupported packing code {code}"
            ))),
        }
    }

    /// The natural choice for a modulus: tight when it fits a byte.
    pub fn for_modulus(q: u64) -> Packing {
        if q <= BYTE_PACKING_MAX_Q {
            Packing::Byte
        } else {
            Packing::Word
        }
    }
}

pub fn pack_symbols(symbols: &[u64], packing: Packing) -> Vec<u8> {
    match packing {
        Packing::Byte => symbols.iter().map(|&s| s as u8).collect(),
        Packing::Word => {
            let mut out = Vec::with_capacity(symbols.len() * 4);
            for &s in symbols {
                out.extend_from_slice(&(s as u32).to_le_bytes());
            }
            out
        }
    }
}

/// Unpacks and validates every residue against the modulus.
pub fn unpack_symbols(bytes: &[u8], packing: Packing, q: u64) -> Result<Vec<u64>, NetError> {
    let symbols: Vec<u64> = match packing {
        Packing::Byte => bytes.iter().map(|&b| b as u64).collect(),
        Packing::Word => {
            if !bytes.len().is_multiple_of(4) {
                return Err(NetError::ProtocolViolation(
                    "word-packed payload length not a multiple of 4".into(),
                ));
            }
            bytes
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as u64)
                .collect()
        }
    };
    if symbols.iter().any(|&s| s >= q) {
        return Err(NetError::ProtocolViolation(
            "symbol not reduced mod q".into(),
        ));
    }
    Ok(symbols)
}

/// HELLO payload: requested packing code plus the fixture checksum, so the
/// server can reject a client holding mismatched offline material.
pub fn hello_payload(packing: Packing, fixture_checksum: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(9);
    out.push(packing.code());
    out.extend_from_slice(&fixture_checksum.to_be_bytes());
    out
}

pub fn parse_hello(payload: &[u8], q: u64) -> Result<(Packing, u64), NetError> {
    if payload.len() != 9 {
        return Err(NetError::ProtocolViolation(format!(
            "hello payload must be 9 bytes, got {}",
            payload.len()
        )));
    }
    let packing = Packing::from_code(payload[0], q)?;
    let checksum = u64::from_be_bytes(payload[1..9].try_into().expect("sized above"));
    Ok((packing, checksum))
}

pub fn survivors_payload(u1: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(u1.len() * 2);
    for &id in u1 {
        out.extend_from_slice(&(id as u16).to_be_bytes());
    }
    out
}

pub fn parse_survivors(payload: &[u8]) -> Result<Vec<usize>, NetError> {
    if !payload.len().is_multiple_of(2) {
        return Err(NetError::ProtocolViolation(
            "survivor list length must be even".into(),
        ));
    }
    Ok(payload
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as usize)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_roundtrip() {
        let mut buf = Vec::new();
        let n = write_frame(&mut buf, MsgType::Round1, 3, &[1, 2, 3, 4]).unwrap();
        assert_eq!(n, HEADER_LEN + 4);
        assert_eq!(&buf[..4], b"GSA1");
        let frame = read_frame(&mut buf.as_slice(), 16).unwrap();
        assert_eq!(frame.msg_type, MsgType::Round1);
        assert_eq!(frame.user_id, 3);
        assert_eq!(frame.payload, vec![1, 2, 3, 4]);
    }

    #[test]
    fn oversize_declaration_is_rejected_before_reading() {
        let mut buf = Vec::new();
        write_frame(&mut buf, MsgType::Round1, 3, &[0u8; 100]).unwrap();
        let err = read_frame(&mut buf.as_slice(), 50).unwrap_err();
        assert!(matches!(err, NetError::ProtocolViolation(_)));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut buf = Vec::new();
        write_frame(&mut buf, MsgType::Hello, 1, &[]).unwrap();
        buf[0] = b'X';
        assert!(matches!(
            read_frame(&mut buf.as_slice(), 16),
            Err(NetError::ProtocolViolation(_))
        ));
    }

    #[test]
    fn packing_rules() {
        assert_eq!(Packing::for_modulus(7), Packing::Byte);
        assert_eq!(Packing::for_modulus(2147483647), Packing::Word);
        assert!(Packing::from_code(1, 7).is_ok());
        assert!(Packing::from_code(1, 257).is_err());
        assert!(Packing::from_code(2, 7).is_err());
    }

    #[test]
    fn symbol_roundtrip_both_widths() {
        let syms = vec![0u64, 1, 6, 250];
        for packing in [Packing::Byte, Packing::Word] {
            let bytes = pack_symbols(&syms, packing);
            assert_eq!(bytes.len(), syms.len() * packing.width());
            assert_eq!(unpack_symbols(&bytes, packing, 251).unwrap(), syms);
        }
        let big = vec![2147483646u64];
        let bytes = pack_symbols(&big, Packing::Word);
        assert_eq!(unpack_symbols(&bytes, Packing::Word, 2147483647).unwrap(), big);
    }

    #[test]
    fn unreduced_symbols_are_rejected() {
        let bytes = pack_symbols(&[6], Packing::Byte);
        assert!(matches!(
            unpack_symbols(&bytes, Packing::Byte, 5),
            Err(NetError::ProtocolViolation(_))
        ));
    }

    #[test]
    fn hello_and_survivors_roundtrip() {
        let p = hello_payload(Packing::Byte, 0xdeadbeef12345678);
        let (packing, ck) = parse_hello(&p, 7).unwrap();
        assert_eq!(packing, Packing::Byte);
        assert_eq!(ck, 0xdeadbeef12345678);
        let s = survivors_payload(&[1, 3, 5]);
        assert_eq!(parse_survivors(&s).unwrap(), vec![1, 3, 5]);
    }
}
