//! Telemetry frame codec for the handlebar/treadmill sensor link.
//!
//! The rig streams one fixed-size datagram per sample over UDP. Frames are
//! 20 bytes, little-endian throughout:
//!
//! | bytes  | field                                            |
//! |--------|--------------------------------------------------|
//! | 0..2   | magic `0x4C 0x53`                                |
//! | 2      | protocol version (currently 1)                   |
//! | 3      | flags (bit 0: absolute encoder valid)            |
//! | 4..8   | sequence number, `u32`                           |
//! | 8..12  | device time in milliseconds, `u32`               |
//! | 12..14 | handlebar angle, raw 14-bit encoder counts, `u16`|
//! | 14..16 | treadmill delta, signed encoder counts, `i16`    |
//! | 16..20 | CRC-32 (IEEE) over bytes 0..16, `u32`            |
//!
//! Sequence numbers and device time are allowed to wrap. Decoding verifies
//! length, magic, version, CRC, and the 14-bit handlebar range, each with a
//! distinct error so the host can keep meaningful drop counters.

use thiserror::Error;

/// First two bytes of every telemetry frame.
pub const MAGIC: [u8; 2] = [0x4C, 0x53];
/// Protocol version emitted and accepted by this codec.
pub const PROTOCOL_VERSION: u8 = 0x01;
/// Encoded frame size in bytes.
pub const FRAME_LEN: usize = 20;
/// Default UDP port the host listens on for telemetry.
pub const DEFAULT_TELEMETRY_PORT: u16 = 47801;
/// The handlebar encoder is 14-bit absolute: raw values live in `0..=16383`.
pub const HANDLEBAR_RAW_MAX: u16 = (1 << 14) - 1;
/// Flag bit 0: the absolute handlebar encoder reading is valid.
pub const FLAG_ABSOLUTE_ENCODER_VALID: u8 = 0x01;

/// One telemetry sample as carried on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderFrame {
    /// Monotonic sample counter, wraps at `u32::MAX`.
    pub seq: u32,
    /// Device-side timestamp in milliseconds, wraps at `u32::MAX`.
    pub device_time_ms: u32,
    /// Absolute handlebar encoder reading, `0..=16383`.
    pub handlebar_raw: u16,
    /// Treadmill encoder counts accumulated since the previous frame.
    pub treadmill_delta: i16,
    /// Flag bits; see [`FLAG_ABSOLUTE_ENCODER_VALID`].
    pub flags: u8,
}

/// Decode/encode failures, one variant per check so counters stay distinct.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum WireError {
    #[error("frame is {got} bytes, expected {FRAME_LEN}")]
    WrongLength { got: usize },
    #[error("bad magic {got:02X?}, expected {MAGIC:02X?}")]
    BadMagic { got: [u8; 2] },
    #[error("unsupported protocol version {got}, expected {PROTOCOL_VERSION}")]
    BadVersion { got: u8 },
    #[error("CRC mismatch: stored {stored:#010X}, computed {computed:#010X}")]
    BadCrc { stored: u32, computed: u32 },
    #[error("handlebar raw value {got} exceeds 14-bit range 0..={HANDLEBAR_RAW_MAX}")]
    HandlebarOutOfRange { got: u16 },
}

impl EncoderFrame {
    /// True when the absolute handlebar reading in this frame is usable.
    pub fn absolute_encoder_valid(&self) -> bool {
        self.flags & FLAG_ABSOLUTE_ENCODER_VALID != 0
    }

    /// Serialize to the 20-byte wire layout. Fails only when `handlebar_raw`
    /// exceeds the 14-bit range, which a well-formed producer never does.
    pub fn encode(&self) -> Result<[u8; FRAME_LEN], WireError> {
        if self.handlebar_raw > HANDLEBAR_RAW_MAX {
            return Err(WireError::HandlebarOutOfRange {
                got: self.handlebar_raw,
            });
        }
        let mut buf = [0u8; FRAME_LEN];
        buf[0..2].copy_from_slice(&MAGIC);
        buf[2] = PROTOCOL_VERSION;
        buf[3] = self.flags;
        buf[4..8].copy_from_slice(&self.seq.to_le_bytes());
        buf[8..12].copy_from_slice(&self.device_time_ms.to_le_bytes());
        buf[12..14].copy_from_slice(&self.handlebar_raw.to_le_bytes());
        buf[14..16].copy_from_slice(&self.treadmill_delta.to_le_bytes());
        let crc = crc32_ieee(&buf[0..16]);
        buf[16..20].copy_from_slice(&crc.to_le_bytes());
        Ok(buf)
    }

    /// Parse and verify one datagram. Checks run cheapest-first: length,
    /// magic, version, CRC, then field ranges. Any single-bit corruption of a
    /// valid frame fails one of these checks.
    pub fn decode(buf: &[u8]) -> Result<EncoderFrame, WireError> {
        if buf.len() != FRAME_LEN {
            return Err(WireError::WrongLength { got: buf.len() });
        }
        if buf[0..2] != MAGIC {
            return Err(WireError::BadMagic {
                got: [buf[0], buf[1]],
            });
        }
        if buf[2] != PROTOCOL_VERSION {
            return Err(WireError::BadVersion { got: buf[2] });
        }
        let stored = u32::from_le_bytes(buf[16..20].try_into().unwrap());
        let computed = crc32_ieee(&buf[0..16]);
        if stored != computed {
            return Err(WireError::BadCrc { stored, computed });
        }
        let handlebar_raw = u16::from_le_bytes(buf[12..14].try_into().unwrap());
        if handlebar_raw > HANDLEBAR_RAW_MAX {
            return Err(WireError::HandlebarOutOfRange { got: handlebar_raw });
        }
        Ok(EncoderFrame {
            seq: u32::from_le_bytes(buf[4..8].try_into().unwrap()),
            device_time_ms: u32::from_le_bytes(buf[8..12].try_into().unwrap()),
            handlebar_raw,
            treadmill_delta: i16::from_le_bytes(buf[14..16].try_into().unwrap()),
            flags: buf[3],
        })
    }
}

const CRC_POLY_REFLECTED: u32 = 0xEDB8_8320;

const CRC_TABLE: [u32; 256] = build_crc_table();

const fn build_crc_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u32;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 1 != 0 {
                (crc >> 1) ^ CRC_POLY_REFLECTED
            } else {
                crc >> 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

/// CRC-32 as used by Ethernet/PNG/zlib: reflected polynomial `0xEDB88320`,
/// initial value `0xFFFFFFFF`, final complement.
pub fn crc32_ieee(data: &[u8]) -> u32 {
    let mut crc = !0u32;
    for &byte in data {
        let idx = ((crc ^ byte as u32) & 0xFF) as usize;
        crc = (crc >> 8) ^ CRC_TABLE[idx];
    }
    !crc
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bit-at-a-time CRC, kept as an independent cross-check of the
    /// table-driven implementation.
    fn crc32_bitwise(data: &[u8]) -> u32 {
        let mut crc = !0u32;
        for &byte in data {
            crc ^= byte as u32;
            for _ in 0..8 {
                crc = if crc & 1 != 0 {
                    (crc >> 1) ^ CRC_POLY_REFLECTED
                } else {
                    crc >> 1
                };
            }
        }
        !crc
    }

    fn sample_frame() -> EncoderFrame {
        EncoderFrame {
            seq: 7,
            device_time_ms: 123_456,
            handlebar_raw: 12_288,
            treadmill_delta: -40,
            flags: 0,
        }
    }

    #[test]
    fn crc_known_vectors() {
        // Reference values computed with zlib.crc32.
        assert_eq!(crc32_ieee(b"123456789"), 0xCBF4_3926);
        assert_eq!(crc32_ieee(b""), 0x0000_0000);
    }

    #[test]
    fn crc_matches_bitwise_reference() {
        let mut data = Vec::new();
        let mut x: u32 = 0x1234_5678;
        for _ in 0..257 {
            x = x.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
            data.push((x >> 24) as u8);
            assert_eq!(crc32_ieee(&data), crc32_bitwise(&data));
        }
    }

    #[test]
    fn encode_layout_matches_wire_format() {
        let frame = EncoderFrame {
            seq: 0,
            device_time_ms: 0,
            handlebar_raw: 0,
            treadmill_delta: 0,
            flags: FLAG_ABSOLUTE_ENCODER_VALID,
        };
        let buf = frame.encode().unwrap();
        assert_eq!(
            &buf[0..16],
            &[0x4C, 0x53, 0x01, 0x01, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]
        );
        // CRC over the 16 header bytes, reference value from zlib.crc32.
        assert_eq!(
            u32::from_le_bytes(buf[16..20].try_into().unwrap()),
            0xBA9A_D8DF
        );

        let buf2 = sample_frame().encode().unwrap();
        assert_eq!(
            buf2.as_slice(),
            &[
                0x4C, 0x53, 0x01, 0x00, 0x07, 0x00, 0x00, 0x00, 0x40, 0xE2, 0x01, 0x00, 0x00, 0x30,
                0xD8, 0xFF, 0xA9, 0x0B, 0xE2, 0x25
            ]
        );
    }

    #[test]
    fn roundtrip_preserves_all_fields() {
        let frame = EncoderFrame {
            seq: u32::MAX,
            device_time_ms: u32::MAX - 9,
            handlebar_raw: HANDLEBAR_RAW_MAX,
            treadmill_delta: i16::MIN,
            flags: 0xFF,
        };
        assert_eq!(
            EncoderFrame::decode(&frame.encode().unwrap()).unwrap(),
            frame
        );
    }

    #[test]
    fn decode_rejects_wrong_length() {
        let buf = sample_frame().encode().unwrap();
        assert_eq!(
            EncoderFrame::decode(&buf[..19]),
            Err(WireError::WrongLength { got: 19 })
        );
        let mut long = buf.to_vec();
        long.push(0);
        assert_eq!(
            EncoderFrame::decode(&long),
            Err(WireError::WrongLength { got: 21 })
        );
        assert_eq!(
            EncoderFrame::decode(&[]),
            Err(WireError::WrongLength { got: 0 })
        );
    }

    #[test]
    fn decode_rejects_bad_magic() {
        let mut buf = sample_frame().encode().unwrap();
        buf[0] = 0x4D;
        assert_eq!(
            EncoderFrame::decode(&buf),
            Err(WireError::BadMagic { got: [0x4D, 0x53] })
        );
    }

    #[test]
    fn decode_rejects_bad_version() {
        let mut buf = sample_frame().encode().unwrap();
        buf[2] = 0x02;
        // Re-seal the CRC so the version check is what trips.
        let crc = crc32_ieee(&buf[0..16]);
        buf[16..20].copy_from_slice(&crc.to_le_bytes());
        assert_eq!(
            EncoderFrame::decode(&buf),
            Err(WireError::BadVersion { got: 2 })
        );
    }

    #[test]
    fn decode_rejects_bad_crc() {
        let mut buf = sample_frame().encode().unwrap();
        buf[9] ^= 0x10;
        assert!(matches!(
            EncoderFrame::decode(&buf),
            Err(WireError::BadCrc { .. })
        ));
    }

    #[test]
    fn decode_rejects_out_of_range_handlebar() {
        let mut buf = sample_frame().encode().unwrap();
        buf[12..14].copy_from_slice(&(HANDLEBAR_RAW_MAX + 1).to_le_bytes());
        let crc = crc32_ieee(&buf[0..16]);
        buf[16..20].copy_from_slice(&crc.to_le_bytes());
        assert_eq!(
            EncoderFrame::decode(&buf),
            Err(WireError::HandlebarOutOfRange {
                got: HANDLEBAR_RAW_MAX + 1
            })
        );
    }

    #[test]
    fn encode_rejects_out_of_range_handlebar() {
        let mut frame = sample_frame();
        frame.handlebar_raw = HANDLEBAR_RAW_MAX + 1;
        assert_eq!(
            frame.encode(),
            Err(WireError::HandlebarOutOfRange {
                got: HANDLEBAR_RAW_MAX + 1
            })
        );
    }

    #[test]
    fn every_single_bit_flip_is_rejected() {
        let buf = sample_frame().encode().unwrap();
        for bit in 0..FRAME_LEN * 8 {
            let mut corrupted = buf;
            corrupted[bit / 8] ^= 1 << (bit % 8);
            assert!(
                EncoderFrame::decode(&corrupted).is_err(),
                "bit {bit} flip went undetected"
            );
        }
    }
}
