//! Remote ID message codec.
//!
//! Every message is a 25-byte frame whose first byte carries the message type
//! in the high nibble and the protocol version in the low nibble. Multi-byte
//! integers are little-endian, except the authentication interval counter,
//! which is big-endian. The byte-level layout is documented in
//! `docs/wire-format.md`.

mod auth;
mod frames;
mod pack;

pub use auth::{paginate_auth, reassemble_auth, AuthBundle, AuthPage, AuthPageMsg};
pub use frames::{
    decode_frame, encode_frame, AsciiId, BasicIdMsg, Frame, IdType, LocationMsg, MessageType,
    OperationalStatus, OperatorIdMsg, OperatorLocationType, SystemMsg, UaType,
};
pub use pack::{build_auth_payload, decode_pack, encode_pack, AuthPayload, MessagePack};

use thiserror::Error;

/// Size of every Remote ID message frame.
pub const FRAME_LEN: usize = 25;
/// Protocol version written into the low nibble of byte 0.
pub const PROTOCOL_VERSION: u8 = 2;
/// Serialized authentication data: counter, MAC and disclosed key.
pub const AUTH_BUNDLE_LEN: usize = 68;
/// Interval counter plus the four data frames.
pub const AUTH_PAYLOAD_LEN: usize = 4 + 4 * FRAME_LEN;
/// Authentication data carried by page 0.
pub const AUTH_PAGE0_DATA_LEN: usize = 17;
/// Authentication data carried by every later page.
pub const AUTH_PAGEN_DATA_LEN: usize = 23;
/// Pages needed for one bundle.
pub const AUTH_PAGE_COUNT: usize = 4;
/// Upper bound on authentication data per ASTM F3411.
pub const ASTM_MAX_AUTH_DATA: usize = 255;
/// Frames in a pack with and without authentication pages.
pub const PACK_FRAMES_AUTH: usize = 8;
pub const PACK_FRAMES_PLAIN: usize = 4;
/// Pack header: type/version, message size, message count.
pub const PACK_HEADER_LEN: usize = 3;
pub const PACK_LEN: usize = PACK_HEADER_LEN + PACK_FRAMES_AUTH * FRAME_LEN;
pub const PLAIN_PACK_LEN: usize = PACK_HEADER_LEN + PACK_FRAMES_PLAIN * FRAME_LEN;
/// Auth type nibble used for TBRD bundles (ASTM private-use range).
pub const AUTH_TYPE_TBRD: u8 = 0x0A;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("truncated input: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("trailing bytes: expected {expected} bytes, got {got}")]
    TrailingBytes { expected: usize, got: usize },
    #[error("unknown message type 0x{0:x}")]
    UnknownType(u8),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("expected message type {expected:?}, found {found:?}")]
    UnexpectedType {
        expected: MessageType,
        found: MessageType,
    },
    #[error("field {field} out of range: {detail}")]
    OutOfRange { field: &'static str, detail: String },
    #[error("message pack declares message size {0}, expected 25")]
    PackMessageSize(u8),
    #[error("message pack declares {0} messages, expected 4 or 8")]
    PackCount(u8),
    #[error("message pack slot {slot} holds {found:?}")]
    PackOrder { slot: usize, found: MessageType },
    #[error("authentication page {0} missing")]
    MissingPage(u8),
    #[error("authentication page {0} appears twice")]
    DuplicatePage(u8),
    #[error("authentication page {0} out of order")]
    PageOrder(u8),
    #[error("declared authentication length {0}, expected 68")]
    AuthLength(u8),
    #[error("authentication type 0x{0:x} is not a TBRD bundle")]
    AuthType(u8),
}
