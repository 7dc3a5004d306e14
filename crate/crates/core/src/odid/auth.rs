//! Authentication bundle and its split across four auth pages.

use super::frames::{split_header, MessageType};
use super::{
    CodecError, AUTH_BUNDLE_LEN, AUTH_PAGE0_DATA_LEN, AUTH_PAGEN_DATA_LEN, AUTH_PAGE_COUNT, AUTH_TYPE_TBRD,
    FRAME_LEN,
};
use crate::tesla::{ChainKey, MAC_LEN};

/// `i ‖ MAC ‖ K_{i-d}`: 4 + 32 + 32 = 68 bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthBundle {
    pub interval: u32,
    pub mac: [u8; MAC_LEN],
    pub disclosed_key: ChainKey,
}

impl AuthBundle {
    pub fn to_bytes(&self) -> [u8; AUTH_BUNDLE_LEN] {
        let mut out = [0u8; AUTH_BUNDLE_LEN];
        out[..4].copy_from_slice(&self.interval.to_be_bytes());
        out[4..36].copy_from_slice(&self.mac);
        out[36..].copy_from_slice(self.disclosed_key.as_bytes());
        out
    }

    pub fn from_bytes(raw: &[u8]) -> Result<Self, CodecError> {
        if raw.len() != AUTH_BUNDLE_LEN {
            return Err(CodecError::Truncated {
                expected: AUTH_BUNDLE_LEN,
                got: raw.len(),
            });
        }
        Ok(Self {
            interval: u32::from_be_bytes([raw[0], raw[1], raw[2], raw[3]]),
            mac: raw[4..36].try_into().unwrap(),
            disclosed_key: ChainKey::from_slice(&raw[36..]).unwrap(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthPage {
    /// Page 0: header fields plus the first 17 bytes of data.
    Header {
        last_page_index: u8,
        length: u8,
        /// Seconds since 2019-01-01T00:00:00Z. Not covered by the MAC.
        timestamp: u32,
        data: [u8; AUTH_PAGE0_DATA_LEN],
    },
    /// Pages 1..=15: 23 bytes of data each.
    Continuation {
        index: u8,
        data: [u8; AUTH_PAGEN_DATA_LEN],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthPageMsg {
    pub auth_type: u8,
    pub page: AuthPage,
}

impl AuthPageMsg {
    pub fn page_index(&self) -> u8 {
        match self.page {
            AuthPage::Header { .. } => 0,
            AuthPage::Continuation { index, .. } => index,
        }
    }

    pub(crate) fn encode_body(&self, out: &mut [u8; FRAME_LEN]) -> Result<(), CodecError> {
        if self.auth_type > 0x0F {
            return Err(CodecError::OutOfRange {
                field: "auth_type",
                detail: self.auth_type.to_string(),
            });
        }
        let idx = self.page_index();
        if idx > 0x0F || matches!(self.page, AuthPage::Continuation { index: 0, .. }) {
            return Err(CodecError::OutOfRange {
                field: "page_index",
                detail: idx.to_string(),
            });
        }
        out[1] = (self.auth_type << 4) | idx;
        match &self.page {
            AuthPage::Header {
                last_page_index,
                length,
                timestamp,
                data,
            } => {
                out[2] = *last_page_index;
                out[3] = *length;
                out[4..8].copy_from_slice(&timestamp.to_le_bytes());
                out[8..].copy_from_slice(data);
            }
            AuthPage::Continuation { data, .. } => out[2..].copy_from_slice(data),
        }
        Ok(())
    }

    pub(crate) fn decode_body(raw: &[u8]) -> Result<Self, CodecError> {
        debug_assert_eq!(split_header(raw[0]).ok(), Some(MessageType::Auth));
        let auth_type = raw[1] >> 4;
        let index = raw[1] & 0x0F;
        let page = if index == 0 {
            AuthPage::Header {
                last_page_index: raw[2],
                length: raw[3],
                timestamp: u32::from_le_bytes([raw[4], raw[5], raw[6], raw[7]]),
                data: raw[8..25].try_into().unwrap(),
            }
        } else {
            AuthPage::Continuation {
                index,
                data: raw[2..25].try_into().unwrap(),
            }
        };
        Ok(Self { auth_type, page })
    }
}

/// Split a bundle over four pages: bytes 0..17, 17..40, 40..63, 63..68 plus
/// zero padding.
pub fn paginate_auth(bundle: &AuthBundle, timestamp: u32) -> [AuthPageMsg; AUTH_PAGE_COUNT] {
    let bytes = bundle.to_bytes();
    let mut padded = [0u8; AUTH_PAGE0_DATA_LEN + 3 * AUTH_PAGEN_DATA_LEN];
    padded[..AUTH_BUNDLE_LEN].copy_from_slice(&bytes);

    let header = AuthPageMsg {
        auth_type: AUTH_TYPE_TBRD,
        page: AuthPage::Header {
            last_page_index: (AUTH_PAGE_COUNT - 1) as u8,
            length: AUTH_BUNDLE_LEN as u8,
            timestamp,
            data: padded[..AUTH_PAGE0_DATA_LEN].try_into().unwrap(),
        },
    };
    let cont = |index: usize| {
        let start = AUTH_PAGE0_DATA_LEN + (index - 1) * AUTH_PAGEN_DATA_LEN;
        AuthPageMsg {
            auth_type: AUTH_TYPE_TBRD,
            page: AuthPage::Continuation {
                index: index as u8,
                data: padded[start..start + AUTH_PAGEN_DATA_LEN].try_into().unwrap(),
            },
        }
    };
    [header, cont(1), cont(2), cont(3)]
}

/// Inverse of [`paginate_auth`]. Pages may arrive in any order but each of
/// 0..=3 must appear exactly once.
pub fn reassemble_auth(pages: &[AuthPageMsg]) -> Result<AuthBundle, CodecError> {
    let mut slots: [Option<&AuthPageMsg>; AUTH_PAGE_COUNT] = [None; AUTH_PAGE_COUNT];
    for p in pages {
        if p.auth_type != AUTH_TYPE_TBRD {
            return Err(CodecError::AuthType(p.auth_type));
        }
        let idx = p.page_index();
        let slot = slots.get_mut(idx as usize).ok_or(CodecError::PageOrder(idx))?;
        if slot.is_some() {
            return Err(CodecError::DuplicatePage(idx));
        }
        *slot = Some(p);
    }
    let mut data = Vec::with_capacity(AUTH_PAGE0_DATA_LEN + 3 * AUTH_PAGEN_DATA_LEN);
    for (idx, slot) in slots.iter().enumerate() {
        let page = slot.ok_or(CodecError::MissingPage(idx as u8))?;
        match &page.page {
            AuthPage::Header {
                last_page_index,
                length,
                data: d,
                ..
            } => {
                if *length as usize != AUTH_BUNDLE_LEN {
                    return Err(CodecError::AuthLength(*length));
                }
                if *last_page_index as usize != AUTH_PAGE_COUNT - 1 {
                    return Err(CodecError::PageOrder(*last_page_index));
                }
                data.extend_from_slice(d);
            }
            AuthPage::Continuation { data: d, .. } => data.extend_from_slice(d),
        }
    }
    AuthBundle::from_bytes(&data[..AUTH_BUNDLE_LEN])
}
