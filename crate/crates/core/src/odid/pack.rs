use super::frames::{split_header, Frame, MessageType};
use super::{
    decode_frame, encode_frame, reassemble_auth, AuthBundle, AuthPageMsg, BasicIdMsg, CodecError,
    LocationMsg, OperatorIdMsg, SystemMsg, AUTH_PAGE_COUNT, AUTH_PAYLOAD_LEN, FRAME_LEN, PACK_FRAMES_AUTH,
    PACK_FRAMES_PLAIN, PACK_HEADER_LEN,
};

/// The MAC input: big-endian interval counter followed by the Basic ID,
/// Location, System and Operator ID frames.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct AuthPayload(pub [u8; AUTH_PAYLOAD_LEN]);

impl AuthPayload {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl std::fmt::Debug for AuthPayload {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "AuthPayload({})", hex::encode(self.0))
    }
}

pub fn build_auth_payload(
    interval: u32,
    basic: &BasicIdMsg,
    loc: &LocationMsg,
    sys: &SystemMsg,
    op: &OperatorIdMsg,
) -> Result<AuthPayload, CodecError> {
    if interval == 0 {
        return Err(CodecError::OutOfRange {
            field: "interval",
            detail: "interval counter starts at 1".into(),
        });
    }
    let mut out = [0u8; AUTH_PAYLOAD_LEN];
    out[..4].copy_from_slice(&interval.to_be_bytes());
    let frames = [
        encode_frame(&Frame::BasicId(basic.clone()))?,
        encode_frame(&Frame::Location(*loc))?,
        encode_frame(&Frame::System(*sys))?,
        encode_frame(&Frame::OperatorId(op.clone()))?,
    ];
    for (k, f) in frames.iter().enumerate() {
        out[4 + k * FRAME_LEN..4 + (k + 1) * FRAME_LEN].copy_from_slice(f);
    }
    Ok(AuthPayload(out))
}

/// A type 0xF message pack: four data frames, optionally followed by the
/// four authentication pages.
#[derive(Debug, Clone, PartialEq)]
pub struct MessagePack {
    pub basic_id: BasicIdMsg,
    pub location: LocationMsg,
    pub system: SystemMsg,
    pub operator_id: OperatorIdMsg,
    pub auth: Option<[AuthPageMsg; AUTH_PAGE_COUNT]>,
}

impl MessagePack {
    pub fn frame_count(&self) -> usize {
        if self.auth.is_some() {
            PACK_FRAMES_AUTH
        } else {
            PACK_FRAMES_PLAIN
        }
    }

    pub fn auth_bundle(&self) -> Option<Result<AuthBundle, CodecError>> {
        self.auth.as_ref().map(|p| reassemble_auth(p))
    }

    /// Rebuild the MAC input for the given interval counter.
    pub fn auth_payload(&self, interval: u32) -> Result<AuthPayload, CodecError> {
        build_auth_payload(
            interval,
            &self.basic_id,
            &self.location,
            &self.system,
            &self.operator_id,
        )
    }
}

const PLAIN_ORDER: [MessageType; PACK_FRAMES_PLAIN] = [
    MessageType::BasicId,
    MessageType::Location,
    MessageType::System,
    MessageType::OperatorId,
];

pub fn encode_pack(pack: &MessagePack) -> Result<Vec<u8>, CodecError> {
    let count = pack.frame_count();
    let mut out = Vec::with_capacity(PACK_HEADER_LEN + count * FRAME_LEN);
    out.push(MessageType::Pack.header());
    out.push(FRAME_LEN as u8);
    out.push(count as u8);
    out.extend_from_slice(&encode_frame(&Frame::BasicId(pack.basic_id.clone()))?);
    out.extend_from_slice(&encode_frame(&Frame::Location(pack.location))?);
    out.extend_from_slice(&encode_frame(&Frame::System(pack.system))?);
    out.extend_from_slice(&encode_frame(&Frame::OperatorId(pack.operator_id.clone()))?);
    if let Some(pages) = &pack.auth {
        for (k, p) in pages.iter().enumerate() {
            if p.page_index() as usize != k {
                return Err(CodecError::PageOrder(p.page_index()));
            }
            out.extend_from_slice(&encode_frame(&Frame::Auth(*p))?);
        }
    }
    Ok(out)
}

pub fn decode_pack(raw: &[u8]) -> Result<MessagePack, CodecError> {
    if raw.len() < PACK_HEADER_LEN {
        return Err(CodecError::Truncated {
            expected: PACK_HEADER_LEN,
            got: raw.len(),
        });
    }
    let ty = split_header(raw[0])?;
    if ty != MessageType::Pack {
        return Err(CodecError::UnexpectedType {
            expected: MessageType::Pack,
            found: ty,
        });
    }
    if raw[1] as usize != FRAME_LEN {
        return Err(CodecError::PackMessageSize(raw[1]));
    }
    let count = raw[2] as usize;
    if count != PACK_FRAMES_AUTH && count != PACK_FRAMES_PLAIN {
        return Err(CodecError::PackCount(raw[2]));
    }
    let expected = PACK_HEADER_LEN + count * FRAME_LEN;
    if raw.len() < expected {
        return Err(CodecError::Truncated {
            expected,
            got: raw.len(),
        });
    }
    if raw.len() > expected {
        return Err(CodecError::TrailingBytes {
            expected,
            got: raw.len(),
        });
    }
    let mut frames = raw[PACK_HEADER_LEN..]
        .chunks_exact(FRAME_LEN)
        .map(decode_frame)
        .enumerate();

    let mut next = |want: MessageType| -> Result<Frame, CodecError> {
        let (slot, f) = frames.next().expect("count checked above");
        let f = f?;
        if f.message_type() != want {
            return Err(CodecError::PackOrder {
                slot,
                found: f.message_type(),
            });
        }
        Ok(f)
    };
    let Frame::BasicId(basic_id) = next(PLAIN_ORDER[0])? else {
        unreachable!()
    };
    let Frame::Location(location) = next(PLAIN_ORDER[1])? else {
        unreachable!()
    };
    let Frame::System(system) = next(PLAIN_ORDER[2])? else {
        unreachable!()
    };
    let Frame::OperatorId(operator_id) = next(PLAIN_ORDER[3])? else {
        unreachable!()
    };

    let auth = if count == PACK_FRAMES_AUTH {
        let mut pages = Vec::with_capacity(AUTH_PAGE_COUNT);
        for k in 0..AUTH_PAGE_COUNT {
            let Frame::Auth(p) = next(MessageType::Auth)? else {
                unreachable!()
            };
            if p.page_index() as usize != k {
                return Err(
                    if pages
                        .iter()
                        .any(|q: &AuthPageMsg| q.page_index() == p.page_index())
                    {
                        CodecError::DuplicatePage(p.page_index())
                    } else {
                        CodecError::MissingPage(k as u8)
                    },
                );
            }
            pages.push(p);
        }
        Some(pages.try_into().expect("four pages"))
    } else {
        None
    };
    Ok(MessagePack {
        basic_id,
        location,
        system,
        operator_id,
        auth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odid::{
        paginate_auth, AsciiId, IdType, OperationalStatus, OperatorLocationType, UaType, PACK_LEN,
        PLAIN_PACK_LEN,
    };
    use crate::tesla::ChainKey;

    fn frames() -> (BasicIdMsg, LocationMsg, SystemMsg, OperatorIdMsg) {
        (
            BasicIdMsg {
                id_type: IdType::Serial,
                ua_type: UaType::Multirotor,
                uas_id: AsciiId::new("TESTUAS123").unwrap(),
            },
            LocationMsg {
                status: OperationalStatus::Airborne,
                direction_deg: 45,
                speed_mps: 5.0,
                vspeed_mps: 0.0,
                lat_deg: 42.3398,
                lon_deg: -71.0892,
                alt_m: 5.0,
                timestamp_ds: 100,
            },
            SystemMsg {
                operator_location_type: OperatorLocationType::TakeOff,
                operator_lat_deg: 42.3397,
                operator_lon_deg: -71.0893,
            },
            OperatorIdMsg {
                operator_id: AsciiId::new("OP-1").unwrap(),
            },
        )
    }

    fn pack(auth: bool) -> MessagePack {
        let (b, l, s, o) = frames();
        let bundle = AuthBundle {
            interval: 4,
            mac: [0x11; 32],
            disclosed_key: ChainKey([0x22; 32]),
        };
        MessagePack {
            basic_id: b,
            location: l,
            system: s,
            operator_id: o,
            auth: auth.then(|| paginate_auth(&bundle, 7)),
        }
    }

    #[test]
    fn payload_shape() {
        let (b, l, s, o) = frames();
        let p = build_auth_payload(1, &b, &l, &s, &o).unwrap();
        assert_eq!(p.0.len(), 104);
        assert_eq!(&p.0[..4], &[0, 0, 0, 1]);
        assert_eq!(p.0[4], 0x02);
        assert_eq!(p.0[29], 0x12);
        assert_eq!(p.0[54], 0x42);
        assert_eq!(p.0[79], 0x52);
        let mut l2 = l;
        l2.lat_deg += 0.0001;
        assert_ne!(build_auth_payload(1, &b, &l2, &s, &o).unwrap(), p);
        assert!(build_auth_payload(0, &b, &l, &s, &o).is_err());
    }

    #[test]
    fn pack_sizes_and_round_trip() {
        let full = encode_pack(&pack(true)).unwrap();
        assert_eq!(full.len(), PACK_LEN);
        assert_eq!(full.len(), 203);
        assert_eq!(&full[..3], &[0xF2, 25, 8]);
        assert_eq!(decode_pack(&full).unwrap(), pack(true));

        let plain = encode_pack(&pack(false)).unwrap();
        assert_eq!(plain.len(), PLAIN_PACK_LEN);
        assert_eq!(decode_pack(&plain).unwrap(), pack(false));
    }

    #[test]
    fn pack_rejections() {
        let full = encode_pack(&pack(true)).unwrap();
        let mut seven = full.clone();
        seven[2] = 7;
        assert_eq!(decode_pack(&seven).unwrap_err(), CodecError::PackCount(7));

        let mut size = full.clone();
        size[1] = 24;
        assert_eq!(decode_pack(&size).unwrap_err(), CodecError::PackMessageSize(24));

        assert!(matches!(
            decode_pack(&full[..202]),
            Err(CodecError::Truncated {
                expected: 203,
                got: 202
            })
        ));

        // swap Location and System
        let mut swapped = full.clone();
        let (a, b) = (3 + 25, 3 + 50);
        let loc: Vec<u8> = swapped[a..a + 25].to_vec();
        let sys: Vec<u8> = swapped[b..b + 25].to_vec();
        swapped[a..a + 25].copy_from_slice(&sys);
        swapped[b..b + 25].copy_from_slice(&loc);
        assert!(matches!(
            decode_pack(&swapped),
            Err(CodecError::PackOrder { slot: 1, .. })
        ));

        // auth page 2 replaced by a second copy of page 1
        let mut dup = full.clone();
        let p1: Vec<u8> = dup[3 + 5 * 25..3 + 6 * 25].to_vec();
        dup[3 + 6 * 25..3 + 7 * 25].copy_from_slice(&p1);
        assert_eq!(decode_pack(&dup).unwrap_err(), CodecError::DuplicatePage(1));

        let mut corrupt = full;
        corrupt[3 + 25] = 0x92;
        assert_eq!(decode_pack(&corrupt).unwrap_err(), CodecError::UnknownType(9));
    }
}
