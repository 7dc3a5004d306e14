use super::{AuthPageMsg, CodecError, FRAME_LEN, PROTOCOL_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageType {
    BasicId,
    Location,
    Auth,
    System,
    OperatorId,
    Pack,
}

impl MessageType {
    pub fn nibble(self) -> u8 {
        match self {
            MessageType::BasicId => 0x0,
            MessageType::Location => 0x1,
            MessageType::Auth => 0x2,
            MessageType::System => 0x4,
            MessageType::OperatorId => 0x5,
            MessageType::Pack => 0xF,
        }
    }

    pub fn from_nibble(n: u8) -> Result<Self, CodecError> {
        Ok(match n {
            0x0 => MessageType::BasicId,
            0x1 => MessageType::Location,
            0x2 => MessageType::Auth,
            0x4 => MessageType::System,
            0x5 => MessageType::OperatorId,
            0xF => MessageType::Pack,
            other => return Err(CodecError::UnknownType(other)),
        })
    }

    pub(crate) fn header(self) -> u8 {
        (self.nibble() << 4) | PROTOCOL_VERSION
    }
}

/// Parse byte 0 of a frame.
pub(crate) fn split_header(b: u8) -> Result<MessageType, CodecError> {
    let ty = MessageType::from_nibble(b >> 4)?;
    if b & 0x0F != PROTOCOL_VERSION {
        return Err(CodecError::UnsupportedVersion(b & 0x0F));
    }
    Ok(ty)
}

/// Printable ASCII identifier of at most 20 bytes, zero-padded on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AsciiId(String);

impl AsciiId {
    pub const MAX_LEN: usize = 20;

    pub fn new(s: &str) -> Result<Self, CodecError> {
        if s.len() > Self::MAX_LEN {
            return Err(CodecError::OutOfRange {
                field: "id",
                detail: format!("{} bytes exceeds {}", s.len(), Self::MAX_LEN),
            });
        }
        if let Some(c) = s.bytes().find(|b| !(0x20..=0x7e).contains(b)) {
            return Err(CodecError::OutOfRange {
                field: "id",
                detail: format!("non-printable byte 0x{c:02x}"),
            });
        }
        Ok(Self(s.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn write(&self, out: &mut [u8]) {
        out[..self.0.len()].copy_from_slice(self.0.as_bytes());
    }

    fn read(raw: &[u8]) -> Result<Self, CodecError> {
        let end = raw.iter().position(|&b| b == 0).unwrap_or(raw.len());
        if raw[end..].iter().any(|&b| b != 0) {
            return Err(CodecError::OutOfRange {
                field: "id",
                detail: "data after zero padding".into(),
            });
        }
        let s = std::str::from_utf8(&raw[..end]).map_err(|_| CodecError::OutOfRange {
            field: "id",
            detail: "not ASCII".into(),
        })?;
        Self::new(s)
    }
}

impl std::fmt::Display for AsciiId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IdType {
    Serial = 1,
    CaaAssigned = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum UaType {
    None = 0,
    Aeroplane = 1,
    #[default]
    Multirotor = 2,
    Gyroplane = 3,
    HybridLift = 4,
    Ornithopter = 5,
    Glider = 6,
    Kite = 7,
}

impl UaType {
    fn from_u8(v: u8) -> Result<Self, CodecError> {
        Ok(match v {
            0 => UaType::None,
            1 => UaType::Aeroplane,
            2 => UaType::Multirotor,
            3 => UaType::Gyroplane,
            4 => UaType::HybridLift,
            5 => UaType::Ornithopter,
            6 => UaType::Glider,
            7 => UaType::Kite,
            v => return Err(range("ua_type", v)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicIdMsg {
    pub id_type: IdType,
    pub ua_type: UaType,
    pub uas_id: AsciiId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperationalStatus {
    Ground = 1,
    Airborne = 2,
}

/// Position and velocity. Values are stored in physical units and
/// quantized on encode; see the constants below for the step sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationMsg {
    pub status: OperationalStatus,
    pub direction_deg: u16,
    pub speed_mps: f64,
    pub vspeed_mps: f64,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub alt_m: f64,
    /// Tenths of a second past the hour.
    pub timestamp_ds: u16,
}

impl LocationMsg {
    pub const SPEED_STEP_LOW: f64 = 0.25;
    pub const SPEED_STEP_HIGH: f64 = 0.75;
    pub const SPEED_LOW_MAX: f64 = 255.0 * 0.25;
    pub const SPEED_MAX: f64 = Self::SPEED_LOW_MAX + 254.0 * 0.75;
    pub const VSPEED_STEP: f64 = 0.5;
    pub const VSPEED_MAX: f64 = 62.0;
    pub const ALT_STEP: f64 = 0.5;
    pub const ALT_OFFSET: f64 = 1000.0;
    pub const ALT_MAX: f64 = 65535.0 * 0.5 - 1000.0;
    pub const LATLON_SCALE: f64 = 1e7;
    pub const TIMESTAMP_MAX: u16 = 35999;

    /// Round-trip through the wire representation.
    pub fn quantized(&self) -> Result<Self, CodecError> {
        match decode_frame(&encode_frame(&Frame::Location(*self))?)? {
            Frame::Location(l) => Ok(l),
            _ => unreachable!(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum OperatorLocationType {
    #[default]
    TakeOff = 0,
    LiveGnss = 1,
    Fixed = 2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemMsg {
    pub operator_location_type: OperatorLocationType,
    pub operator_lat_deg: f64,
    pub operator_lon_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorIdMsg {
    pub operator_id: AsciiId,
}

/// Any single 25-byte message.
#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    BasicId(BasicIdMsg),
    Location(LocationMsg),
    Auth(AuthPageMsg),
    System(SystemMsg),
    OperatorId(OperatorIdMsg),
}

impl Frame {
    pub fn message_type(&self) -> MessageType {
        match self {
            Frame::BasicId(_) => MessageType::BasicId,
            Frame::Location(_) => MessageType::Location,
            Frame::Auth(_) => MessageType::Auth,
            Frame::System(_) => MessageType::System,
            Frame::OperatorId(_) => MessageType::OperatorId,
        }
    }
}

fn range(field: &'static str, v: impl std::fmt::Display) -> CodecError {
    CodecError::OutOfRange {
        field,
        detail: v.to_string(),
    }
}

fn check_finite(field: &'static str, v: f64) -> Result<(), CodecError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(range(field, v))
    }
}

pub(crate) fn encode_latlon(lat: f64, lon: f64) -> Result<(i32, i32), CodecError> {
    check_finite("lat_deg", lat)?;
    check_finite("lon_deg", lon)?;
    if !(-90.0..=90.0).contains(&lat) {
        return Err(range("lat_deg", lat));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(range("lon_deg", lon));
    }
    Ok((
        (lat * LocationMsg::LATLON_SCALE).round() as i32,
        (lon * LocationMsg::LATLON_SCALE).round() as i32,
    ))
}

pub(crate) fn decode_latlon(lat: i32, lon: i32) -> Result<(f64, f64), CodecError> {
    let (lat, lon) = (
        lat as f64 / LocationMsg::LATLON_SCALE,
        lon as f64 / LocationMsg::LATLON_SCALE,
    );
    if !(-90.0..=90.0).contains(&lat) {
        return Err(range("lat_deg", lat));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(range("lon_deg", lon));
    }
    Ok((lat, lon))
}

fn le_i32(b: &[u8]) -> i32 {
    i32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

fn le_u16(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn encode_location(m: &LocationMsg, out: &mut [u8; FRAME_LEN]) -> Result<(), CodecError> {
    if m.direction_deg > 359 {
        return Err(range("direction_deg", m.direction_deg));
    }
    check_finite("speed_mps", m.speed_mps)?;
    if !(0.0..=LocationMsg::SPEED_MAX).contains(&m.speed_mps) {
        return Err(range("speed_mps", m.speed_mps));
    }
    check_finite("vspeed_mps", m.vspeed_mps)?;
    if m.vspeed_mps.abs() > LocationMsg::VSPEED_MAX {
        return Err(range("vspeed_mps", m.vspeed_mps));
    }
    check_finite("alt_m", m.alt_m)?;
    if !(-LocationMsg::ALT_OFFSET..=LocationMsg::ALT_MAX).contains(&m.alt_m) {
        return Err(range("alt_m", m.alt_m));
    }
    if m.timestamp_ds > LocationMsg::TIMESTAMP_MAX {
        return Err(range("timestamp_ds", m.timestamp_ds));
    }
    let (lat, lon) = encode_latlon(m.lat_deg, m.lon_deg)?;

    let (dir_byte, ew) = if m.direction_deg < 180 {
        (m.direction_deg as u8, 0)
    } else {
        ((m.direction_deg - 180) as u8, 1)
    };
    // 63.75 is reachable from both ranges; always emit the low-range form
    let (speed_byte, mult) = if m.speed_mps <= LocationMsg::SPEED_LOW_MAX + LocationMsg::SPEED_STEP_HIGH / 2.0
    {
        (
            (m.speed_mps / LocationMsg::SPEED_STEP_LOW).round().min(255.0) as u8,
            0,
        )
    } else {
        let v = ((m.speed_mps - LocationMsg::SPEED_LOW_MAX) / LocationMsg::SPEED_STEP_HIGH).round();
        (v.min(254.0) as u8, 1)
    };
    let vspeed = (m.vspeed_mps / LocationMsg::VSPEED_STEP).round() as i8;
    let alt = ((m.alt_m + LocationMsg::ALT_OFFSET) / LocationMsg::ALT_STEP).round() as u16;

    out[1] = ((m.status as u8) << 4) | (ew << 1) | mult;
    out[2] = dir_byte;
    out[3] = speed_byte;
    out[4] = vspeed as u8;
    out[5..9].copy_from_slice(&lat.to_le_bytes());
    out[9..13].copy_from_slice(&lon.to_le_bytes());
    // 13..15 pressure altitude: not reported
    out[15..17].copy_from_slice(&alt.to_le_bytes());
    // 17..21 height and accuracies: not reported
    out[21..23].copy_from_slice(&m.timestamp_ds.to_le_bytes());
    Ok(())
}

fn decode_location(raw: &[u8]) -> Result<LocationMsg, CodecError> {
    let status = match raw[1] >> 4 {
        1 => OperationalStatus::Ground,
        2 => OperationalStatus::Airborne,
        v => return Err(range("status", v)),
    };
    let ew = (raw[1] >> 1) & 1;
    let mult = raw[1] & 1;
    if raw[2] > 179 {
        return Err(range("direction_deg", raw[2]));
    }
    let direction_deg = raw[2] as u16 + if ew == 1 { 180 } else { 0 };
    let speed_mps = if mult == 0 {
        raw[3] as f64 * LocationMsg::SPEED_STEP_LOW
    } else {
        if raw[3] == 255 {
            return Err(range("speed_mps", "unknown"));
        }
        LocationMsg::SPEED_LOW_MAX + raw[3] as f64 * LocationMsg::SPEED_STEP_HIGH
    };
    let vs = raw[4] as i8;
    if (vs as i32).abs() > 124 {
        return Err(range("vspeed_mps", vs));
    }
    let vspeed_mps = vs as f64 * LocationMsg::VSPEED_STEP;
    let (lat_deg, lon_deg) = decode_latlon(le_i32(&raw[5..9]), le_i32(&raw[9..13]))?;
    let alt_m = le_u16(&raw[15..17]) as f64 * LocationMsg::ALT_STEP - LocationMsg::ALT_OFFSET;
    let timestamp_ds = le_u16(&raw[21..23]);
    if timestamp_ds > LocationMsg::TIMESTAMP_MAX {
        return Err(range("timestamp_ds", timestamp_ds));
    }
    Ok(LocationMsg {
        status,
        direction_deg,
        speed_mps,
        vspeed_mps,
        lat_deg,
        lon_deg,
        alt_m,
        timestamp_ds,
    })
}

/// Encode one typed message into its 25-byte frame.
pub fn encode_frame(msg: &Frame) -> Result<[u8; FRAME_LEN], CodecError> {
    let mut out = [0u8; FRAME_LEN];
    out[0] = msg.message_type().header();
    match msg {
        Frame::BasicId(m) => {
            out[1] = ((m.id_type as u8) << 4) | m.ua_type as u8;
            m.uas_id.write(&mut out[2..22]);
        }
        Frame::Location(m) => encode_location(m, &mut out)?,
        Frame::Auth(p) => p.encode_body(&mut out)?,
        Frame::System(m) => {
            let (lat, lon) = encode_latlon(m.operator_lat_deg, m.operator_lon_deg)?;
            out[1] = m.operator_location_type as u8;
            out[2..6].copy_from_slice(&lat.to_le_bytes());
            out[6..10].copy_from_slice(&lon.to_le_bytes());
        }
        Frame::OperatorId(m) => {
            // operator ID type 0 (operator ID)
            m.operator_id.write(&mut out[2..22]);
        }
    }
    Ok(out)
}

/// Decode a 25-byte frame. Reserved bytes are ignored.
pub fn decode_frame(raw: &[u8]) -> Result<Frame, CodecError> {
    if raw.len() < FRAME_LEN {
        return Err(CodecError::Truncated {
            expected: FRAME_LEN,
            got: raw.len(),
        });
    }
    if raw.len() > FRAME_LEN {
        return Err(CodecError::TrailingBytes {
            expected: FRAME_LEN,
            got: raw.len(),
        });
    }
    Ok(match split_header(raw[0])? {
        MessageType::BasicId => {
            let id_type = match raw[1] >> 4 {
                1 => IdType::Serial,
                2 => IdType::CaaAssigned,
                v => return Err(range("id_type", v)),
            };
            Frame::BasicId(BasicIdMsg {
                id_type,
                ua_type: UaType::from_u8(raw[1] & 0x0F)?,
                uas_id: AsciiId::read(&raw[2..22])?,
            })
        }
        MessageType::Location => Frame::Location(decode_location(raw)?),
        MessageType::Auth => Frame::Auth(AuthPageMsg::decode_body(raw)?),
        MessageType::System => {
            let operator_location_type = match raw[1] & 0x03 {
                0 => OperatorLocationType::TakeOff,
                1 => OperatorLocationType::LiveGnss,
                2 => OperatorLocationType::Fixed,
                v => return Err(range("operator_location_type", v)),
            };
            let (operator_lat_deg, operator_lon_deg) =
                decode_latlon(le_i32(&raw[2..6]), le_i32(&raw[6..10]))?;
            Frame::System(SystemMsg {
                operator_location_type,
                operator_lat_deg,
                operator_lon_deg,
            })
        }
        MessageType::OperatorId => Frame::OperatorId(OperatorIdMsg {
            operator_id: AsciiId::read(&raw[2..22])?,
        }),
        MessageType::Pack => return Err(CodecError::UnknownType(0xF)),
    })
}
