//! Packet capture ingestion: parse classic capture files or JSONL metadata
//! into [`PacketMeta`] records, group them into sessions, and featurize each
//! packet into the unit-hypercube vector consumed by the projection stage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Feature vector dimension produced by [`featurize`].
pub const FEATURE_DIM: usize = 10;

/// Idle gap (microseconds) after which a flow is split into a new session.
pub const DEFAULT_IDLE_TIMEOUT_US: u64 = 60_000_000;

/// Packet direction relative to the canonical session endpoint ordering:
/// inbound packets travel toward the lower (addr, port) endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Direction {
    Inbound = 0,
    Outbound = 1,
}

impl TryFrom<u8> for Direction {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Direction::Inbound),
            1 => Ok(Direction::Outbound),
            other => Err(format!("direction must be 0 or 1, got {other}")),
        }
    }
}

impl From<Direction> for u8 {
    fn from(d: Direction) -> u8 {
        d as u8
    }
}

/// IANA protocol number with the three codes the pipeline cares about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "u8", into = "u8")]
pub enum Protocol {
    Icmp,
    Tcp,
    Udp,
    Other(u8),
}

impl Protocol {
    pub fn code(self) -> u8 {
        match self {
            Protocol::Icmp => 1,
            Protocol::Tcp => 6,
            Protocol::Udp => 17,
            Protocol::Other(c) => c,
        }
    }
}

impl From<u8> for Protocol {
    fn from(c: u8) -> Self {
        match c {
            1 => Protocol::Icmp,
            6 => Protocol::Tcp,
            17 => Protocol::Udp,
            other => Protocol::Other(other),
        }
    }
}

impl From<Protocol> for u8 {
    fn from(p: Protocol) -> u8 {
        p.code()
    }
}

/// One captured packet's metadata record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketMeta {
    /// Canonical 64-bit session identifier (see [`session_key`]).
    pub session_id: u64,
    /// Microseconds since epoch.
    pub timestamp: u64,
    pub direction: Direction,
    pub src_addr: u32,
    pub dst_addr: u32,
    pub src_port: u16,
    pub dst_port: u16,
    /// Original on-wire frame size in bytes.
    pub size_bytes: u16,
    pub protocol: Protocol,
    /// Raw TCP flag byte; 0 for non-TCP packets.
    pub tcp_flags: u8,
    /// TCP timestamp option value; 0 if absent.
    pub tcp_tsval: u32,
    /// Transport payload length in bytes.
    pub payload_len: u16,
}

impl PacketMeta {
    /// Recomputes the canonical session id and direction from the 5-tuple.
    /// Direction is a pure function of the tuple so it survives a round trip
    /// through capture formats that do not store it.
    pub fn canonicalize(&mut self) {
        self.session_id = session_key(
            self.protocol,
            self.src_addr,
            self.src_port,
            self.dst_addr,
            self.dst_port,
        );
        self.direction = canonical_direction(self.src_addr, self.src_port, self.dst_addr, self.dst_port);
    }
}

/// Inbound iff the destination endpoint is the lower (addr, port) endpoint.
pub fn canonical_direction(src_addr: u32, src_port: u16, dst_addr: u32, dst_port: u16) -> Direction {
    if (dst_addr, dst_port) < (src_addr, src_port) {
        Direction::Inbound
    } else {
        Direction::Outbound
    }
}

/// 64-bit FNV-1a hash of the direction-normalized 5-tuple
/// (protocol, min endpoint, max endpoint), endpoints ordered by (addr, port).
pub fn session_key(protocol: Protocol, src_addr: u32, src_port: u16, dst_addr: u32, dst_port: u16) -> u64 {
    let a = (src_addr, src_port);
    let b = (dst_addr, dst_port);
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |byte: u8| {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    eat(protocol.code());
    for b in lo.0.to_le_bytes() {
        eat(b);
    }
    for b in lo.1.to_le_bytes() {
        eat(b);
    }
    for b in hi.0.to_le_bytes() {
        eat(b);
    }
    for b in hi.1.to_le_bytes() {
        eat(b);
    }
    h
}

/// A bidirectional flow's packets between idle-timeout splits.
#[derive(Debug, Clone)]
pub struct Session {
    pub session_id: u64,
    /// Sorted by timestamp, ties broken by capture order.
    pub packets: Vec<PacketMeta>,
    pub first_seen: u64,
    pub last_seen: u64,
}

/// Packet features normalized into the unit hypercube.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Fixed 10-component feature layout. Pure and total; every component is
/// in [0, 1] by construction.
pub fn featurize(p: &PacketMeta) -> FeatureVector {
    let values = vec![
        f64::from(u8::from(p.direction)),
        f64::from(p.src_addr) / 4_294_967_296.0,
        f64::from(p.dst_addr) / 4_294_967_296.0,
        f64::from(p.src_port) / 65_535.0,
        f64::from(p.dst_port) / 65_535.0,
        f64::from(p.size_bytes.min(1514)) / 1514.0,
        f64::from(p.protocol.code()) / 255.0,
        f64::from(p.tcp_flags) / 255.0,
        f64::from(p.tcp_tsval % (1 << 20)) / f64::from(1u32 << 20),
        f64::from(p.payload_len.min(1460)) / 1460.0,
    ];
    FeatureVector { values }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CaptureError {
    #[error("malformed capture header: {0}")]
    MalformedHeader(String),
    #[error("truncated record at offset {offset}: need {need} bytes, {have} remain")]
    TruncatedRecord { offset: usize, need: usize, have: usize },
}

/// Per-category counters for records that were read but not turned into
/// packets.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct SkippedCounts {
    pub non_ethernet: u64,
    pub non_ipv4: u64,
    pub unsupported_protocol: u64,
    pub fragments: u64,
    pub short_record: u64,
}

impl SkippedCounts {
    pub fn total(&self) -> u64 {
        self.non_ethernet + self.non_ipv4 + self.unsupported_protocol + self.fragments + self.short_record
    }
}

/// Result of reading a capture stream. Parsing stops at the first structural
/// error; everything decoded up to that point is kept and the error recorded.
#[derive(Debug, Default)]
pub struct CaptureRead {
    pub packets: Vec<PacketMeta>,
    pub skipped: SkippedCounts,
    pub error: Option<CaptureError>,
}

const MAGIC_NATIVE: u32 = 0xA1B2_C3D4;
const MAGIC_SWAPPED: u32 = 0xD4C3_B2A1;
const LINKTYPE_ETHERNET: u32 = 1;

/// Parses a classic capture byte stream (24-byte global header, 16-byte
/// per-record headers, linktype 1). Both endiannesses are accepted.
pub fn parse_capture(bytes: &[u8]) -> CaptureRead {
    let mut out = CaptureRead::default();
    if bytes.len() < 24 {
        out.error = Some(CaptureError::MalformedHeader(format!(
            "global header needs 24 bytes, got {}",
            bytes.len()
        )));
        return out;
    }
    let magic = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let big_endian = match magic {
        MAGIC_NATIVE => false,
        MAGIC_SWAPPED => true,
        other => {
            // The same constants read back swapped when the writer was
            // big-endian.
            let be = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
            if be == MAGIC_NATIVE {
                true
            } else {
                out.error = Some(CaptureError::MalformedHeader(format!("bad magic 0x{other:08X}")));
                return out;
            }
        }
    };
    let read_u32 = |buf: &[u8], off: usize| -> u32 {
        let b = [buf[off], buf[off + 1], buf[off + 2], buf[off + 3]];
        if big_endian {
            u32::from_be_bytes(b)
        } else {
            u32::from_le_bytes(b)
        }
    };
    let linktype = read_u32(bytes, 20);
    let ethernet = linktype == LINKTYPE_ETHERNET;

    let mut off = 24usize;
    while off < bytes.len() {
        if bytes.len() - off < 16 {
            out.error = Some(CaptureError::TruncatedRecord {
                offset: off,
                need: 16,
                have: bytes.len() - off,
            });
            return out;
        }
        let ts_sec = read_u32(bytes, off);
        let ts_usec = read_u32(bytes, off + 4);
        let incl_len = read_u32(bytes, off + 8) as usize;
        let have = bytes.len() - off - 16;
        if incl_len > have {
            out.error = Some(CaptureError::TruncatedRecord {
                offset: off,
                need: incl_len,
                have,
            });
            return out;
        }
        let orig_len = read_u32(bytes, off + 12);
        let data = &bytes[off + 16..off + 16 + incl_len];
        off += 16 + incl_len;

        if !ethernet {
            out.skipped.non_ethernet += 1;
            continue;
        }
        let timestamp = u64::from(ts_sec) * 1_000_000 + u64::from(ts_usec);
        match decode_ethernet_ipv4(data, timestamp, orig_len) {
            Decoded::Packet(p) => out.packets.push(p),
            Decoded::Skip(kind) => match kind {
                Skip::NonIpv4 => out.skipped.non_ipv4 += 1,
                Skip::Unsupported => out.skipped.unsupported_protocol += 1,
                Skip::Fragment => out.skipped.fragments += 1,
                Skip::Short => out.skipped.short_record += 1,
            },
        }
    }
    out
}

enum Decoded {
    Packet(PacketMeta),
    Skip(Skip),
}

enum Skip {
    NonIpv4,
    Unsupported,
    Fragment,
    Short,
}

fn decode_ethernet_ipv4(data: &[u8], timestamp: u64, orig_len: u32) -> Decoded {
    if data.len() < 14 {
        return Decoded::Skip(Skip::Short);
    }
    let ethertype = u16::from_be_bytes([data[12], data[13]]);
    if ethertype != 0x0800 {
        return Decoded::Skip(Skip::NonIpv4);
    }
    let ip = &data[14..];
    if ip.len() < 20 {
        return Decoded::Skip(Skip::Short);
    }
    let version = ip[0] >> 4;
    let ihl = usize::from(ip[0] & 0x0F) * 4;
    if version != 4 || ihl < 20 || ip.len() < ihl {
        return Decoded::Skip(Skip::NonIpv4);
    }
    let total_len = usize::from(u16::from_be_bytes([ip[2], ip[3]]));
    let flags_frag = u16::from_be_bytes([ip[6], ip[7]]);
    let more_fragments = flags_frag & 0x2000 != 0;
    let frag_offset = flags_frag & 0x1FFF;
    if more_fragments || frag_offset != 0 {
        return Decoded::Skip(Skip::Fragment);
    }
    let protocol = Protocol::from(ip[9]);
    let src_addr = u32::from_be_bytes([ip[12], ip[13], ip[14], ip[15]]);
    let dst_addr = u32::from_be_bytes([ip[16], ip[17], ip[18], ip[19]]);
    if total_len < ihl || ip.len() < total_len {
        return Decoded::Skip(Skip::Short);
    }
    let l4 = &ip[ihl..total_len];

    let (src_port, dst_port, tcp_flags, tcp_tsval, payload_len) = match protocol {
        Protocol::Tcp => {
            if l4.len() < 20 {
                return Decoded::Skip(Skip::Short);
            }
            let sp = u16::from_be_bytes([l4[0], l4[1]]);
            let dp = u16::from_be_bytes([l4[2], l4[3]]);
            let data_off = usize::from(l4[12] >> 4) * 4;
            if data_off < 20 || l4.len() < data_off {
                return Decoded::Skip(Skip::Short);
            }
            let flags = l4[13];
            let tsval = parse_tcp_tsval(&l4[20..data_off]);
            let payload = (l4.len() - data_off) as u16;
            (sp, dp, flags, tsval, payload)
        }
        Protocol::Udp => {
            if l4.len() < 8 {
                return Decoded::Skip(Skip::Short);
            }
            let sp = u16::from_be_bytes([l4[0], l4[1]]);
            let dp = u16::from_be_bytes([l4[2], l4[3]]);
            let udp_len = usize::from(u16::from_be_bytes([l4[4], l4[5]]));
            let payload = udp_len.saturating_sub(8).min(l4.len().saturating_sub(8)) as u16;
            (sp, dp, 0, 0, payload)
        }
        Protocol::Icmp => {
            if l4.len() < 8 {
                return Decoded::Skip(Skip::Short);
            }
            // The echo identifier plays the role of a port: it sits on the
            // pinger's side, so a request carries it as src and a reply as dst.
            let id = u16::from_be_bytes([l4[4], l4[5]]);
            let (sp, dp) = match l4[0] {
                8 => (id, 0),
                0 => (0, id),
                _ => (0, 0),
            };
            let payload = (l4.len() - 8) as u16;
            (sp, dp, 0, 0, payload)
        }
        Protocol::Other(_) => return Decoded::Skip(Skip::Unsupported),
    };

    let mut p = PacketMeta {
        session_id: 0,
        timestamp,
        direction: Direction::Inbound,
        src_addr,
        dst_addr,
        src_port,
        dst_port,
        size_bytes: orig_len.min(65_535) as u16,
        protocol,
        tcp_flags,
        tcp_tsval,
        payload_len,
    };
    p.canonicalize();
    Decoded::Packet(p)
}

/// Scans TCP options for the timestamp option (kind 8) and returns TSval.
fn parse_tcp_tsval(options: &[u8]) -> u32 {
    let mut i = 0;
    while i < options.len() {
        match options[i] {
            0 => break,     // end of options
            1 => i += 1,    // nop
            8 => {
                if i + 10 <= options.len() && options[i + 1] == 10 {
                    return u32::from_be_bytes([
                        options[i + 2],
                        options[i + 3],
                        options[i + 4],
                        options[i + 5],
                    ]);
                }
                break;
            }
            _ => {
                if i + 1 >= options.len() {
                    break;
                }
                let len = usize::from(options[i + 1]);
                if len < 2 {
                    break;
                }
                i += len;
            }
        }
    }
    0
}

/// Result of reading JSONL metadata: bad lines are skipped and recorded.
#[derive(Debug, Default)]
pub struct JsonlRead {
    pub packets: Vec<PacketMeta>,
    /// (1-based line number, message) for every rejected line.
    pub line_errors: Vec<(usize, String)>,
}

/// Parses one JSON object per line with keys matching [`PacketMeta`] fields.
pub fn parse_metadata_jsonl(text: &str) -> JsonlRead {
    let mut out = JsonlRead::default();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match serde_json::from_str::<PacketMeta>(line) {
            Ok(p) => {
                if p.payload_len > p.size_bytes {
                    out.line_errors
                        .push((idx + 1, format!("payload_len {} exceeds size_bytes {}", p.payload_len, p.size_bytes)));
                } else {
                    out.packets.push(p);
                }
            }
            Err(e) => out.line_errors.push((idx + 1, e.to_string())),
        }
    }
    out
}

/// Serializes packets as JSONL, one object per line.
pub fn write_metadata_jsonl(packets: &[PacketMeta]) -> String {
    let mut s = String::new();
    for p in packets {
        s.push_str(&serde_json::to_string(p).expect("PacketMeta serializes"));
        s.push('\n');
    }
    s
}

/// Groups packets into sessions keyed by the canonical 5-tuple hash, splitting
/// a flow whenever the gap between consecutive packets exceeds `idle_timeout_us`.
/// Output is sorted by (first_seen, session_id).
pub fn group_sessions(packets: &[PacketMeta], idle_timeout_us: u64) -> Vec<Session> {
    use std::collections::HashMap;

    // Stable sort keeps capture order for equal timestamps.
    let mut order: Vec<usize> = (0..packets.len()).collect();
    order.sort_by_key(|&i| packets[i].timestamp);

    let mut flows: HashMap<u64, Vec<Session>> = HashMap::new();
    for &i in &order {
        let p = &packets[i];
        let key = session_key(p.protocol, p.src_addr, p.src_port, p.dst_addr, p.dst_port);
        let mut rec = p.clone();
        rec.canonicalize();
        let list = flows.entry(key).or_default();
        let start_new = match list.last() {
            Some(last) => rec.timestamp.saturating_sub(last.last_seen) > idle_timeout_us,
            None => true,
        };
        if start_new {
            list.push(Session {
                session_id: key,
                first_seen: rec.timestamp,
                last_seen: rec.timestamp,
                packets: vec![rec],
            });
        } else {
            let last = list.last_mut().expect("non-empty");
            last.last_seen = rec.timestamp;
            last.packets.push(rec);
        }
    }

    let mut sessions: Vec<Session> = flows.into_values().flatten().collect();
    sessions.sort_by_key(|s| (s.first_seen, s.session_id));
    sessions
}
