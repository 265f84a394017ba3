//! Deterministic synthetic traffic: background protocol mixes plus HTTP
//! GET-flood attack blocks, with ground-truth intervals and capture writers.

use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::{write_metadata_jsonl, PacketMeta, Protocol};

/// Minimum synthesizable frame sizes (Ethernet + IPv4 + transport header).
const MIN_TCP_FRAME: u16 = 66; // 14 + 20 + 32 (TCP header with timestamps)
const MIN_UDP_FRAME: u16 = 42; // 14 + 20 + 8
const MIN_ICMP_FRAME: u16 = 42; // 14 + 20 + 8
const MAX_FRAME: u16 = 1514;

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("file error: {0}")]
    FileError(#[from] std::io::Error),
}

/// Log-normal distribution of frame sizes, parameterized on ln(bytes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeDistribution {
    pub ln_mean: f64,
    pub ln_sigma: f64,
}

/// One background traffic class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundProfile {
    pub name: String,
    pub protocol: Protocol,
    pub server_addr: u32,
    pub server_port: u16,
    pub sessions_per_min: f64,
    pub size: SizeDistribution,
    /// Mean gap between a session's packets, seconds (exponential).
    pub mean_inter_arrival_s: f64,
    /// Mean packets per session (1 + Poisson(mean - 1)).
    pub mean_packets: f64,
}

/// HTTP GET-flood block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub enabled: bool,
    pub start_s: f64,
    pub end_s: f64,
    /// Aggregate attack packet rate over the interval.
    pub request_rate_pps: f64,
    pub client_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub duration_s: f64,
    pub profiles: Vec<BackgroundProfile>,
    pub attack: AttackSpec,
    pub seed: u64,
}

/// One labeled attack window, microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthInterval {
    pub start_us: u64,
    pub end_us: u64,
}

impl TruthInterval {
    pub fn contains(&self, t: u64) -> bool {
        t >= self.start_us && t <= self.end_us
    }

    pub fn overlaps(&self, start: u64, end: u64) -> bool {
        start <= self.end_us && end >= self.start_us
    }
}

/// Web, secure-web, shell, peer-to-peer, and a trickle of echo traffic.
pub fn default_profiles() -> Vec<BackgroundProfile> {
    let addr = |d: u8| u32::from_be_bytes([10, 0, 0, d]);
    vec![
        BackgroundProfile {
            name: "http".into(),
            protocol: Protocol::Tcp,
            server_addr: addr(1),
            server_port: 80,
            sessions_per_min: 20.0,
            size: SizeDistribution {
                ln_mean: 6.2,
                ln_sigma: 0.8,
            },
            mean_inter_arrival_s: 0.05,
            mean_packets: 12.0,
        },
        BackgroundProfile {
            name: "https".into(),
            protocol: Protocol::Tcp,
            server_addr: addr(2),
            server_port: 443,
            sessions_per_min: 25.0,
            size: SizeDistribution {
                ln_mean: 6.4,
                ln_sigma: 0.7,
            },
            mean_inter_arrival_s: 0.04,
            mean_packets: 10.0,
        },
        BackgroundProfile {
            name: "ssh".into(),
            protocol: Protocol::Tcp,
            server_addr: addr(3),
            server_port: 22,
            sessions_per_min: 4.0,
            size: SizeDistribution {
                ln_mean: 5.0,
                ln_sigma: 0.5,
            },
            mean_inter_arrival_s: 0.2,
            mean_packets: 40.0,
        },
        BackgroundProfile {
            name: "bittorrent".into(),
            protocol: Protocol::Udp,
            server_addr: u32::from_be_bytes([10, 0, 1, 1]),
            server_port: 6881,
            sessions_per_min: 6.0,
            size: SizeDistribution {
                ln_mean: 6.0,
                ln_sigma: 0.9,
            },
            mean_inter_arrival_s: 0.08,
            mean_packets: 30.0,
        },
        BackgroundProfile {
            name: "icmp".into(),
            protocol: Protocol::Icmp,
            server_addr: addr(4),
            server_port: 0,
            sessions_per_min: 2.0,
            size: SizeDistribution {
                ln_mean: 4.3,
                ln_sigma: 0.2,
            },
            mean_inter_arrival_s: 1.0,
            mean_packets: 4.0,
        },
    ]
}

impl ScenarioSpec {
    /// Background-only scenario with the default protocol mix.
    pub fn background_only(duration_s: f64, seed: u64) -> Self {
        ScenarioSpec {
            duration_s,
            profiles: default_profiles(),
            attack: AttackSpec {
                enabled: false,
                start_s: 0.0,
                end_s: 0.0,
                request_rate_pps: 0.0,
                client_count: 1,
            },
            seed,
        }
    }

    /// Default mix plus one GET-flood block.
    pub fn with_attack(duration_s: f64, start_s: f64, end_s: f64, pps: f64, seed: u64) -> Self {
        ScenarioSpec {
            duration_s,
            profiles: default_profiles(),
            attack: AttackSpec {
                enabled: true,
                start_s,
                end_s,
                request_rate_pps: pps,
                client_count: 10,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        if !(self.duration_s > 0.0) {
            return Err(TrafficError::InvalidSpec(format!(
                "duration_s must be positive, got {}",
                self.duration_s
            )));
        }
        for p in &self.profiles {
            if !(p.sessions_per_min > 0.0) || !(p.mean_inter_arrival_s > 0.0) || !(p.mean_packets >= 1.0)
            {
                return Err(TrafficError::InvalidSpec(format!(
                    "profile {} has non-positive rates",
                    p.name
                )));
            }
        }
        let a = &self.attack;
        if a.enabled {
            if !(a.start_s >= 0.0 && a.start_s < a.end_s && a.end_s <= self.duration_s) {
                return Err(TrafficError::InvalidSpec(format!(
                    "attack interval [{}, {}] outside scenario of {} s",
                    a.start_s, a.end_s, self.duration_s
                )));
            }
            if !(a.request_rate_pps > 0.0) {
                return Err(TrafficError::InvalidSpec("attack rate must be positive".into()));
            }
            if a.client_count == 0 {
                return Err(TrafficError::InvalidSpec("attack needs at least one client".into()));
            }
        }
        Ok(())
    }
}

fn min_frame(protocol: Protocol) -> u16 {
    match protocol {
        Protocol::Tcp => MIN_TCP_FRAME,
        Protocol::Udp => MIN_UDP_FRAME,
        _ => MIN_ICMP_FRAME,
    }
}

fn header_len(protocol: Protocol) -> u16 {
    min_frame(protocol)
}

/// Per-host timestamp-clock offset, so tsval streams differ across hosts.
fn tsval_offset(addr: u32) -> u32 {
    addr.wrapping_mul(0x9E37_79B9).rotate_left(13)
}

struct PacketDraft {
    t_us: u64,
    client_to_server: bool,
    size: u16,
    flags: u8,
}

fn push_packet(
    out: &mut Vec<PacketMeta>,
    draft: &PacketDraft,
    protocol: Protocol,
    client: (u32, u16),
    server: (u32, u16),
    max_t_us: u64,
) {
    if draft.t_us > max_t_us {
        return;
    }
    let (src, dst) = if draft.client_to_server {
        (client, server)
    } else {
        (server, client)
    };
    let size = draft.size.clamp(min_frame(protocol), MAX_FRAME);
    let tsval = if protocol == Protocol::Tcp {
        ((draft.t_us / 1000) as u32).wrapping_add(tsval_offset(src.0))
    } else {
        0
    };
    let mut meta = PacketMeta {
        session_id: 0,
        timestamp: draft.t_us,
        direction: crate::capture::Direction::Outbound,
        src_addr: src.0,
        dst_addr: dst.0,
        src_port: src.1,
        dst_port: dst.1,
        size_bytes: size,
        protocol,
        tcp_flags: if protocol == Protocol::Tcp { draft.flags } else { 0 },
        tcp_tsval: tsval,
        payload_len: size - header_len(protocol),
    };
    meta.canonicalize();
    out.push(meta);
}

fn generate_background(
    spec: &ScenarioSpec,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<PacketMeta>,
) -> Result<(), TrafficError> {
    let duration_us = (spec.duration_s * 1e6).round() as u64;
    for profile in &spec.profiles {
        let mean_sessions = profile.sessions_per_min * spec.duration_s / 60.0;
        let n_sessions = if mean_sessions > 0.0 {
            Poisson::new(mean_sessions)
                .map_err(|e| TrafficError::InvalidSpec(format!("profile {}: {e}", profile.name)))?
                .sample(rng) as u64
        } else {
            0
        };
        let sizes = LogNormal::new(profile.size.ln_mean, profile.size.ln_sigma)
            .map_err(|e| TrafficError::InvalidSpec(format!("profile {}: {e}", profile.name)))?;
        let gaps = Exp::new(1.0 / profile.mean_inter_arrival_s)
            .map_err(|e| TrafficError::InvalidSpec(format!("profile {}: {e}", profile.name)))?;
        for _ in 0..n_sessions {
            let start_s: f64 = rng.gen_range(0.0..spec.duration_s);
            let client = (
                u32::from_be_bytes([10, 1, rng.gen_range(0..=15), rng.gen_range(1..=254)]),
                rng.gen_range(20000..64000u16),
            );
            let server = (profile.server_addr, profile.server_port);
            let extra = if profile.mean_packets > 1.0 {
                Poisson::new(profile.mean_packets - 1.0)
                    .map_err(|e| TrafficError::InvalidSpec(format!("profile {}: {e}", profile.name)))?
                    .sample(rng) as u64
            } else {
                0
            };
            let n_pkts = 1 + extra;
            let mut t = start_s;
            for p in 0..n_pkts {
                let last = p + 1 == n_pkts;
                let (c2s, flags) = if profile.protocol == Protocol::Tcp {
                    match p {
                        0 => (true, 0x02),           // SYN
                        1 => (false, 0x12),          // SYN-ACK
                        _ if last && n_pkts > 3 => (rng.gen_bool(0.5), 0x11), // FIN-ACK
                        _ => (rng.gen_bool(0.5), if rng.gen_bool(0.7) { 0x18 } else { 0x10 }),
                    }
                } else {
                    (p % 2 == 0, 0)
                };
                let control = flags == 0x02 || flags == 0x12 || flags == 0x11;
                let size = if profile.protocol == Protocol::Tcp && control {
                    MIN_TCP_FRAME
                } else {
                    sizes.sample(rng).round().clamp(0.0, f64::from(MAX_FRAME)) as u16
                };
                push_packet(
                    out,
                    &PacketDraft {
                        t_us: (t * 1e6).round() as u64,
                        client_to_server: c2s,
                        size,
                        flags,
                    },
                    profile.protocol,
                    client,
                    server,
                    duration_us,
                );
                t += gaps.sample(rng);
            }
        }
    }
    Ok(())
}

/// The GET-exchange template: (client->server, flags, size).
const ATTACK_TEMPLATE: [(bool, u8, u16); 6] = [
    (true, 0x02, MIN_TCP_FRAME),        // SYN
    (false, 0x12, MIN_TCP_FRAME),       // SYN-ACK
    (true, 0x18, MIN_TCP_FRAME + 120),  // GET request
    (false, 0x18, MIN_TCP_FRAME + 360), // response
    (true, 0x11, MIN_TCP_FRAME),        // FIN
    (false, 0x11, MIN_TCP_FRAME),       // FIN-ACK
];

fn generate_attack(
    spec: &ScenarioSpec,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<PacketMeta>,
) -> Vec<TruthInterval> {
    let a = &spec.attack;
    if !a.enabled {
        return Vec::new();
    }
    let interval_s = a.end_s - a.start_s;
    // The packet count is scheduled exactly, so the realized rate matches
    // the spec up to rounding; jitter moves timing, not volume.
    let total_packets = (a.request_rate_pps * interval_s).round() as u64;
    let server = (u32::from_be_bytes([10, 0, 0, 1]), 80u16);
    let per_session = ATTACK_TEMPLATE.len() as u64;
    let n_sessions = total_packets.div_ceil(per_session);
    let start_us = (a.start_s * 1e6).round() as u64;
    let end_us = (a.end_s * 1e6).round() as u64;
    let mut emitted = 0u64;
    for s in 0..n_sessions {
        // Round-robin over the bot population; source ports advance once a
        // client starts its next exchange.
        let bot = s % a.client_count as u64;
        let client = (
            u32::from_be_bytes([10, 2, (bot / 250) as u8, (bot % 250) as u8 + 1]),
            (20000 + (s / a.client_count as u64) % 40000) as u16,
        );
        // Grid placement with jitter; the whole exchange stays inside the
        // declared interval.
        let span_us = rng.gen_range(2_000..20_000u64);
        let slot = (interval_s * 1e6 - span_us as f64).max(0.0) / n_sessions as f64;
        let jitter: f64 = rng.gen_range(0.0..1.0);
        let t0 = start_us + ((s as f64 + jitter) * slot) as u64;
        for (i, &(c2s, flags, size)) in ATTACK_TEMPLATE.iter().enumerate() {
            if emitted == total_packets {
                break;
            }
            let t_us = (t0 + i as u64 * span_us / per_session).min(end_us);
            push_packet(
                out,
                &PacketDraft {
                    t_us,
                    client_to_server: c2s,
                    size,
                    flags,
                },
                Protocol::Tcp,
                client,
                server,
                end_us,
            );
            emitted += 1;
        }
    }
    vec![TruthInterval { start_us, end_us }]
}

/// Generates the labeled scenario. Output is sorted by timestamp and fully
/// determined by the spec (including its seed).
pub fn generate(spec: &ScenarioSpec) -> Result<(Vec<PacketMeta>, Vec<TruthInterval>), TrafficError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut packets = Vec::new();
    generate_background(spec, &mut rng, &mut packets)?;
    let truth = generate_attack(spec, &mut rng, &mut packets);
    packets.sort_by_key(|p| p.timestamp);
    Ok((packets, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptureFormat {
    Capture,
    Jsonl,
}

fn ones_complement_sum(data: &[u8]) -> u16 {
    let mut sum = 0u32;
    for chunk in data.chunks(2) {
        let word = if chunk.len() == 2 {
            u16::from_be_bytes([chunk[0], chunk[1]])
        } else {
            u16::from_be_bytes([chunk[0], 0])
        };
        sum += u32::from(word);
    }
    while sum > 0xFFFF {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    !(sum as u16)
}

/// Synthesizes the on-wire Ethernet frame for one packet record.
pub fn build_frame(meta: &PacketMeta) -> Vec<u8> {
    let size = meta.size_bytes as usize;
    let mut frame = vec![0u8; size];
    let mac = |addr: u32| -> [u8; 6] {
        let b = addr.to_be_bytes();
        [0x02, 0x00, b[0], b[1], b[2], b[3]]
    };
    frame[0..6].copy_from_slice(&mac(meta.dst_addr));
    frame[6..12].copy_from_slice(&mac(meta.src_addr));
    frame[12..14].copy_from_slice(&[0x08, 0x00]);

    // IPv4 header.
    let total_len = (size - 14) as u16;
    let ip = &mut frame[14..34];
    ip[0] = 0x45;
    ip[1] = 0;
    ip[2..4].copy_from_slice(&total_len.to_be_bytes());
    let id = (meta.timestamp as u16) ^ (meta.src_port).rotate_left(3);
    ip[4..6].copy_from_slice(&id.to_be_bytes());
    ip[6..8].copy_from_slice(&0x4000u16.to_be_bytes()); // DF, offset 0
    ip[8] = 64;
    ip[9] = meta.protocol.code();
    ip[12..16].copy_from_slice(&meta.src_addr.to_be_bytes());
    ip[16..20].copy_from_slice(&meta.dst_addr.to_be_bytes());
    let csum = ones_complement_sum(&frame[14..34]);
    frame[24..26].copy_from_slice(&csum.to_be_bytes());

    match meta.protocol {
        Protocol::Tcp => {
            let tcp = &mut frame[34..66];
            tcp[0..2].copy_from_slice(&meta.src_port.to_be_bytes());
            tcp[2..4].copy_from_slice(&meta.dst_port.to_be_bytes());
            // seq/ack left zero; offset 8 words (32-byte header).
            tcp[12] = 0x80;
            tcp[13] = meta.tcp_flags;
            tcp[14..16].copy_from_slice(&0xFFFFu16.to_be_bytes());
            // Options: NOP, NOP, timestamps.
            tcp[20] = 1;
            tcp[21] = 1;
            tcp[22] = 8;
            tcp[23] = 10;
            tcp[24..28].copy_from_slice(&meta.tcp_tsval.to_be_bytes());
        }
        Protocol::Udp => {
            let udp_len = (8 + meta.payload_len) as u16;
            let udp = &mut frame[34..42];
            udp[0..2].copy_from_slice(&meta.src_port.to_be_bytes());
            udp[2..4].copy_from_slice(&meta.dst_port.to_be_bytes());
            udp[4..6].copy_from_slice(&udp_len.to_be_bytes());
        }
        _ => {
            // Echo request when the pinger's id rides in src_port, echo
            // reply when it comes back in dst_port.
            let (icmp_type, echo_id) = if meta.src_port != 0 {
                (8u8, meta.src_port)
            } else {
                (0u8, meta.dst_port)
            };
            frame[34] = icmp_type;
            frame[35] = 0;
            frame[38..40].copy_from_slice(&echo_id.to_be_bytes());
            let csum_range = 34..size;
            let icmp_csum = ones_complement_sum(&frame[csum_range.clone()]);
            frame[36..38].copy_from_slice(&icmp_csum.to_be_bytes());
        }
    }
    frame
}

/// Writes packets as a classic little-endian capture file or as JSONL
/// metadata. Both formats read back losslessly through the ingest parsers.
pub fn write_capture(packets: &[PacketMeta], path: &Path, format: CaptureFormat) -> Result<(), TrafficError> {
    match format {
        CaptureFormat::Jsonl => {
            let text = write_metadata_jsonl(packets);
            atomic_write(path, text.as_bytes())?;
        }
        CaptureFormat::Capture => {
            let mut buf = Vec::with_capacity(24 + packets.len() * 128);
            buf.extend_from_slice(&0xA1B2_C3D4u32.to_le_bytes());
            buf.extend_from_slice(&2u16.to_le_bytes());
            buf.extend_from_slice(&4u16.to_le_bytes());
            buf.extend_from_slice(&0i32.to_le_bytes());
            buf.extend_from_slice(&0u32.to_le_bytes());
            buf.extend_from_slice(&65535u32.to_le_bytes());
            buf.extend_from_slice(&1u32.to_le_bytes()); // Ethernet
            for meta in packets {
                let frame = build_frame(meta);
                buf.extend_from_slice(&((meta.timestamp / 1_000_000) as u32).to_le_bytes());
                buf.extend_from_slice(&((meta.timestamp % 1_000_000) as u32).to_le_bytes());
                buf.extend_from_slice(&(frame.len() as u32).to_le_bytes());
                buf.extend_from_slice(&(frame.len() as u32).to_le_bytes());
                buf.extend_from_slice(&frame);
            }
            atomic_write(path, &buf)?;
        }
    }
    Ok(())
}

/// Writes via a temp file in the same directory plus rename, so readers
/// never observe a half-written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), std::io::Error> {
    let file_name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
