//! Simulated UPF data plane.
//!
//! Parses TEIDs out of GTP-U-style headers, keeps the TEID-keyed round-trip
//! map (arm on one packet, pair on the next, strict alternation per TEID),
//! forwards packets on the per-TEID action map, and counts egress packets.
//! The maps mirror the kernel-map contract between a datapath and a
//! userspace agent: the datapath writes `rtt_map` and the counters and reads
//! `action_map`; the agent reads `rtt_map` and writes `action_map`. Each map
//! is lock-protected so the two parties can run on separate threads without
//! torn reads.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::iface::Interface;

/// Fixed GTP-U header length: flags, message type, length (2), TEID (4).
pub const GTPU_HEADER_LEN: usize = 8;

/// Flags byte for a version-1 GTP-U packet (version 1, protocol type 1).
pub const GTPU_FLAGS_V1: u8 = 0x30;

/// Message type carried by tunneled user data (G-PDU).
pub const GTPU_MSG_GPDU: u8 = 0xFF;

/// Interface a packet defaults to before the agent has written any action.
pub const DEFAULT_INTERFACE: Interface = Interface::N6a;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DatapathError {
    #[error("malformed packet: {len} bytes, GTP-U header needs at least {GTPU_HEADER_LEN}")]
    MalformedPacket { len: usize },
    #[error("unsupported GTP version {version} (expected 1)")]
    UnsupportedVersion { version: u8 },
    #[error("clock skew on teid {teid}: timestamp {now_ns} precedes armed request {armed_ns}")]
    ClockSkew { teid: Teid, now_ns: u64, armed_ns: u64 },
}

/// 32-bit tunnel endpoint identifier keying a PDU session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Teid(pub u32);

impl fmt::Display for Teid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Round-trip tracking state for one TEID. `ts_request == 0` means no
/// request is awaiting its response; timestamps are therefore expected to
/// be strictly positive, as kernel nanosecond clocks are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoundTripEntry {
    pub ts_request: u64,
    pub last_rtt: u64,
    pub count: u64,
}

/// Direction of a packet event relative to the UE: requests go uplink and
/// are forwarded on an N6 interface, responses only feed measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Request,
    Response,
}

/// One packet arrival at the datapath.
#[derive(Debug, Clone)]
pub struct PacketEvent {
    pub raw_header: Vec<u8>,
    pub timestamp_ns: u64,
    pub direction: Direction,
}

/// What the datapath did with one packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketOutcome {
    pub teid: Teid,
    /// Completed round-trip measurement, if this packet paired with an
    /// armed request.
    pub measured_rtt_ns: Option<u64>,
    /// Egress interface, for forwarded (request) packets.
    pub forwarded: Option<Interface>,
}

/// A committed per-TEID delay observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayObservation {
    pub last_rtt_ns: u64,
    pub count: u64,
}

/// One egress packet record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketOut {
    pub timestamp_ns: u64,
    pub iface: Interface,
}

/// Serializes a minimal GTP-U header: version-1 flags, message type,
/// payload length, big-endian TEID.
pub fn encode_gtpu_header(teid: Teid, message_type: u8, payload_len: u16) -> [u8; GTPU_HEADER_LEN] {
    let mut header = [0u8; GTPU_HEADER_LEN];
    header[0] = GTPU_FLAGS_V1;
    header[1] = message_type;
    header[2..4].copy_from_slice(&payload_len.to_be_bytes());
    header[4..8].copy_from_slice(&teid.0.to_be_bytes());
    header
}

/// Extracts the TEID from a GTP-U header: the big-endian 32-bit value at
/// bytes 4..8. Rejects headers shorter than 8 bytes and versions other
/// than 1.
pub fn parse_teid(raw_header: &[u8]) -> Result<Teid, DatapathError> {
    if raw_header.len() < GTPU_HEADER_LEN {
        return Err(DatapathError::MalformedPacket { len: raw_header.len() });
    }
    let version = raw_header[0] >> 5;
    if version != 1 {
        return Err(DatapathError::UnsupportedVersion { version });
    }
    let teid = u32::from_be_bytes([raw_header[4], raw_header[5], raw_header[6], raw_header[7]]);
    Ok(Teid(teid))
}

#[derive(Debug, Default)]
struct PacketOutLog {
    events: Vec<PacketOut>,
    totals: [u64; 2],
}

/// The observation and action maps shared between datapath and agent, plus
/// egress counters.
#[derive(Debug, Default)]
pub struct SharedMaps {
    rtt_map: Mutex<HashMap<Teid, RoundTripEntry>>,
    action_map: Mutex<HashMap<Teid, Interface>>,
    packet_out: Mutex<PacketOutLog>,
}

impl SharedMaps {
    pub fn new() -> Self {
        Self::default()
    }

    /// One round-trip map update for a packet of `teid` seen at `now_ns`.
    ///
    /// Absent entry: insert armed at `now_ns`, nothing measured. Armed
    /// entry: complete the pair, record `now - ts_request` as the latest
    /// round trip, bump the counter, disarm. Unarmed entry: re-arm.
    /// A timestamp earlier than the armed request is clock skew: the
    /// in-flight measurement is discarded and the entry re-armed at the
    /// offending timestamp.
    pub fn measure_rtt(&self, teid: Teid, now_ns: u64) -> Result<Option<u64>, DatapathError> {
        let mut map = self.rtt_map.lock().unwrap();
        let Some(entry) = map.get_mut(&teid) else {
            map.insert(teid, RoundTripEntry { ts_request: now_ns, last_rtt: 0, count: 0 });
            return Ok(None);
        };
        if entry.ts_request == 0 {
            entry.ts_request = now_ns;
            return Ok(None);
        }
        if now_ns < entry.ts_request {
            let armed_ns = entry.ts_request;
            entry.ts_request = now_ns;
            return Err(DatapathError::ClockSkew { teid, now_ns, armed_ns });
        }
        entry.last_rtt = now_ns - entry.ts_request;
        entry.ts_request = 0;
        entry.count += 1;
        Ok(Some(entry.last_rtt))
    }

    /// Egress interface for `teid` per the action map (default `n6a` for
    /// unseen TEIDs), counting the packet out on that interface.
    pub fn forward(&self, teid: Teid, now_ns: u64) -> Interface {
        let iface = self
            .action_map
            .lock()
            .unwrap()
            .get(&teid)
            .copied()
            .unwrap_or(DEFAULT_INTERFACE);
        let mut log = self.packet_out.lock().unwrap();
        log.events.push(PacketOut { timestamp_ns: now_ns, iface });
        log.totals[iface.index()] += 1;
        iface
    }

    /// Latest committed delay proxy for `teid`, untouched by the read.
    /// `None` until at least one pairing completed.
    pub fn read_observation(&self, teid: Teid) -> Option<DelayObservation> {
        let map = self.rtt_map.lock().unwrap();
        map.get(&teid).and_then(|entry| {
            (entry.count > 0).then_some(DelayObservation {
                last_rtt_ns: entry.last_rtt,
                count: entry.count,
            })
        })
    }

    /// Sets the egress interface for `teid`; subsequent forwards follow it
    /// until overwritten.
    pub fn write_action(&self, teid: Teid, action: Interface) {
        self.action_map.lock().unwrap().insert(teid, action);
    }

    /// Full datapath handling of one packet: parse the TEID, update the
    /// round-trip map, and forward request packets on the mapped interface.
    pub fn handle_packet(&self, event: &PacketEvent) -> Result<PacketOutcome, DatapathError> {
        let teid = parse_teid(&event.raw_header)?;
        let measured_rtt_ns = self.measure_rtt(teid, event.timestamp_ns)?;
        let forwarded = match event.direction {
            Direction::Request => Some(self.forward(teid, event.timestamp_ns)),
            Direction::Response => None,
        };
        Ok(PacketOutcome { teid, measured_rtt_ns, forwarded })
    }

    /// Cumulative packets out per interface, in action-index order.
    pub fn packet_out_totals(&self) -> [u64; 2] {
        self.packet_out.lock().unwrap().totals
    }

    /// Snapshot of all egress packet records.
    pub fn packet_out_events(&self) -> Vec<PacketOut> {
        self.packet_out.lock().unwrap().events.clone()
    }

    /// Snapshot of `rtt_map` as CSV (`teid,last_rtt_ns,count`), sorted by
    /// TEID for stable output.
    pub fn dump_rtt_map_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let map = self.rtt_map.lock().unwrap();
        let mut rows: Vec<(Teid, RoundTripEntry)> = map.iter().map(|(k, v)| (*k, *v)).collect();
        drop(map);
        rows.sort_by_key(|(teid, _)| *teid);
        writeln!(out, "teid,last_rtt_ns,count")?;
        for (teid, entry) in rows {
            writeln!(out, "{},{},{}", teid, entry.last_rtt, entry.count)?;
        }
        Ok(())
    }
}

/// Per-interval egress counts, bucketed into fixed windows from sim time
/// zero, and the mean count per window for each interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketOutHistogram {
    pub interval_s: u64,
    /// Counts per window, `[n6a, n6b]` each.
    pub windows: Vec<[u64; 2]>,
    /// Mean per-window count per interface over all spanned windows.
    pub mean_per_interval: [f64; 2],
}

/// Buckets egress packet records into fixed `interval_s` windows.
/// No records yield an empty histogram.
pub fn packet_out_histogram(events: &[PacketOut], interval_s: u64) -> PacketOutHistogram {
    assert!(interval_s > 0, "interval_s must be > 0");
    let interval_ns = interval_s as u128 * 1_000_000_000;
    let mut windows: Vec<[u64; 2]> = Vec::new();
    for event in events {
        let idx = (event.timestamp_ns as u128 / interval_ns) as usize;
        if idx >= windows.len() {
            windows.resize(idx + 1, [0, 0]);
        }
        windows[idx][event.iface.index()] += 1;
    }
    let mean_per_interval = if windows.is_empty() {
        [0.0, 0.0]
    } else {
        let n = windows.len() as f64;
        let totals = windows.iter().fold([0u64; 2], |acc, w| [acc[0] + w[0], acc[1] + w[1]]);
        [totals[0] as f64 / n, totals[1] as f64 / n]
    };
    PacketOutHistogram { interval_s, windows, mean_per_interval }
}
