//! Ethernet / IPv4 / TCP decoding and encoding.

use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::pcap::RawPacket;
use crate::time::Timestamp;

pub const ETHERNET_HEADER_LEN: usize = 14;
pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_IPV6: u16 = 0x86DD;
pub const ETHERTYPE_VLAN: u16 = 0x8100;
pub const ETHERTYPE_QINQ: u16 = 0x88A8;
pub const IPPROTO_TCP: u8 = 6;
pub const IPPROTO_UDP: u8 = 17;

/// TCP control bits, laid out as in byte 13 of the TCP header.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TcpFlags(u8);

impl TcpFlags {
    pub const FIN: TcpFlags = TcpFlags(0x01);
    pub const SYN: TcpFlags = TcpFlags(0x02);
    pub const RST: TcpFlags = TcpFlags(0x04);
    pub const PSH: TcpFlags = TcpFlags(0x08);
    pub const ACK: TcpFlags = TcpFlags(0x10);
    pub const URG: TcpFlags = TcpFlags(0x20);
    pub const ECE: TcpFlags = TcpFlags(0x40);
    pub const CWR: TcpFlags = TcpFlags(0x80);
    pub const NONE: TcpFlags = TcpFlags(0);

    pub const fn from_bits(bits: u8) -> Self {
        TcpFlags(bits)
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub const fn contains(self, other: TcpFlags) -> bool {
        self.0 & other.0 == other.0 && other.0 != 0
    }

    pub const fn union(self, other: TcpFlags) -> Self {
        TcpFlags(self.0 | other.0)
    }
}

impl std::ops::BitOr for TcpFlags {
    type Output = TcpFlags;
    fn bitor(self, rhs: TcpFlags) -> TcpFlags {
        self.union(rhs)
    }
}

impl fmt::Debug for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const NAMES: [&str; 8] = ["FIN", "SYN", "RST", "PSH", "ACK", "URG", "ECE", "CWR"];
        let set: Vec<&str> = NAMES
            .iter()
            .enumerate()
            .filter(|(i, _)| self.0 & (1 << i) != 0)
            .map(|(_, n)| *n)
            .collect();
        write!(f, "{{{}}}", set.join(","))
    }
}

/// An IPv4/TCP packet with the fields flow metering needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedPacket {
    pub timestamp: Timestamp,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub flags: TcpFlags,
    pub seq: u32,
    pub ack: u32,
    pub window: u16,
    pub payload: Vec<u8>,
}

/// Why a frame was not turned into a [`DecodedPacket`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Skip {
    NotIpv4,
    Vlan,
    Ipv6,
    NotTcp,
    Udp,
    Fragment,
    Malformed,
}

/// Per-capture skip counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeStats {
    pub decoded: usize,
    pub non_ipv4: usize,
    pub vlan: usize,
    pub ipv6: usize,
    pub non_tcp: usize,
    pub udp: usize,
    pub fragments: usize,
    pub malformed: usize,
}

impl DecodeStats {
    pub fn record(&mut self, outcome: &Result<DecodedPacket, Skip>) {
        match outcome {
            Ok(_) => self.decoded += 1,
            Err(Skip::NotIpv4) => self.non_ipv4 += 1,
            Err(Skip::Vlan) => self.vlan += 1,
            Err(Skip::Ipv6) => self.ipv6 += 1,
            Err(Skip::NotTcp) => self.non_tcp += 1,
            Err(Skip::Udp) => self.udp += 1,
            Err(Skip::Fragment) => self.fragments += 1,
            Err(Skip::Malformed) => self.malformed += 1,
        }
    }

    pub fn skipped(&self) -> usize {
        self.non_ipv4 + self.vlan + self.ipv6 + self.non_tcp + self.udp + self.fragments + self.malformed
    }
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn be32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes an Ethernet frame carrying IPv4/TCP. Everything else is skipped.
pub fn decode_packet(raw: &RawPacket) -> Result<DecodedPacket, Skip> {
    let frame = &raw.link_bytes;
    if frame.len() < ETHERNET_HEADER_LEN {
        return Err(Skip::Malformed);
    }
    match be16(frame, 12) {
        ETHERTYPE_IPV4 => {}
        ETHERTYPE_VLAN | ETHERTYPE_QINQ => return Err(Skip::Vlan),
        ETHERTYPE_IPV6 => return Err(Skip::Ipv6),
        _ => return Err(Skip::NotIpv4),
    }
    let ip = &frame[ETHERNET_HEADER_LEN..];
    if ip.len() < 20 {
        return Err(Skip::Malformed);
    }
    if ip[0] >> 4 != 4 {
        return Err(Skip::Malformed);
    }
    let ihl = usize::from(ip[0] & 0x0F) * 4;
    let total_len = usize::from(be16(ip, 2));
    if ihl < 20 || total_len < ihl || total_len > ip.len() {
        return Err(Skip::Malformed);
    }
    let frag = be16(ip, 6);
    let more_fragments = frag & 0x2000 != 0;
    let frag_offset = frag & 0x1FFF;
    match ip[9] {
        IPPROTO_TCP => {}
        IPPROTO_UDP => return Err(Skip::Udp),
        _ => return Err(Skip::NotTcp),
    }
    if more_fragments || frag_offset != 0 {
        return Err(Skip::Fragment);
    }
    let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);

    let tcp = &ip[ihl..total_len];
    if tcp.len() < 20 {
        return Err(Skip::Malformed);
    }
    let data_offset = usize::from(tcp[12] >> 4) * 4;
    if data_offset < 20 || data_offset > tcp.len() {
        return Err(Skip::Malformed);
    }
    Ok(DecodedPacket {
        timestamp: raw.timestamp,
        src_ip,
        dst_ip,
        src_port: be16(tcp, 0),
        dst_port: be16(tcp, 2),
        seq: be32(tcp, 4),
        ack: be32(tcp, 8),
        flags: TcpFlags::from_bits(tcp[13]),
        window: be16(tcp, 14),
        payload: tcp[data_offset..].to_vec(),
    })
}

/// Decodes a whole capture, keeping only IPv4/TCP packets.
pub fn decode_all(raws: &[RawPacket]) -> (Vec<DecodedPacket>, DecodeStats) {
    let mut stats = DecodeStats::default();
    let mut out = Vec::with_capacity(raws.len());
    for raw in raws {
        let r = decode_packet(raw);
        stats.record(&r);
        if let Ok(p) = r {
            out.push(p);
        }
    }
    if stats.skipped() > 0 {
        log::debug!("decode: skipped {} non-IPv4/TCP or malformed frames", stats.skipped());
    }
    (out, stats)
}

fn mac_for(ip: Ipv4Addr) -> [u8; 6] {
    let o = ip.octets();
    [0x02, 0x00, o[0], o[1], o[2], o[3]]
}

fn checksum_fold(mut sum: u32) -> u16 {
    while sum >> 16 != 0 {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    !(sum as u16)
}

fn ones_complement_sum(data: &[u8], mut sum: u32) -> u32 {
    let mut chunks = data.chunks_exact(2);
    for c in &mut chunks {
        sum += u32::from(u16::from_be_bytes([c[0], c[1]]));
    }
    if let [last] = chunks.remainder() {
        sum += u32::from(*last) << 8;
    }
    sum
}

impl DecodedPacket {
    /// Serialises to an Ethernet II frame with a 20-byte IPv4 header and a
    /// 20-byte TCP header, checksums filled in. MAC addresses are derived
    /// from the IP addresses.
    pub fn to_frame(&self, ip_id: u16) -> Vec<u8> {
        let tcp_len = 20 + self.payload.len();
        let ip_total = 20 + tcp_len;
        let mut f = Vec::with_capacity(ETHERNET_HEADER_LEN + ip_total);
        f.extend_from_slice(&mac_for(self.dst_ip));
        f.extend_from_slice(&mac_for(self.src_ip));
        f.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());

        let ip_start = f.len();
        f.push(0x45);
        f.push(0);
        f.extend_from_slice(&(ip_total as u16).to_be_bytes());
        f.extend_from_slice(&ip_id.to_be_bytes());
        f.extend_from_slice(&0x4000u16.to_be_bytes());
        f.push(64);
        f.push(IPPROTO_TCP);
        f.extend_from_slice(&[0, 0]);
        f.extend_from_slice(&self.src_ip.octets());
        f.extend_from_slice(&self.dst_ip.octets());
        let ip_csum = checksum_fold(ones_complement_sum(&f[ip_start..ip_start + 20], 0));
        f[ip_start + 10..ip_start + 12].copy_from_slice(&ip_csum.to_be_bytes());

        let tcp_start = f.len();
        f.extend_from_slice(&self.src_port.to_be_bytes());
        f.extend_from_slice(&self.dst_port.to_be_bytes());
        f.extend_from_slice(&self.seq.to_be_bytes());
        f.extend_from_slice(&self.ack.to_be_bytes());
        f.push(5 << 4);
        f.push(self.flags.bits());
        f.extend_from_slice(&self.window.to_be_bytes());
        f.extend_from_slice(&[0, 0, 0, 0]);
        f.extend_from_slice(&self.payload);

        let mut pseudo = Vec::with_capacity(12);
        pseudo.extend_from_slice(&self.src_ip.octets());
        pseudo.extend_from_slice(&self.dst_ip.octets());
        pseudo.push(0);
        pseudo.push(IPPROTO_TCP);
        pseudo.extend_from_slice(&(tcp_len as u16).to_be_bytes());
        let sum = ones_complement_sum(&pseudo, 0);
        let tcp_csum = checksum_fold(ones_complement_sum(&f[tcp_start..], sum));
        f[tcp_start + 16..tcp_start + 18].copy_from_slice(&tcp_csum.to_be_bytes());
        f
    }

    pub fn to_raw(&self, ip_id: u16) -> RawPacket {
        RawPacket {
            timestamp: self.timestamp,
            link_bytes: self.to_frame(ip_id),
        }
    }
}
