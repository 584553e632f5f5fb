//! Classic libpcap file reading and writing.
//!
//! Both byte orders are accepted, as are the microsecond (`0xA1B2C3D4`) and
//! nanosecond (`0xA1B23C4D`) magics. Nanosecond timestamps are truncated to
//! microseconds. Only link type 1 (Ethernet) is supported.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::time::Timestamp;

pub const MAGIC_MICROS: u32 = 0xA1B2_C3D4;
pub const MAGIC_NANOS: u32 = 0xA1B2_3C4D;
pub const LINKTYPE_ETHERNET: u32 = 1;
pub const GLOBAL_HEADER_LEN: usize = 24;
pub const RECORD_HEADER_LEN: usize = 16;
const DEFAULT_SNAPLEN: u32 = 65_535;
/// Upper bound on a single record; anything larger is treated as corruption.
const MAX_RECORD_LEN: u32 = 256 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum PcapError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed pcap global header: {0}")]
    BadHeader(String),
    #[error("unsupported link type {0} (only Ethernet is supported)")]
    UnsupportedLinkType(u32),
}

/// One captured frame as stored in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPacket {
    pub timestamp: Timestamp,
    pub link_bytes: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn u32(self, b: &[u8]) -> u32 {
        let arr = [b[0], b[1], b[2], b[3]];
        match self {
            Endian::Little => u32::from_le_bytes(arr),
            Endian::Big => u32::from_be_bytes(arr),
        }
    }
}

/// Streaming reader over a pcap byte source.
pub struct PcapReader<R: Read> {
    inner: R,
    endian: Endian,
    nanos: bool,
    snaplen: u32,
    truncated: usize,
    done: bool,
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self, PcapError> {
        let mut header = [0u8; GLOBAL_HEADER_LEN];
        read_full(&mut inner, &mut header)
            .map_err(PcapError::Io)
            .and_then(|n| {
                if n < GLOBAL_HEADER_LEN {
                    Err(PcapError::BadHeader(format!("file is only {n} bytes long")))
                } else {
                    Ok(())
                }
            })?;
        let magic_le = u32::from_le_bytes([header[0], header[1], header[2], header[3]]);
        let (endian, nanos) = match magic_le {
            MAGIC_MICROS => (Endian::Little, false),
            MAGIC_NANOS => (Endian::Little, true),
            m if m.swap_bytes() == MAGIC_MICROS => (Endian::Big, false),
            m if m.swap_bytes() == MAGIC_NANOS => (Endian::Big, true),
            m => return Err(PcapError::BadHeader(format!("unknown magic {m:#010x}"))),
        };
        let version_major = match endian {
            Endian::Little => u16::from_le_bytes([header[4], header[5]]),
            Endian::Big => u16::from_be_bytes([header[4], header[5]]),
        };
        if version_major != 2 {
            return Err(PcapError::BadHeader(format!("unsupported version {version_major}")));
        }
        let snaplen = endian.u32(&header[16..20]);
        let linktype = endian.u32(&header[20..24]) & 0x0FFF_FFFF;
        if linktype != LINKTYPE_ETHERNET {
            return Err(PcapError::UnsupportedLinkType(linktype));
        }
        Ok(PcapReader {
            inner,
            endian,
            nanos,
            snaplen,
            truncated: 0,
            done: false,
        })
    }

    pub fn snaplen(&self) -> u32 {
        self.snaplen
    }

    /// Number of trailing records that were cut short (0 or 1).
    pub fn truncated_records(&self) -> usize {
        self.truncated
    }

    fn next_record(&mut self) -> Result<Option<RawPacket>, io::Error> {
        let mut rec = [0u8; RECORD_HEADER_LEN];
        let n = read_full(&mut self.inner, &mut rec)?;
        if n == 0 {
            return Ok(None);
        }
        if n < RECORD_HEADER_LEN {
            self.truncated += 1;
            return Ok(None);
        }
        let ts_sec = self.endian.u32(&rec[0..4]);
        let ts_frac = self.endian.u32(&rec[4..8]);
        let incl_len = self.endian.u32(&rec[8..12]);
        if incl_len > MAX_RECORD_LEN {
            self.truncated += 1;
            return Ok(None);
        }
        let mut data = vec![0u8; incl_len as usize];
        let got = read_full(&mut self.inner, &mut data)?;
        if got < data.len() {
            self.truncated += 1;
            return Ok(None);
        }
        let micros = if self.nanos { ts_frac / 1000 } else { ts_frac };
        Ok(Some(RawPacket {
            timestamp: Timestamp::from_parts(i64::from(ts_sec), micros.min(999_999)),
            link_bytes: data,
        }))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<RawPacket, PcapError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_record() {
            Ok(Some(p)) => Some(Ok(p)),
            Ok(None) => {
                self.done = true;
                if self.truncated > 0 {
                    log::warn!("pcap: {} truncated trailing record(s) ignored", self.truncated);
                }
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e.into()))
            }
        }
    }
}

/// Result of reading a whole capture file.
#[derive(Debug, Clone, Default)]
pub struct Capture {
    pub packets: Vec<RawPacket>,
    pub truncated_records: usize,
}

pub fn read_pcap(path: impl AsRef<Path>) -> Result<Capture, PcapError> {
    let file = File::open(path)?;
    read_pcap_from(BufReader::new(file))
}

pub fn read_pcap_from<R: Read>(reader: R) -> Result<Capture, PcapError> {
    let mut reader = PcapReader::new(reader)?;
    let mut packets = Vec::new();
    for p in reader.by_ref() {
        packets.push(p?);
    }
    Ok(Capture {
        packets,
        truncated_records: reader.truncated_records(),
    })
}

/// Writes little-endian, microsecond-resolution classic pcap.
pub struct PcapWriter<W: Write> {
    inner: W,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut inner: W) -> io::Result<Self> {
        let mut h = Vec::with_capacity(GLOBAL_HEADER_LEN);
        h.extend_from_slice(&MAGIC_MICROS.to_le_bytes());
        h.extend_from_slice(&2u16.to_le_bytes());
        h.extend_from_slice(&4u16.to_le_bytes());
        h.extend_from_slice(&0i32.to_le_bytes());
        h.extend_from_slice(&0u32.to_le_bytes());
        h.extend_from_slice(&DEFAULT_SNAPLEN.to_le_bytes());
        h.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
        inner.write_all(&h)?;
        Ok(PcapWriter { inner })
    }

    pub fn write_packet(&mut self, timestamp: Timestamp, frame: &[u8]) -> io::Result<()> {
        let secs = u32::try_from(timestamp.secs()).map_err(|_| {
            io::Error::new(io::ErrorKind::InvalidInput, "timestamp outside pcap range")
        })?;
        let len = frame.len() as u32;
        self.inner.write_all(&secs.to_le_bytes())?;
        self.inner.write_all(&timestamp.subsec_micros().to_le_bytes())?;
        self.inner.write_all(&len.to_le_bytes())?;
        self.inner.write_all(&len.to_le_bytes())?;
        self.inner.write_all(frame)
    }

    pub fn into_inner(self) -> W {
        self.inner
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

pub fn write_pcap<'a, I>(path: impl AsRef<Path>, packets: I) -> io::Result<()>
where
    I: IntoIterator<Item = (Timestamp, &'a [u8])>,
{
    let mut w = PcapWriter::new(BufWriter::new(File::create(path)?))?;
    for (ts, frame) in packets {
        w.write_packet(ts, frame)?;
    }
    w.flush()
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}
