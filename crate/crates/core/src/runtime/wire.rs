//! Byte protocol between master and worker processes.
//!
//! Every frame is `[u32 LE payload length][u8 tag][payload]`. Payloads:
//!
//! | tag  | name    | payload                                              |
//! |------|---------|------------------------------------------------------|
//! | 0x01 | INIT    | u32 LE worker count, serialized input                |
//! | 0x02 | ORDER   | u64 LE iteration, serialized order                   |
//! | 0x03 | PARTIAL | u64 LE iteration, u32 LE worker index, partial       |
//! | 0x04 | STOP    | empty                                                |
//!
//! Before any frame, a connecting worker writes its index as a raw u32 LE.
//! Vectors are a u64 LE element count followed by IEEE-754 doubles, LE.

use std::io::{self, Read, Write};
use std::ops::Range;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const TAG_INIT: u8 = 0x01;
pub const TAG_ORDER: u8 = 0x02;
pub const TAG_PARTIAL: u8 = 0x03;
pub const TAG_STOP: u8 = 0x04;

/// Values that can cross the master–worker boundary.
pub trait Wire: Sized {
    fn encode(&self, out: &mut Vec<u8>);
    fn decode(buf: &mut &[u8]) -> Result<Self>;

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode(&mut out);
        out
    }

    /// Decodes a whole buffer; trailing bytes are a protocol error.
    fn from_bytes(mut buf: &[u8]) -> Result<Self> {
        let v = Self::decode(&mut buf)?;
        if !buf.is_empty() {
            return Err(Error::Protocol(format!(
                "{} trailing bytes after payload",
                buf.len()
            )));
        }
        Ok(v)
    }
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if buf.len() < n {
        return Err(Error::Protocol(format!(
            "payload truncated: need {n} bytes, have {}",
            buf.len()
        )));
    }
    let (head, tail) = buf.split_at(n);
    *buf = tail;
    Ok(head)
}

pub fn read_u32(buf: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take(buf, 4)?.try_into().unwrap()))
}

pub fn read_u64(buf: &mut &[u8]) -> Result<u64> {
    Ok(u64::from_le_bytes(take(buf, 8)?.try_into().unwrap()))
}

pub fn read_f64(buf: &mut &[u8]) -> Result<f64> {
    Ok(f64::from_le_bytes(take(buf, 8)?.try_into().unwrap()))
}

impl Wire for u64 {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn decode(buf: &mut &[u8]) -> Result<Self> {
        read_u64(buf)
    }
}

impl Wire for f64 {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn decode(buf: &mut &[u8]) -> Result<Self> {
        read_f64(buf)
    }
}

impl Wire for () {
    fn encode(&self, _out: &mut Vec<u8>) {}
    fn decode(_buf: &mut &[u8]) -> Result<Self> {
        Ok(())
    }
}

impl Wire for Range<usize> {
    fn encode(&self, out: &mut Vec<u8>) {
        (self.start as u64).encode(out);
        (self.end as u64).encode(out);
    }
    fn decode(buf: &mut &[u8]) -> Result<Self> {
        Ok(read_u64(buf)? as usize..read_u64(buf)? as usize)
    }
}

/// Writes a slice in the vector layout.
pub fn encode_slice<T: Scalar>(xs: &[T], out: &mut Vec<u8>) {
    out.reserve(8 + 8 * xs.len());
    out.extend_from_slice(&(xs.len() as u64).to_le_bytes());
    for x in xs {
        out.extend_from_slice(&x.to_f64_lossless().to_le_bytes());
    }
}

impl<T: Scalar> Wire for Vec<T> {
    fn encode(&self, out: &mut Vec<u8>) {
        encode_slice(self, out);
    }

    fn decode(buf: &mut &[u8]) -> Result<Self> {
        let len = read_u64(buf)? as usize;
        let bytes = take(buf, len.checked_mul(8).ok_or_else(|| {
            Error::Protocol(format!("vector length {len} overflows"))
        })?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| T::from_f64_lossy(f64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
}

/// A decoded frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Init { workers: u32, input: Vec<u8> },
    Order { iteration: u64, order: Vec<u8> },
    Partial { iteration: u64, worker: u32, partial: Vec<u8> },
    Stop,
}

impl Frame {
    pub fn tag(&self) -> u8 {
        match self {
            Frame::Init { .. } => TAG_INIT,
            Frame::Order { .. } => TAG_ORDER,
            Frame::Partial { .. } => TAG_PARTIAL,
            Frame::Stop => TAG_STOP,
        }
    }

    fn payload(&self) -> Vec<u8> {
        let mut p = Vec::new();
        match self {
            Frame::Init { workers, input } => {
                p.extend_from_slice(&workers.to_le_bytes());
                p.extend_from_slice(input);
            }
            Frame::Order { iteration, order } => {
                p.extend_from_slice(&iteration.to_le_bytes());
                p.extend_from_slice(order);
            }
            Frame::Partial {
                iteration,
                worker,
                partial,
            } => {
                p.extend_from_slice(&iteration.to_le_bytes());
                p.extend_from_slice(&worker.to_le_bytes());
                p.extend_from_slice(partial);
            }
            Frame::Stop => {}
        }
        p
    }

    /// Full on-the-wire bytes, header included.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payload = self.payload();
        let len = u32::try_from(payload.len())
            .map_err(|_| Error::Protocol(format!("payload of {} bytes too large", payload.len())))?;
        let mut out = Vec::with_capacity(5 + payload.len());
        out.extend_from_slice(&len.to_le_bytes());
        out.push(self.tag());
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn parse(tag: u8, payload: Vec<u8>) -> Result<Self> {
        let mut buf = payload.as_slice();
        let frame = match tag {
            TAG_INIT => {
                let workers = read_u32(&mut buf)?;
                Frame::Init {
                    workers,
                    input: buf.to_vec(),
                }
            }
            TAG_ORDER => {
                let iteration = read_u64(&mut buf)?;
                Frame::Order {
                    iteration,
                    order: buf.to_vec(),
                }
            }
            TAG_PARTIAL => {
                let iteration = read_u64(&mut buf)?;
                let worker = read_u32(&mut buf)?;
                Frame::Partial {
                    iteration,
                    worker,
                    partial: buf.to_vec(),
                }
            }
            TAG_STOP => {
                if !buf.is_empty() {
                    return Err(Error::Protocol("STOP frame with a payload".into()));
                }
                Frame::Stop
            }
            other => return Err(Error::Protocol(format!("unknown frame tag {other:#04x}"))),
        };
        Ok(frame)
    }
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> io::Result<()> {
    let bytes = frame
        .to_bytes()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    w.write_all(&bytes)?;
    w.flush()
}

/// Reads one frame. A clean EOF before the header yields `Ok(None)`.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Frame>> {
    let mut header = [0u8; 5];
    let mut got = 0;
    while got < header.len() {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Protocol("connection closed inside a frame header".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::transport("reading frame header", e)),
        }
    }
    let len = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)
        .map_err(|e| Error::transport("reading frame payload", e))?;
    Frame::parse(header[4], payload).map(Some)
}

pub fn write_handshake(w: &mut impl Write, worker: u32) -> io::Result<()> {
    w.write_all(&worker.to_le_bytes())?;
    w.flush()
}

pub fn read_handshake(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::transport("reading worker handshake", e))?;
    Ok(u32::from_le_bytes(b))
}
