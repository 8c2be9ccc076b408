//! Single-round client/server wire protocol.
//!
//! Frame layout, little-endian throughout:
//!
//! ```text
//! "KISH" | version: u8 | kind: u8 | payload_len: u32 | payload
//! payload = field_count: u16 | { tag: u8 | len: u32 | bytes }*
//! ```
//!
//! Every ciphertext travels as an 18-byte record: an 8-byte value blob, a
//! 2-byte depth and an 8-byte key id. A query carries the ring, the public
//! key token and `d` ciphertexts; a response carries one ciphertext per
//! repetition. Neither size depends on the database size.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::thread::JoinHandle;

use crate::classifier::{
    client_key_seed, encrypt_query, majority, server_respond, LabeledDatabase, ProtocolParams,
};
use crate::error::{Error, Result};
use crate::he::{keygen, Cipher, PublicKey, WireCipher};
use crate::ring::RingParams;

pub const MAGIC: [u8; 4] = *b"KISH";
pub const PROTOCOL_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
pub const CIPHER_WIRE_LEN: usize = 18;
/// Upper bound on a payload accepted from the network.
pub const MAX_PAYLOAD: u32 = 1 << 24;

const KIND_QUERY: u8 = 1;
const KIND_RESPONSE: u8 = 2;
const KIND_ERROR: u8 = 3;

const TAG_RING: u8 = 1;
const TAG_PK: u8 = 2;
const TAG_CIPHERS: u8 = 3;
const TAG_TEXT: u8 = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryMessage {
    /// The client's ring. The `n` field is informational; the server uses
    /// its own database size.
    pub ring: RingParams,
    pub pk: Vec<u8>,
    pub enc_q: Vec<WireCipher>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResponseMessage {
    pub enc_class: Vec<WireCipher>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Query(QueryMessage),
    Response(ResponseMessage),
    Error(String),
}

pub fn encode_message(msg: &Message) -> Vec<u8> {
    let mut fields: Vec<(u8, Vec<u8>)> = Vec::new();
    let kind = match msg {
        Message::Query(q) => {
            let mut ring = Vec::with_capacity(32);
            for v in [q.ring.modulus(), q.ring.coord_bound(), q.ring.dim() as u64, q.ring.n() as u64]
            {
                ring.extend_from_slice(&v.to_le_bytes());
            }
            fields.push((TAG_RING, ring));
            fields.push((TAG_PK, q.pk.clone()));
            fields.push((TAG_CIPHERS, encode_ciphers(&q.enc_q)));
            KIND_QUERY
        }
        Message::Response(r) => {
            fields.push((TAG_CIPHERS, encode_ciphers(&r.enc_class)));
            KIND_RESPONSE
        }
        Message::Error(text) => {
            fields.push((TAG_TEXT, text.as_bytes().to_vec()));
            KIND_ERROR
        }
    };

    let mut payload = Vec::new();
    payload.extend_from_slice(&(fields.len() as u16).to_le_bytes());
    for (tag, bytes) in &fields {
        payload.push(*tag);
        payload.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        payload.extend_from_slice(bytes);
    }

    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(PROTOCOL_VERSION);
    out.push(kind);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

fn encode_ciphers(cs: &[WireCipher]) -> Vec<u8> {
    let mut out = Vec::with_capacity(cs.len() * CIPHER_WIRE_LEN);
    for c in cs {
        out.extend_from_slice(&c.blob.to_le_bytes());
        out.extend_from_slice(&c.depth.to_le_bytes());
        out.extend_from_slice(&c.key_id.to_le_bytes());
    }
    out
}

/// Bounds-checked little-endian reader that reports absolute offsets.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    /// Absolute offset of `buf[0]` in the original input.
    base: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < len {
            return Err(Error::Decode {
                offset: self.base + self.buf.len(),
                reason: format!("truncated {what}: need {len} bytes, have {}", self.buf.len() - self.pos),
            });
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn offset(&self) -> usize {
        self.base + self.pos
    }
}

pub fn decode_message(bytes: &[u8]) -> Result<Message> {
    let mut cur = Cursor { buf: bytes, pos: 0, base: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Decode { offset: 0, reason: format!("bad magic {magic:02x?}") });
    }
    let version = cur.u8("version")?;
    if version != PROTOCOL_VERSION {
        return Err(Error::Decode { offset: 4, reason: format!("unsupported version {version}") });
    }
    let kind = cur.u8("kind")?;
    let payload_len = cur.u32("payload length")? as usize;
    let payload = cur.take(payload_len, "payload")?;
    if cur.pos != bytes.len() {
        return Err(Error::Decode {
            offset: cur.pos,
            reason: format!("{} trailing bytes after payload", bytes.len() - cur.pos),
        });
    }

    let mut p = Cursor { buf: payload, pos: 0, base: HEADER_LEN };
    let count = p.u16("field count")?;
    let mut fields: Vec<(u8, usize, &[u8])> = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let tag = p.u8("field tag")?;
        let len = p.u32("field length")? as usize;
        let at = p.offset();
        fields.push((tag, at, p.take(len, "field")?));
    }
    if p.pos != payload.len() {
        return Err(Error::Decode { offset: p.offset(), reason: "bytes after last field".into() });
    }

    let expect = |want: &[u8]| -> Result<()> {
        let tags: Vec<u8> = fields.iter().map(|f| f.0).collect();
        if tags != want {
            return Err(Error::Decode {
                offset: HEADER_LEN,
                reason: format!("kind {kind} expects fields {want:?}, got {tags:?}"),
            });
        }
        Ok(())
    };

    match kind {
        KIND_QUERY => {
            expect(&[TAG_RING, TAG_PK, TAG_CIPHERS])?;
            let ring = decode_ring(fields[0].2, fields[0].1)?;
            let enc_q = decode_ciphers(fields[2].2, fields[2].1)?;
            Ok(Message::Query(QueryMessage { ring, pk: fields[1].2.to_vec(), enc_q }))
        }
        KIND_RESPONSE => {
            expect(&[TAG_CIPHERS])?;
            let enc_class = decode_ciphers(fields[0].2, fields[0].1)?;
            Ok(Message::Response(ResponseMessage { enc_class }))
        }
        KIND_ERROR => {
            expect(&[TAG_TEXT])?;
            let text = String::from_utf8(fields[0].2.to_vec()).map_err(|e| Error::Decode {
                offset: fields[0].1 + e.utf8_error().valid_up_to(),
                reason: "error text is not UTF-8".into(),
            })?;
            Ok(Message::Error(text))
        }
        other => Err(Error::Decode { offset: 5, reason: format!("unknown message kind {other}") }),
    }
}

fn decode_ring(bytes: &[u8], at: usize) -> Result<RingParams> {
    if bytes.len() != 32 {
        return Err(Error::Decode { offset: at, reason: "ring field must be 32 bytes".into() });
    }
    let mut c = Cursor { buf: bytes, pos: 0, base: at };
    let (modulus, coord_bound) = (c.u64("modulus")?, c.u64("coord bound")?);
    let (dim, n) = (c.u64("dim")?, c.u64("n")?);
    let dim = usize::try_from(dim).ok().filter(|&d| d <= 1 << 16);
    let n = usize::try_from(n).ok();
    match (dim, n) {
        (Some(dim), Some(n)) => RingParams::new(modulus, coord_bound, dim, n)
            .map_err(|e| Error::Decode { offset: at, reason: format!("invalid ring: {e}") }),
        _ => Err(Error::Decode { offset: at, reason: "ring dimension out of range".into() }),
    }
}

fn decode_ciphers(bytes: &[u8], at: usize) -> Result<Vec<WireCipher>> {
    if bytes.len() % CIPHER_WIRE_LEN != 0 {
        return Err(Error::Decode {
            offset: at,
            reason: format!("ciphertext list length {} is not a multiple of 18", bytes.len()),
        });
    }
    let mut c = Cursor { buf: bytes, pos: 0, base: at };
    (0..bytes.len() / CIPHER_WIRE_LEN)
        .map(|_| {
            Ok(WireCipher { blob: c.u64("blob")?, depth: c.u16("depth")?, key_id: c.u64("key id")? })
        })
        .collect()
}

/// Reads one frame. `Ok(None)` on a clean end of stream before a header.
pub fn read_message(r: &mut impl Read) -> Result<Option<Message>> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(Error::Decode { offset: got, reason: "stream ended inside header".into() })
            }
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    if header[..4] != MAGIC {
        return Err(Error::Decode { offset: 0, reason: "bad magic".into() });
    }
    let len = u32::from_le_bytes(header[6..10].try_into().expect("4 bytes"));
    if len > MAX_PAYLOAD {
        return Err(Error::Decode { offset: 6, reason: format!("payload of {len} bytes too large") });
    }
    let mut frame = header.to_vec();
    frame.resize(HEADER_LEN + len as usize, 0);
    r.read_exact(&mut frame[HEADER_LEN..]).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => {
            Error::Decode { offset: HEADER_LEN, reason: "stream ended inside payload".into() }
        }
        _ => e.into(),
    })?;
    decode_message(&frame).map(Some)
}

pub fn write_message(w: &mut impl Write, msg: &Message) -> Result<()> {
    w.write_all(&encode_message(msg))?;
    w.flush()?;
    Ok(())
}

/// A reader and a writer used as one bidirectional stream, e.g. stdin and
/// stdout.
pub struct Duplex<R, W> {
    pub reader: R,
    pub writer: W,
}

impl<R: Read, W> Read for Duplex<R, W> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        self.reader.read(buf)
    }
}

impl<R, W: Write> Write for Duplex<R, W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.writer.write(buf)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.writer.flush()
    }
}

/// Checks a query against the server's ring and rebuilds its key and
/// ciphertexts.
fn accept_query(q: &QueryMessage, pp: &ProtocolParams) -> Result<(PublicKey, Vec<Cipher>)> {
    let ours = &pp.ring;
    if q.ring.modulus() != ours.modulus() || q.ring.coord_bound() != ours.coord_bound() {
        return Err(Error::Protocol(format!(
            "ring mismatch: query uses modulus {} with grid {}, server uses modulus {} with grid {}",
            q.ring.modulus(),
            q.ring.coord_bound(),
            ours.modulus(),
            ours.coord_bound()
        )));
    }
    if q.ring.dim() != ours.dim() || q.enc_q.len() != ours.dim() {
        return Err(Error::Protocol(format!(
            "dimension mismatch: query has {} coordinates (ring says {}), database has {}",
            q.enc_q.len(),
            q.ring.dim(),
            ours.dim()
        )));
    }
    let pk = PublicKey::from_bytes(&q.pk, *ours)?;
    let enc_q = q
        .enc_q
        .iter()
        .map(|w| {
            let c = Cipher::from_wire(*w);
            if c.key_id() != pk.key_id() {
                return Err(Error::Protocol("ciphertext bound to a different key".into()));
            }
            if !c.in_ring(ours) {
                return Err(Error::Protocol("ciphertext outside the ring".into()));
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((pk, enc_q))
}

/// Serves queries on one connection until the peer closes it. Returns the
/// number of queries answered.
///
/// A malformed or mismatched query gets an error frame, after which the
/// connection is abandoned and the error returned.
pub fn run_server(
    stream: &mut (impl Read + Write),
    db: &LabeledDatabase,
    pp: &ProtocolParams,
) -> Result<usize> {
    let mut served = 0;
    loop {
        let outcome = match read_message(stream) {
            Ok(None) => return Ok(served),
            Ok(Some(Message::Query(q))) => accept_query(&q, pp)
                .and_then(|(pk, enc_q)| server_respond(&pk, &enc_q, db, pp)),
            Ok(Some(_)) => Err(Error::Protocol("expected a query message".into())),
            Err(Error::Io(e)) => return Err(Error::Io(e)),
            Err(e) => Err(e),
        };
        match outcome {
            Ok(bits) => {
                let enc_class = bits.iter().map(Cipher::to_wire).collect();
                write_message(stream, &Message::Response(ResponseMessage { enc_class }))?;
                served += 1;
            }
            Err(e) => {
                // Best effort: the peer may already be gone.
                let _ = write_message(stream, &Message::Error(e.to_string()));
                return Err(match e {
                    Error::Protocol(_) | Error::Decode { .. } => e,
                    other => Error::Protocol(other.to_string()),
                });
            }
        }
    }
}

/// Client-side settings for one classification.
#[derive(Clone, Copy, Debug)]
pub struct ClientConfig {
    pub ring: RingParams,
    pub seed: u64,
}

/// Sends one query and returns the majority of the decrypted class bits.
pub fn run_client(stream: &mut (impl Read + Write), q: &[u64], cfg: &ClientConfig) -> Result<u8> {
    let keys = keygen(&cfg.ring, client_key_seed(cfg.seed));
    let enc_q = encrypt_query(&keys.pk, q)?;
    let query = QueryMessage {
        ring: cfg.ring,
        pk: keys.pk.to_bytes(),
        enc_q: enc_q.iter().map(Cipher::to_wire).collect(),
    };
    write_message(stream, &Message::Query(query))?;
    match read_message(stream)? {
        None => Err(Error::Protocol("server closed the connection without a response".into())),
        Some(Message::Response(r)) => {
            if r.enc_class.len() % 2 == 0 {
                return Err(Error::Protocol(format!(
                    "expected an odd number of class bits, got {}",
                    r.enc_class.len()
                )));
            }
            let bits = r
                .enc_class
                .iter()
                .map(|w| keys.sk.decrypt(&Cipher::from_wire(*w)))
                .collect::<Result<Vec<_>>>()?;
            if bits.iter().any(|&b| b > 1) {
                return Err(Error::Protocol("response bit outside {0, 1}".into()));
            }
            Ok(majority(&bits))
        }
        Some(Message::Error(text)) => Err(Error::Protocol(format!("server error: {text}"))),
        Some(Message::Query(_)) => Err(Error::Protocol("unexpected query from server".into())),
    }
}

/// Accepts connections and serves each on its own thread. Stops after
/// `max_connections` if given.
pub fn serve_tcp(
    listener: TcpListener,
    db: LabeledDatabase,
    pp: ProtocolParams,
    max_connections: Option<usize>,
    mut on_error: impl FnMut(Error),
) -> Result<()> {
    let mut workers = Vec::new();
    let (tx, rx) = std::sync::mpsc::channel();
    for (i, conn) in listener.incoming().enumerate() {
        let mut stream = conn?;
        let (db, tx) = (db.clone(), tx.clone());
        workers.push(std::thread::spawn(move || {
            if let Err(e) = run_server(&mut stream, &db, &pp) {
                let _ = tx.send(e);
            }
        }));
        while let Ok(e) = rx.try_recv() {
            on_error(e);
        }
        if max_connections.is_some_and(|m| i + 1 >= m) {
            break;
        }
    }
    drop(tx);
    for w in workers {
        let _ = w.join();
    }
    rx.into_iter().for_each(on_error);
    Ok(())
}

/// Starts a server on `127.0.0.1` with an ephemeral port for
/// `max_connections` connections.
pub fn spawn_loopback_server(
    db: LabeledDatabase,
    pp: ProtocolParams,
    max_connections: usize,
) -> Result<(SocketAddr, JoinHandle<Result<()>>)> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let handle =
        std::thread::spawn(move || serve_tcp(listener, db, pp, Some(max_connections), |_| {}));
    Ok((addr, handle))
}

pub fn connect(addr: impl std::net::ToSocketAddrs) -> Result<TcpStream> {
    Ok(TcpStream::connect(addr)?)
}
