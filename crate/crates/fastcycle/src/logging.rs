//! Binary message logging and replay.
//!
//! The logger is an ordinary subscriber: it reads payloads through the same
//! shared handle as everyone else and only copies bytes when writing them to
//! the sink. Records use the layout in [`fastcycle_core::record`].

use std::io::{self, Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use fastcycle_core::record::{decode_body, encode_header, RecordHeader, HEADER_LEN};
use fastcycle_core::{
    DecodeError, DropPolicy, LogRecord, MessageEnvelope, Scope, SubscribeOptions, SubscriberId,
    TopicName,
};

use crate::bus::{Bus, CallbackError};

/// Queue bound used by [`LoggerOptions::default`].
pub const DEFAULT_LOG_QUEUE: usize = 65_536;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopicFilter {
    /// Every topic, including topics created after the logger attaches.
    All,
    Allowlist(Vec<TopicName>),
}

impl TopicFilter {
    pub fn allowlist<S: AsRef<str>>(topics: &[S]) -> Result<Self, LogError> {
        let topics = topics
            .iter()
            .map(|t| TopicName::new(t.as_ref()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| LogError::InvalidTopic(e.to_string()))?;
        Ok(TopicFilter::Allowlist(topics))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoggerOptions {
    pub queue: SubscribeOptions,
}

impl Default for LoggerOptions {
    /// A large drop-oldest queue: the logger never stalls publishers, and
    /// anything it loses shows up in [`LoggerHandle::dropped`].
    fn default() -> Self {
        Self {
            queue: SubscribeOptions::bounded(DEFAULT_LOG_QUEUE, DropPolicy::DropOldest)
                .expect("non-zero"),
        }
    }
}

impl LoggerOptions {
    /// Unbounded queue; every matching publish ends up in the log.
    pub fn lossless() -> Self {
        Self {
            queue: SubscribeOptions::unbounded(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("topic allowlist is empty")]
    EmptyAllowlist,
    #[error("invalid topic: {0}")]
    InvalidTopic(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Default)]
struct LoggerCounters {
    records: AtomicU64,
    bytes: AtomicU64,
    write_errors: AtomicU64,
}

pub struct LoggerHandle<W> {
    bus: Bus,
    subscriptions: Vec<SubscriberId>,
    sink: Arc<Mutex<Option<W>>>,
    counters: Arc<LoggerCounters>,
}

/// Subscribes a logger writing records for `filter` into `sink`.
pub fn attach_logger<W>(
    bus: &Bus,
    filter: TopicFilter,
    sink: W,
    options: LoggerOptions,
) -> Result<LoggerHandle<W>, LogError>
where
    W: Write + Send + 'static,
{
    let scopes = match filter {
        TopicFilter::All => vec![Scope::All],
        TopicFilter::Allowlist(topics) if topics.is_empty() => {
            return Err(LogError::EmptyAllowlist)
        }
        TopicFilter::Allowlist(mut topics) => {
            topics.dedup();
            topics.into_iter().map(Scope::Topic).collect()
        }
    };

    let sink = Arc::new(Mutex::new(Some(sink)));
    let counters = Arc::new(LoggerCounters::default());
    let subscriptions = scopes
        .into_iter()
        .map(|scope| {
            let sink = Arc::clone(&sink);
            let counters = Arc::clone(&counters);
            bus.subscribe_scope(
                scope,
                options.queue,
                Arc::new(move |env: &MessageEnvelope| {
                    let mut guard = sink.lock().unwrap_or_else(|e| e.into_inner());
                    let Some(writer) = guard.as_mut() else {
                        return Ok(());
                    };
                    match write_record(writer, env) {
                        Ok(n) => {
                            counters.records.fetch_add(1, Ordering::Relaxed);
                            counters.bytes.fetch_add(n as u64, Ordering::Relaxed);
                            Ok(())
                        }
                        Err(err) => {
                            counters.write_errors.fetch_add(1, Ordering::Relaxed);
                            Err(CallbackError(format!("log write failed: {err}")))
                        }
                    }
                }),
            )
        })
        .collect();

    Ok(LoggerHandle {
        bus: bus.clone(),
        subscriptions,
        sink,
        counters,
    })
}

/// Writes one record straight from the envelope, without an intermediate
/// buffer. Returns the bytes written.
pub fn write_record<W: Write + ?Sized>(writer: &mut W, env: &MessageEnvelope) -> io::Result<usize> {
    writer.write_all(&encode_header(env))?;
    writer.write_all(env.topic.as_bytes())?;
    writer.write_all(env.bytes())?;
    Ok(HEADER_LEN + env.topic.len() + env.payload.len())
}

impl<W: Write> LoggerHandle<W> {
    pub fn records_written(&self) -> u64 {
        self.counters.records.load(Ordering::Relaxed)
    }

    pub fn bytes_written(&self) -> u64 {
        self.counters.bytes.load(Ordering::Relaxed)
    }

    pub fn write_errors(&self) -> u64 {
        self.counters.write_errors.load(Ordering::Relaxed)
    }

    /// Envelopes the logger's queues had to drop.
    pub fn dropped(&self) -> u64 {
        self.subscriptions
            .iter()
            .filter_map(|id| self.bus.subscriber_stats(*id))
            .map(|s| s.dropped)
            .sum()
    }

    pub fn subscriptions(&self) -> &[SubscriberId] {
        &self.subscriptions
    }

    pub fn flush(&self) -> io::Result<()> {
        match self.sink.lock().unwrap_or_else(|e| e.into_inner()).as_mut() {
            Some(w) => w.flush(),
            None => Ok(()),
        }
    }

    /// Unsubscribes and hands back the sink. Anything still queued for the
    /// logger is discarded, so stop the broker with a drain first when the
    /// log must be complete.
    pub fn detach(self) -> io::Result<W> {
        for id in &self.subscriptions {
            self.bus.unsubscribe(*id);
        }
        let mut sink = self
            .sink
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .take()
            .expect("sink present until detach");
        sink.flush()?;
        Ok(sink)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("log corrupt at byte offset {offset}: {kind}")]
pub struct ReplayError {
    pub offset: u64,
    pub kind: ReplayErrorKind,
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayErrorKind {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Streaming reader over a log. Yields records in file order and stops after
/// the first error, which carries the offset of the bad record.
pub struct Replay<R> {
    reader: R,
    offset: u64,
    done: bool,
}

pub fn replay<R: Read>(reader: R) -> Replay<R> {
    Replay {
        reader,
        offset: 0,
        done: false,
    }
}

impl<R: Read> Replay<R> {
    /// Byte offset of the next record.
    pub fn offset(&self) -> u64 {
        self.offset
    }

    fn fail(&mut self, kind: impl Into<ReplayErrorKind>) -> Option<Result<LogRecord, ReplayError>> {
        self.done = true;
        Some(Err(ReplayError {
            offset: self.offset,
            kind: kind.into(),
        }))
    }
}

/// Reads until `buf` is full or EOF; returns how much was read.
fn read_full<R: Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

impl<R: Read> Iterator for Replay<R> {
    type Item = Result<LogRecord, ReplayError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut head = [0u8; HEADER_LEN];
        let got = match read_full(&mut self.reader, &mut head) {
            Ok(n) => n,
            Err(e) => return self.fail(e),
        };
        if got == 0 {
            self.done = true;
            return None;
        }
        let header = match RecordHeader::decode(&head[..got]) {
            Ok(h) => h,
            Err(e) => return self.fail(e),
        };
        let body_len = header.record_len() - HEADER_LEN;
        let mut body = vec![0u8; body_len];
        let got_body = match read_full(&mut self.reader, &mut body) {
            Ok(n) => n,
            Err(e) => return self.fail(e),
        };
        if got_body < body_len {
            return self.fail(DecodeError::Truncated {
                needed: header.record_len(),
                available: HEADER_LEN + got_body,
            });
        }
        let topic_len = header.topic_len as usize;
        match decode_body(&header, &body[..topic_len], &body[topic_len..]) {
            Ok(record) => {
                self.offset += header.record_len() as u64;
                Some(Ok(record))
            }
            Err(e) => self.fail(e),
        }
    }
}
