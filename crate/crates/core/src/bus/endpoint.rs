//! One side of a bus connection.
//!
//! Inbound bytes are decoded into a queue that the owner drains at tick
//! boundaries. Service replies bypass the queue: they are routed by call id
//! straight to the waiting caller, so `call_service` may be used from many
//! threads at once.

use std::collections::{HashMap, VecDeque};
use std::io::{Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex, Weak};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::frame::{encode_frame, Envelope, FrameDecoder};
use super::topics::{Direction, TopicRegistry};
use super::{BusError, SERVICE_PREFIX};

type Reply = Result<Vec<u8>, BusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Kind {
    Request,
    Response,
    Error,
}

#[derive(Serialize, Deserialize)]
struct ServiceFrame<'a> {
    sid: u64,
    kind: Kind,
    #[serde(borrow, default, skip_serializing_if = "Option::is_none")]
    body: Option<&'a RawValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub const ERR_UNKNOWN_SERVICE: &str = "unknown_service";
pub const ERR_REJECTED: &str = "rejected";

/// A decoded service request awaiting a reply.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceRequest {
    pub name: String,
    pub sid: u64,
    pub body: Vec<u8>,
}

impl ServiceRequest {
    /// `None` if the envelope is not a service request.
    pub fn parse(env: &Envelope) -> Option<Result<ServiceRequest, BusError>> {
        let name = env.topic.strip_prefix(SERVICE_PREFIX)?;
        let frame: ServiceFrame = match serde_json::from_slice(&env.payload) {
            Ok(f) => f,
            Err(e) => return Some(Err(BusError::InvalidPayload(e.to_string()))),
        };
        if frame.kind != Kind::Request {
            return None;
        }
        let body = frame.body.map(|b| b.get().as_bytes().to_vec()).unwrap_or_else(|| b"null".to_vec());
        Some(Ok(ServiceRequest { name: name.to_owned(), sid: frame.sid, body }))
    }
}

/// Failure reported by a service handler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceFault {
    pub code: String,
    pub message: String,
}

impl ServiceFault {
    pub fn rejected(message: impl Into<String>) -> Self {
        Self { code: ERR_REJECTED.into(), message: message.into() }
    }
}

struct InboxState {
    decoder: FrameDecoder,
    queue: VecDeque<Envelope>,
    pending: HashMap<u64, mpsc::Sender<Reply>>,
    closed: Option<String>,
}

struct Inbox {
    state: Mutex<InboxState>,
    ready: Condvar,
}

impl Inbox {
    fn new() -> Arc<Self> {
        Arc::new(Inbox {
            state: Mutex::new(InboxState {
                decoder: FrameDecoder::new(),
                queue: VecDeque::new(),
                pending: HashMap::new(),
                closed: None,
            }),
            ready: Condvar::new(),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, InboxState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn feed(&self, bytes: &[u8]) -> Result<(), BusError> {
        let mut st = self.lock();
        if let Some(reason) = &st.closed {
            return Err(BusError::Disconnected(reason.clone()));
        }
        let envs = match st.decoder.feed(bytes) {
            Ok(envs) => envs,
            Err(e) => {
                drop(st);
                self.close(&e.to_string());
                return Err(e);
            }
        };
        for env in envs {
            if let Some(reply) = route_reply(&env) {
                if let Some(tx) = st.pending.remove(&reply.0) {
                    let _ = tx.send(reply.1);
                }
                continue;
            }
            st.queue.push_back(env);
        }
        drop(st);
        self.ready.notify_all();
        Ok(())
    }

    fn close(&self, reason: &str) {
        let mut st = self.lock();
        if st.closed.is_none() {
            st.closed = Some(reason.to_owned());
        }
        for (_, tx) in st.pending.drain() {
            let _ = tx.send(Err(BusError::Disconnected(reason.to_owned())));
        }
        drop(st);
        self.ready.notify_all();
    }
}

/// Extracts `(sid, reply)` from a service response or error frame.
fn route_reply(env: &Envelope) -> Option<(u64, Reply)> {
    let name = env.topic.strip_prefix(SERVICE_PREFIX)?;
    let frame: ServiceFrame = serde_json::from_slice(&env.payload).ok()?;
    match frame.kind {
        Kind::Request => None,
        Kind::Response => {
            let body = frame.body.map(|b| b.get().as_bytes().to_vec()).unwrap_or_else(|| b"null".to_vec());
            Some((frame.sid, Ok(body)))
        }
        Kind::Error => {
            let message = frame.error.unwrap_or_default();
            let err = if frame.code.as_deref() == Some(ERR_UNKNOWN_SERVICE) {
                BusError::UnknownService(name.to_owned())
            } else {
                BusError::Remote(message)
            };
            Some((frame.sid, Err(err)))
        }
    }
}

trait Link: Send + Sync {
    fn send(&self, bytes: &[u8]) -> Result<(), BusError>;
    fn shutdown(&self);
}

struct InProcessLink {
    peer: Weak<Inbox>,
    closed: AtomicBool,
}

impl Link for InProcessLink {
    fn send(&self, bytes: &[u8]) -> Result<(), BusError> {
        if self.closed.load(Ordering::Acquire) {
            return Err(BusError::Disconnected("local side closed".into()));
        }
        let peer = self.peer.upgrade().ok_or_else(|| BusError::Disconnected("peer dropped".into()))?;
        peer.feed(bytes)
    }

    fn shutdown(&self) {
        self.closed.store(true, Ordering::Release);
        if let Some(peer) = self.peer.upgrade() {
            peer.close("peer closed");
        }
    }
}

struct TcpLink {
    stream: Mutex<TcpStream>,
}

impl Link for TcpLink {
    fn send(&self, bytes: &[u8]) -> Result<(), BusError> {
        let mut s = self.stream.lock().unwrap_or_else(|p| p.into_inner());
        s.write_all(bytes).map_err(|e| BusError::Disconnected(e.to_string()))
    }

    fn shutdown(&self) {
        let s = self.stream.lock().unwrap_or_else(|p| p.into_inner());
        let _ = s.shutdown(Shutdown::Both);
    }
}

type Handler = Box<dyn FnMut(&Envelope) + Send + Sync>;
type ServiceHandler = Box<dyn FnMut(&[u8]) -> Result<Vec<u8>, ServiceFault> + Send + Sync>;

pub struct Endpoint {
    link: Box<dyn Link>,
    inbox: Arc<Inbox>,
    topics: TopicRegistry,
    handlers: HashMap<String, Vec<Handler>>,
    servers: HashMap<String, ServiceHandler>,
    next_sid: AtomicU64,
}

impl std::fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Endpoint").field("topics", &self.topics).finish_non_exhaustive()
    }
}

impl Endpoint {
    fn with_link(link: Box<dyn Link>, inbox: Arc<Inbox>, topics: TopicRegistry) -> Self {
        Self { link, inbox, topics, handlers: HashMap::new(), servers: HashMap::new(), next_sid: AtomicU64::new(1) }
    }

    /// Two endpoints joined in memory. Bytes still go through the framing
    /// codec, and delivery is synchronous: once `publish` returns, the
    /// envelope is in the peer's queue.
    pub fn pair(a_topics: TopicRegistry, b_topics: TopicRegistry) -> (Endpoint, Endpoint) {
        let a_inbox = Inbox::new();
        let b_inbox = Inbox::new();
        let a_link = InProcessLink { peer: Arc::downgrade(&b_inbox), closed: AtomicBool::new(false) };
        let b_link = InProcessLink { peer: Arc::downgrade(&a_inbox), closed: AtomicBool::new(false) };
        (
            Endpoint::with_link(Box::new(a_link), a_inbox, a_topics),
            Endpoint::with_link(Box::new(b_link), b_inbox, b_topics),
        )
    }

    pub fn connect(addr: impl ToSocketAddrs, topics: TopicRegistry) -> Result<Endpoint, BusError> {
        let stream = TcpStream::connect(addr).map_err(BusError::Io)?;
        Endpoint::from_stream(stream, topics)
    }

    pub fn accept(listener: &TcpListener, topics: TopicRegistry) -> Result<Endpoint, BusError> {
        let (stream, _) = listener.accept().map_err(BusError::Io)?;
        Endpoint::from_stream(stream, topics)
    }

    pub fn from_stream(stream: TcpStream, topics: TopicRegistry) -> Result<Endpoint, BusError> {
        stream.set_nodelay(true).map_err(BusError::Io)?;
        let mut reader = stream.try_clone().map_err(BusError::Io)?;
        let inbox = Inbox::new();
        let reader_inbox = Arc::clone(&inbox);
        thread::Builder::new()
            .name("bus-reader".into())
            .spawn(move || {
                let mut buf = vec![0u8; 64 * 1024];
                loop {
                    match reader.read(&mut buf) {
                        Ok(0) => {
                            reader_inbox.close("peer closed");
                            break;
                        }
                        Ok(n) => {
                            if reader_inbox.feed(&buf[..n]).is_err() {
                                // malformed stream: drop the connection
                                let _ = reader.shutdown(Shutdown::Both);
                                break;
                            }
                        }
                        Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                        Err(e) => {
                            reader_inbox.close(&e.to_string());
                            break;
                        }
                    }
                }
            })
            .map_err(BusError::Io)?;
        Ok(Endpoint::with_link(Box::new(TcpLink { stream: Mutex::new(stream) }), inbox, topics))
    }

    pub fn topics(&self) -> &TopicRegistry {
        &self.topics
    }

    pub fn register(&mut self, topic: &str, direction: Direction, schema: &'static str) -> Result<(), BusError> {
        self.topics.register(topic, direction, schema)
    }

    /// Reason the connection closed, if it has.
    pub fn closed(&self) -> Option<String> {
        self.inbox.lock().closed.clone()
    }

    pub fn close(&self) {
        self.link.shutdown();
        self.inbox.close("closed locally");
    }

    pub fn publish(&self, topic: &str, payload: &[u8]) -> Result<(), BusError> {
        self.topics.check_outbound(topic)?;
        if topic.starts_with(SERVICE_PREFIX) {
            return Err(BusError::WrongDirection(topic.to_owned()));
        }
        self.send_envelope(&Envelope::new(topic, payload))
    }

    pub fn publish_json<T: Serialize>(&self, topic: &str, msg: &T) -> Result<(), BusError> {
        let payload = serde_json::to_vec(msg).map_err(|e| BusError::InvalidPayload(e.to_string()))?;
        self.publish(topic, &payload)
    }

    fn send_envelope(&self, env: &Envelope) -> Result<(), BusError> {
        let bytes = encode_frame(env)?;
        self.link.send(&bytes)
    }

    /// Writes bytes to the stream verbatim, bypassing framing.
    pub fn send_raw(&self, bytes: &[u8]) -> Result<(), BusError> {
        self.link.send(bytes)
    }

    pub fn subscribe(&mut self, topic: &str, handler: impl FnMut(&Envelope) + Send + Sync + 'static) -> Result<(), BusError> {
        self.topics.check_inbound(topic)?;
        self.handlers.entry(topic.to_owned()).or_default().push(Box::new(handler));
        Ok(())
    }

    pub fn serve(
        &mut self,
        name: &str,
        handler: impl FnMut(&[u8]) -> Result<Vec<u8>, ServiceFault> + Send + Sync + 'static,
    ) -> Result<(), BusError> {
        service_topic(name)?;
        self.servers.insert(name.to_owned(), Box::new(handler));
        Ok(())
    }

    /// Takes every queued envelope, in arrival order.
    pub fn drain(&self) -> Vec<Envelope> {
        self.inbox.lock().queue.drain(..).collect()
    }

    /// Blocks until an envelope is queued, the connection closes, or the
    /// timeout passes. Returns whether anything is queued.
    pub fn wait(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut st = self.inbox.lock();
        loop {
            if !st.queue.is_empty() {
                return true;
            }
            if st.closed.is_some() {
                return false;
            }
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            st = self.inbox.ready.wait_timeout(st, deadline - now).unwrap_or_else(|p| p.into_inner()).0;
        }
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<Envelope> {
        if self.wait(timeout) {
            self.inbox.lock().queue.pop_front()
        } else {
            None
        }
    }

    /// Runs subscribed handlers and served services over the queued
    /// envelopes; returns the ones nothing consumed. Requests for services
    /// this endpoint does not serve get an `unknown_service` reply.
    pub fn dispatch(&mut self) -> Result<Vec<Envelope>, BusError> {
        let mut rest = Vec::new();
        for env in self.drain() {
            if let Some(req) = ServiceRequest::parse(&env) {
                let req = req?;
                let result = match self.servers.get_mut(&req.name) {
                    Some(h) => h(&req.body),
                    None => Err(ServiceFault {
                        code: ERR_UNKNOWN_SERVICE.into(),
                        message: format!("unknown service: {}", req.name),
                    }),
                };
                self.respond(&req, result)?;
                continue;
            }
            match self.handlers.get_mut(&env.topic) {
                Some(hs) => hs.iter_mut().for_each(|h| h(&env)),
                None => rest.push(env),
            }
        }
        Ok(rest)
    }

    pub fn respond(&self, req: &ServiceRequest, result: Result<Vec<u8>, ServiceFault>) -> Result<(), BusError> {
        match result {
            Ok(body) => {
                let text = String::from_utf8(body).map_err(|e| BusError::InvalidPayload(e.to_string()))?;
                let raw = RawValue::from_string(text).map_err(|e| BusError::InvalidPayload(e.to_string()))?;
                let frame = ServiceFrame { sid: req.sid, kind: Kind::Response, body: Some(&raw), code: None, error: None };
                self.send_service(&req.name, &frame)
            }
            Err(fault) => {
                let frame = ServiceFrame {
                    sid: req.sid,
                    kind: Kind::Error,
                    body: None,
                    code: Some(fault.code),
                    error: Some(fault.message),
                };
                self.send_service(&req.name, &frame)
            }
        }
    }

    fn send_service(&self, name: &str, frame: &ServiceFrame) -> Result<(), BusError> {
        let topic = service_topic(name)?;
        let payload = serde_json::to_vec(frame).map_err(|e| BusError::InvalidPayload(e.to_string()))?;
        self.send_envelope(&Envelope::new(topic, payload))
    }

    /// Sends a request without waiting. The reply is delivered to the
    /// returned handle whenever the peer answers.
    pub fn call_service_async(&self, name: &str, request: &[u8]) -> Result<PendingCall, BusError> {
        let text = std::str::from_utf8(request).map_err(|e| BusError::InvalidPayload(e.to_string()))?;
        let body: Box<RawValue> =
            RawValue::from_string(text.to_owned()).map_err(|e| BusError::InvalidPayload(e.to_string()))?;
        let sid = self.next_sid.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::channel();
        {
            let mut st = self.inbox.lock();
            if let Some(reason) = &st.closed {
                return Err(BusError::Disconnected(reason.clone()));
            }
            st.pending.insert(sid, tx);
        }
        let frame = ServiceFrame { sid, kind: Kind::Request, body: Some(&body), code: None, error: None };
        if let Err(e) = self.send_service(name, &frame) {
            self.inbox.lock().pending.remove(&sid);
            return Err(e);
        }
        Ok(PendingCall { name: name.to_owned(), sid, rx, inbox: Arc::downgrade(&self.inbox) })
    }

    pub fn call_service(&self, name: &str, request: &[u8], timeout: Duration) -> Result<Vec<u8>, BusError> {
        self.call_service_async(name, request)?.wait(timeout)
    }
}

impl Drop for Endpoint {
    fn drop(&mut self) {
        self.link.shutdown();
        self.inbox.close("endpoint dropped");
    }
}

pub struct PendingCall {
    name: String,
    sid: u64,
    rx: mpsc::Receiver<Reply>,
    inbox: Weak<Inbox>,
}

impl PendingCall {
    pub fn sid(&self) -> u64 {
        self.sid
    }

    /// `None` while the reply has not arrived.
    pub fn try_take(&self) -> Option<Reply> {
        match self.rx.try_recv() {
            Ok(r) => Some(r),
            Err(mpsc::TryRecvError::Empty) => None,
            Err(mpsc::TryRecvError::Disconnected) => Some(Err(BusError::Disconnected("endpoint dropped".into()))),
        }
    }

    pub fn wait(self, timeout: Duration) -> Reply {
        match self.rx.recv_timeout(timeout) {
            Ok(r) => r,
            Err(mpsc::RecvTimeoutError::Timeout) => {
                if let Some(inbox) = self.inbox.upgrade() {
                    inbox.lock().pending.remove(&self.sid);
                }
                Err(BusError::Timeout { service: self.name, after: timeout })
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(BusError::Disconnected("endpoint dropped".into())),
        }
    }
}

fn service_topic(name: &str) -> Result<String, BusError> {
    if name.is_empty() {
        return Err(BusError::EmptyTopic);
    }
    let topic = format!("{SERVICE_PREFIX}{name}");
    if topic.len() > super::MAX_TOPIC_LEN {
        return Err(BusError::TopicTooLong(topic.len()));
    }
    Ok(topic)
}
