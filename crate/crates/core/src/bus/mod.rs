//! Topic pub/sub and request/response services over a byte stream.
//!
//! Services share the stream with topics under the reserved `~svc/` prefix;
//! their JSON payload carries a `sid` call id that pairs each response with
//! its request.

mod endpoint;
mod frame;
mod rate;
mod topics;

use std::time::Duration;

use thiserror::Error;

pub use endpoint::{Endpoint, PendingCall, ServiceFault, ServiceRequest, ERR_REJECTED, ERR_UNKNOWN_SERVICE};
pub use frame::{decode_frames, encode_frame, encode_into, Envelope, FrameDecoder, MAX_PAYLOAD_LEN, MAX_TOPIC_LEN};
pub use rate::RateGate;
pub use topics::{Direction, TopicInfo, TopicRegistry};

pub const SERVICE_PREFIX: &str = "~svc/";
pub const DEFAULT_BUS_PORT: u16 = 10000;

#[derive(Debug, Error)]
pub enum BusError {
    #[error("topic must be nonempty")]
    EmptyTopic,
    #[error("topic is {0} bytes, limit is {MAX_TOPIC_LEN}")]
    TopicTooLong(usize),
    #[error("payload is {0} bytes, limit is {MAX_PAYLOAD_LEN}")]
    PayloadTooLarge(usize),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("topic '{0}' is not registered")]
    Unregistered(String),
    #[error("topic '{0}' is not registered for this direction")]
    WrongDirection(String),
    #[error("connection lost: {0}")]
    Disconnected(String),
    #[error("service '{service}' timed out after {after:?}")]
    Timeout { service: String, after: Duration },
    #[error("unknown service '{0}'")]
    UnknownService(String),
    #[error("peer error: {0}")]
    Remote(String),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("rate gate period must be positive, got {0}")]
    InvalidPeriod(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
