//! Bin-to-center wire protocol and the lossy link it travels over.

mod channel;
mod codec;
mod retransmit;

pub use channel::{channel_transmit, Channel, ChannelParams, ChannelParamsError};
pub use codec::{
    decode, decode_ack, decode_line, encode, encode_ack, AckMessage, DecodeError, ErrorCategory, TelemetryMessage,
    VoteSummary, WireLine,
};
pub use retransmit::{
    sender_retransmit, AckOutcome, LinkStatus, RetransmitPolicy, RetransmitSchedule, ScheduledResend, SenderLink,
    TimeoutAction,
};
