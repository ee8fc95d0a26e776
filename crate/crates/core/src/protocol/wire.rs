//! Newline-delimited JSON framing for protocol messages.
//!
//! One message per line:
//!
//! ```text
//! {"v":1,"round":3,"kind":"verify_claim","payload":{"mismatch":true}}
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const WIRE_VERSION: u8 = 1;

/// Every kind the decoder accepts.
pub const KINDS: [&str; 8] =
    ["agree", "box_b", "found_claim", "request_a", "box_a", "verify_claim", "settle", "abort"];

/// Opaque handle to a state held by the referee. The state itself never
/// crosses the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateRef(pub u64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case", deny_unknown_fields)]
pub enum Body {
    Agree { gamma: f64, r: f64, n_rounds: u64, seed_commitment: String },
    BoxB { state_ref: StateRef },
    FoundClaim { found: bool },
    RequestA {},
    BoxA { state_ref: StateRef },
    VerifyClaim { mismatch: bool },
    Settle { bob_delta: f64 },
    Abort { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Agree,
    BoxB,
    FoundClaim,
    RequestA,
    BoxA,
    VerifyClaim,
    Settle,
    Abort,
}

impl Body {
    pub fn kind(&self) -> Kind {
        match self {
            Body::Agree { .. } => Kind::Agree,
            Body::BoxB { .. } => Kind::BoxB,
            Body::FoundClaim { .. } => Kind::FoundClaim,
            Body::RequestA {} => Kind::RequestA,
            Body::BoxA { .. } => Kind::BoxA,
            Body::VerifyClaim { .. } => Kind::VerifyClaim,
            Body::Settle { .. } => Kind::Settle,
            Body::Abort { .. } => Kind::Abort,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    #[serde(rename = "v")]
    pub version: u8,
    pub round: u64,
    #[serde(flatten)]
    pub body: Body,
}

impl Message {
    pub fn new(round: u64, body: Body) -> Self {
        Message { version: WIRE_VERSION, round, body }
    }

    pub fn kind(&self) -> Kind {
        self.body.kind()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("malformed frame at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("unsupported wire version {0}")]
    UnsupportedVersion(u64),
    #[error("unknown message kind {0:?}")]
    UnknownKind(String),
}

/// Serializes a message as one LF-terminated line.
pub fn encode_message(msg: &Message) -> Vec<u8> {
    let mut bytes = serde_json::to_vec(msg).expect("messages always serialize");
    bytes.push(b'\n');
    bytes
}

fn byte_offset(input: &[u8], err: &serde_json::Error) -> usize {
    // serde_json reports 1-based line and column
    let (line, col) = (err.line(), err.column());
    let mut offset = 0;
    for (i, l) in input.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + col.saturating_sub(1)).min(input.len());
        }
        offset += l.len() + 1;
    }
    input.len()
}

fn malformed(input: &[u8], err: serde_json::Error) -> WireError {
    WireError::Malformed { offset: byte_offset(input, &err), reason: err.to_string() }
}

/// Parses one frame. A trailing LF is optional.
pub fn decode_message(bytes: &[u8]) -> Result<Message, WireError> {
    let frame = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    let value: serde_json::Value = serde_json::from_slice(frame).map_err(|e| malformed(frame, e))?;
    let obj = value
        .as_object()
        .ok_or_else(|| WireError::Malformed { offset: 0, reason: "frame is not a JSON object".into() })?;
    match obj.get("v").and_then(|v| v.as_u64()) {
        Some(v) if v == WIRE_VERSION as u64 => {}
        Some(v) => return Err(WireError::UnsupportedVersion(v)),
        None => return Err(WireError::Malformed { offset: 0, reason: "missing or non-integer \"v\"".into() }),
    }
    match obj.get("kind").and_then(|k| k.as_str()) {
        Some(k) if KINDS.contains(&k) => {}
        Some(k) => return Err(WireError::UnknownKind(k.to_string())),
        None => return Err(WireError::Malformed { offset: 0, reason: "missing \"kind\"".into() }),
    }
    serde_json::from_slice(frame).map_err(|e| malformed(frame, e))
}

/// Per-round message grammar:
///
/// ```text
/// agree → box_b → ( found_claim → settle
///                 | request_a → box_a → verify_claim → (settle | abort) )
/// ```
///
/// `abort` may also end a session at any point after a violation or
/// transport failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoundGrammar {
    state: GrammarState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
enum GrammarState {
    #[default]
    Idle,
    Agreed,
    BoxSent,
    FoundClaimed,
    Requested,
    BoxASent,
    Claimed,
    Closed,
}

impl RoundGrammar {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds the next message kind. Returns `true` when the kind closes a round.
    pub fn accept(&mut self, kind: Kind) -> Result<bool, String> {
        use GrammarState::*;
        let (next, round_done) = match (self.state, kind) {
            (Closed, k) => return Err(format!("{k:?} after abort")),
            (_, Kind::Abort) => (Closed, true),
            (Idle, Kind::Agree) => (Agreed, false),
            (Agreed, Kind::BoxB) => (BoxSent, false),
            (BoxSent, Kind::FoundClaim) => (FoundClaimed, false),
            (BoxSent, Kind::RequestA) => (Requested, false),
            (Requested, Kind::BoxA) => (BoxASent, false),
            (BoxASent, Kind::VerifyClaim) => (Claimed, false),
            (FoundClaimed | Claimed, Kind::Settle) => (Idle, true),
            (s, k) => return Err(format!("{k:?} is not allowed in state {s:?}")),
        };
        self.state = next;
        Ok(round_done)
    }

    /// True between rounds.
    pub fn at_boundary(&self) -> bool {
        matches!(self.state, GrammarState::Idle | GrammarState::Closed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn samples() -> Vec<Message> {
        vec![
            Message::new(0, Body::Agree { gamma: 8.0 / 9.0, r: 1.0, n_rounds: 10, seed_commitment: "ab12".into() }),
            Message::new(1, Body::BoxB { state_ref: StateRef(7) }),
            Message::new(2, Body::FoundClaim { found: true }),
            Message::new(3, Body::RequestA {}),
            Message::new(4, Body::BoxA { state_ref: StateRef(7) }),
            Message::new(5, Body::VerifyClaim { mismatch: false }),
            Message::new(6, Body::Settle { bob_delta: -1.0 }),
            Message::new(u64::MAX, Body::Abort { reason: "transport closed".into() }),
        ]
    }

    #[test]
    fn every_kind_round_trips() {
        for m in samples() {
            let bytes = encode_message(&m);
            assert_eq!(*bytes.last().unwrap(), b'\n');
            assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 1);
            assert_eq!(decode_message(&bytes).unwrap(), m);
        }
    }

    #[test]
    fn wire_shape() {
        let bytes = encode_message(&Message::new(3, Body::VerifyClaim { mismatch: true }));
        assert_eq!(
            std::str::from_utf8(&bytes).unwrap(),
            "{\"v\":1,\"round\":3,\"kind\":\"verify_claim\",\"payload\":{\"mismatch\":true}}\n"
        );
        let bytes = encode_message(&Message::new(0, Body::RequestA {}));
        assert_eq!(std::str::from_utf8(&bytes).unwrap(), "{\"v\":1,\"round\":0,\"kind\":\"request_a\",\"payload\":{}}\n");
    }

    #[test]
    fn truncated_frame() {
        let bytes = encode_message(&samples()[0]);
        let cut = &bytes[..bytes.len() / 2];
        match decode_message(cut) {
            Err(WireError::Malformed { offset, .. }) => assert!(offset <= cut.len()),
            other => panic!("expected malformed, got {other:?}"),
        }
    }

    #[test]
    fn bad_version_and_kind() {
        let v99 = br#"{"v":99,"round":0,"kind":"settle","payload":{"bob_delta":1.0}}"#;
        assert_eq!(decode_message(v99), Err(WireError::UnsupportedVersion(99)));
        let odd = br#"{"v":1,"round":0,"kind":"teleport","payload":{}}"#;
        assert_eq!(decode_message(odd), Err(WireError::UnknownKind("teleport".into())));
    }

    #[test]
    fn malformed_payload_reports_offset() {
        let bad = br#"{"v":1,"round":0,"kind":"settle","payload":{"bob_delta":"x"}}"#;
        assert!(matches!(decode_message(bad), Err(WireError::Malformed { .. })));
        let garbage = b"{\"v\":1,,}";
        match decode_message(garbage) {
            Err(WireError::Malformed { offset, .. }) => assert_eq!(offset, 7),
            other => panic!("{other:?}"),
        }
        assert!(decode_message(b"[1,2]").is_err());
    }

    #[test]
    fn grammar_paths() {
        let mut g = RoundGrammar::new();
        for k in [Kind::Agree, Kind::BoxB, Kind::FoundClaim] {
            assert_eq!(g.accept(k), Ok(false));
        }
        assert_eq!(g.accept(Kind::Settle), Ok(true));
        assert!(g.at_boundary());
        for k in [Kind::Agree, Kind::BoxB, Kind::RequestA, Kind::BoxA, Kind::VerifyClaim] {
            assert_eq!(g.accept(k), Ok(false));
        }
        assert_eq!(g.accept(Kind::Abort), Ok(true));
        assert!(g.accept(Kind::Agree).is_err());

        let mut g = RoundGrammar::new();
        assert!(g.accept(Kind::BoxB).is_err());
        let mut g = RoundGrammar::new();
        g.accept(Kind::Agree).unwrap();
        g.accept(Kind::BoxB).unwrap();
        g.accept(Kind::FoundClaim).unwrap();
        assert!(g.accept(Kind::BoxA).is_err());
    }

    fn arb_body() -> impl Strategy<Value = Body> {
        prop_oneof![
            (any::<f64>(), any::<f64>(), any::<u64>(), "[0-9a-f]{0,16}").prop_map(|(gamma, r, n_rounds, seed_commitment)| {
                Body::Agree { gamma, r, n_rounds, seed_commitment }
            }),
            any::<u64>().prop_map(|x| Body::BoxB { state_ref: StateRef(x) }),
            any::<bool>().prop_map(|found| Body::FoundClaim { found }),
            Just(Body::RequestA {}),
            any::<u64>().prop_map(|x| Body::BoxA { state_ref: StateRef(x) }),
            any::<bool>().prop_map(|mismatch| Body::VerifyClaim { mismatch }),
            any::<f64>().prop_map(|bob_delta| Body::Settle { bob_delta }),
            ".*".prop_map(|reason| Body::Abort { reason }),
        ]
        .prop_filter("finite floats only", |b| match b {
            Body::Agree { gamma, r, .. } => gamma.is_finite() && r.is_finite(),
            Body::Settle { bob_delta } => bob_delta.is_finite(),
            _ => true,
        })
    }

    proptest! {
        #[test]
        fn encode_decode_identity(round in any::<u64>(), body in arb_body()) {
            let m = Message::new(round, body);
            prop_assert_eq!(decode_message(&encode_message(&m)).unwrap(), m);
        }

        #[test]
        fn decoder_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
            let _ = decode_message(&bytes);
        }
    }
}
