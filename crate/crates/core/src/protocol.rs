//! Newline-delimited JSON scorer protocol.
//!
//! Every frame is one JSON object on one line:
//!
//! ```text
//! {"id": 7, "type": "verify", "payload": {"tokens": ["Paris", "is", "in", "France"], "evidence": ["..."]}}
//! ```
//!
//! A server first sends a `hello` frame (id 0) advertising its protocol version and the
//! request types it supports. Each request is answered by exactly one frame carrying the
//! same id, with either the request's type or `error`. One request is in flight per
//! connection.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::scorers::{MaskedSequence, ScorerBundle, MASK};
use crate::text::{EvidenceSet, TokenSequence};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameType {
    Hello,
    Verify,
    Fluency,
    Saliency,
    ProposeToken,
    ScoreEntities,
    Error,
}

impl FrameType {
    pub const REQUESTS: [FrameType; 5] = [
        FrameType::Verify,
        FrameType::Fluency,
        FrameType::Saliency,
        FrameType::ProposeToken,
        FrameType::ScoreEntities,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FrameType::Hello => "hello",
            FrameType::Verify => "verify",
            FrameType::Fluency => "fluency",
            FrameType::Saliency => "saliency",
            FrameType::ProposeToken => "propose_token",
            FrameType::ScoreEntities => "score_entities",
            FrameType::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub id: u64,
    #[serde(rename = "type")]
    pub kind: FrameType,
    #[serde(default)]
    pub payload: Value,
}

impl Frame {
    pub fn new<P: Serialize>(id: u64, kind: FrameType, payload: &P) -> Self {
        Self {
            id,
            kind,
            payload: serde_json::to_value(payload).expect("payload serializes"),
        }
    }

    pub fn error(id: u64, code: &str, message: impl Into<String>) -> Self {
        Self::new(
            id,
            FrameType::Error,
            &ErrorPayload {
                code: code.to_string(),
                message: message.into(),
            },
        )
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("frame serializes")
    }

    pub fn decode(line: &str) -> Result<Self, String> {
        serde_json::from_str(line.trim_end()).map_err(|e| e.to_string())
    }

    pub fn payload_as<T: DeserializeOwned>(&self) -> Result<T, String> {
        serde_json::from_value(self.payload.clone()).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub protocol_version: u32,
    #[serde(default)]
    pub capabilities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: String,
    pub message: String,
}

/// `verify` and `saliency` requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRequest {
    pub tokens: Vec<String>,
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluencyRequest {
    pub tokens: Vec<String>,
}

/// `masked` holds exactly one [`MASK`] token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposeTokenRequest {
    pub masked: Vec<String>,
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntitiesRequest {
    pub masked: Vec<String>,
    pub evidence: Vec<String>,
    pub candidates: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyResponse {
    pub prob: f64,
    #[serde(default)]
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluencyResponse {
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyResponse {
    pub saliency: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposeTokenResponse {
    pub distribution: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntitiesResponse {
    pub scores: Vec<f64>,
}

/// Server side of the protocol: maps one request frame to one response frame.
pub trait FrameHandler {
    fn hello(&self) -> Hello;
    fn handle(&self, request: &Frame) -> Frame;
}

/// Serves one connection until EOF. Undecodable lines get an `error` frame with id 0.
pub fn serve_connection<R: BufRead, W: Write>(
    handler: &dyn FrameHandler,
    reader: R,
    mut writer: W,
) -> std::io::Result<()> {
    writeln!(writer, "{}", Frame::new(0, FrameType::Hello, &handler.hello()).encode())?;
    writer.flush()?;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match Frame::decode(&line) {
            Ok(req) => handler.handle(&req),
            Err(e) => {
                // salvage the id if the line is at least an object with one
                let id = serde_json::from_str::<Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(Value::as_u64))
                    .unwrap_or(0);
                Frame::error(id, "malformed_frame", e)
            }
        };
        writeln!(writer, "{}", response.encode())?;
        writer.flush()?;
    }
    Ok(())
}

/// Serves the reference scorers. Used for local testing and as a template for model-backed
/// servers.
pub struct ReferenceHandler {
    bundle: ScorerBundle,
}

impl ReferenceHandler {
    pub fn new(bundle: ScorerBundle) -> Self {
        Self { bundle }
    }

    fn evidence(texts: &[String]) -> EvidenceSet {
        EvidenceSet::from_texts(texts, &TokenSequence::default())
    }

    fn dispatch(&self, req: &Frame) -> Result<Frame, (String, String)> {
        let bad = |e: String| ("bad_payload".to_string(), e);
        let model = |e: crate::scorers::ScorerError| ("model_error".to_string(), e.to_string());
        let no_mask = || ("no_mask".to_string(), "masked claim needs exactly one mask".to_string());
        Ok(match req.kind {
            FrameType::Verify => {
                let p: ClaimRequest = req.payload_as().map_err(bad)?;
                let prob = self
                    .bundle
                    .verifier
                    .support_prob(&p.tokens, &Self::evidence(&p.evidence))
                    .map_err(model)?;
                Frame::new(req.id, req.kind, &VerifyResponse { prob, truncated: false })
            }
            FrameType::Fluency => {
                let p: FluencyRequest = req.payload_as().map_err(bad)?;
                let loglik = self.bundle.fluency.pseudo_loglik(&p.tokens).map_err(model)?;
                Frame::new(req.id, req.kind, &FluencyResponse { loglik })
            }
            FrameType::Saliency => {
                let p: ClaimRequest = req.payload_as().map_err(bad)?;
                let saliency = self
                    .bundle
                    .saliency
                    .token_saliency(&p.tokens, &Self::evidence(&p.evidence))
                    .map_err(model)?;
                Frame::new(req.id, req.kind, &SaliencyResponse { saliency })
            }
            FrameType::ProposeToken => {
                let p: ProposeTokenRequest = req.payload_as().map_err(bad)?;
                let masked = MaskedSequence::from_marked(&p.masked).ok_or_else(no_mask)?;
                let d = self
                    .bundle
                    .proposer
                    .token_dist(&masked, &Self::evidence(&p.evidence))
                    .map_err(model)?;
                Frame::new(
                    req.id,
                    req.kind,
                    &ProposeTokenResponse {
                        distribution: d.entries().to_vec(),
                    },
                )
            }
            FrameType::ScoreEntities => {
                let p: ScoreEntitiesRequest = req.payload_as().map_err(bad)?;
                let masked = MaskedSequence::from_marked(&p.masked).ok_or_else(no_mask)?;
                let scores = self
                    .bundle
                    .proposer
                    .entity_scores(&masked, &Self::evidence(&p.evidence), &p.candidates)
                    .map_err(model)?;
                Frame::new(req.id, req.kind, &ScoreEntitiesResponse { scores })
            }
            FrameType::Hello | FrameType::Error => {
                return Err(("bad_type".into(), format!("{} is not a request", req.kind.name())))
            }
        })
    }
}

impl FrameHandler for ReferenceHandler {
    fn hello(&self) -> Hello {
        Hello {
            protocol_version: PROTOCOL_VERSION,
            capabilities: FrameType::REQUESTS.iter().map(|t| t.name().to_string()).collect(),
        }
    }

    fn handle(&self, request: &Frame) -> Frame {
        self.dispatch(request)
            .unwrap_or_else(|(code, msg)| Frame::error(request.id, &code, msg))
    }
}

/// Checks that a server reply to a malformed frame is a well-formed `error` frame.
pub fn check_error_frame(line: &str) -> Result<Frame, String> {
    let frame = Frame::decode(line)?;
    if frame.kind != FrameType::Error {
        return Err(format!("expected an error frame, got {}", frame.kind.name()));
    }
    let p: ErrorPayload = frame.payload_as()?;
    if p.code.is_empty() {
        return Err("error frame without a code".into());
    }
    Ok(frame)
}

/// Deterministic corpus of malformed request lines for server conformance testing. Every
/// line is invalid in some way and must be answered with an `error` frame.
pub fn malformed_frames(seed: u64, n: usize) -> Vec<String> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let words = ["Paris", "is", "in", "France", MASK, "", "ü", "\"", "{", "\\n"];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let id = rng.gen_range(1..1_000_000u64);
        let tok = |rng: &mut rand_chacha::ChaCha8Rng| words[rng.gen_range(0..words.len())].to_string();
        let line = match i % 12 {
            0 => {
                let len = rng.gen_range(1..40);
                (0..len)
                    .map(|_| char::from(rng.gen_range(0x21u8..0x7e)))
                    .filter(|c| *c != '\n')
                    .collect::<String>()
                    + "}"
            }
            1 => format!("[{id}, \"verify\"]"),
            2 => "{\"type\":\"verify\",\"payload\":{\"tokens\":[\"a\"],\"evidence\":[]}}".to_string(),
            3 => format!("{{\"id\":{id},\"type\":\"summon\",\"payload\":{{}}}}"),
            4 => format!("{{\"id\":{id},\"type\":\"verify\",\"payload\":{{\"tokens\":\"{}\"}}}}", tok(&mut rng)),
            5 => format!("{{\"id\":{id},\"type\":\"fluency\",\"payload\":{{\"tokens\":[1,2,3]}}}}"),
            6 => format!(
                "{{\"id\":{id},\"type\":\"propose_token\",\"payload\":{{\"masked\":[\"{}\",\"{}\"],\"evidence\":[]}}}}",
                tok(&mut rng).replace(MASK, "x").replace(['"', '\\'], ""),
                tok(&mut rng).replace(MASK, "y").replace(['"', '\\'], "")
            ),
            7 => format!(
                "{{\"id\":{id},\"type\":\"score_entities\",\"payload\":{{\"masked\":[\"{MASK}\",\"{MASK}\"],\"evidence\":[],\"candidates\":[[\"a\"]]}}}}"
            ),
            8 => format!("{{\"id\":-{id},\"type\":\"verify\",\"payload\":{{}}}}"),
            9 => format!("{{\"id\":{id},\"type\":\"hello\",\"payload\":{{\"protocol_version\":1}}}}"),
            10 => {
                let full = Frame::new(
                    id,
                    FrameType::Saliency,
                    &ClaimRequest {
                        tokens: vec![tok(&mut rng), tok(&mut rng)],
                        evidence: vec![],
                    },
                )
                .encode();
                let cut = rng.gen_range(1..full.len() - 1);
                full[..cut].chars().filter(|c| *c != '\n').collect()
            }
            _ => format!("{{\"id\":{id},\"type\":\"saliency\",\"payload\":null}}"),
        };
        out.push(line);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorers::{reference_bundle, ReferenceConfig};

    fn handler() -> ReferenceHandler {
        let claim = TokenSequence::from_text("Paris is in Germany .");
        let ev = EvidenceSet::from_texts(&["Paris is in France ."], &claim);
        ReferenceHandler::new(reference_bundle(&claim, &ev, &[], &ReferenceConfig::default()))
    }

    fn serve(lines: &[String]) -> Vec<String> {
        let input = lines.join("\n");
        let mut out = Vec::new();
        serve_connection(&handler(), input.as_bytes(), &mut out).unwrap();
        String::from_utf8(out).unwrap().lines().map(String::from).collect()
    }

    #[test]
    fn frame_round_trip() {
        let f = Frame::new(
            3,
            FrameType::Verify,
            &ClaimRequest {
                tokens: vec!["a".into()],
                evidence: vec!["b".into()],
            },
        );
        let line = f.encode();
        assert!(line.contains("\"type\":\"verify\""));
        assert_eq!(Frame::decode(&line).unwrap(), f);
    }

    #[test]
    fn server_sends_hello_then_answers() {
        let req = Frame::new(
            5,
            FrameType::Saliency,
            &ClaimRequest {
                tokens: vec!["Paris".into(), "is".into(), "in".into(), "Germany".into()],
                evidence: vec!["Paris is in France .".into()],
            },
        );
        let out = serve(&[req.encode()]);
        let hello = Frame::decode(&out[0]).unwrap();
        assert_eq!(hello.kind, FrameType::Hello);
        let h: Hello = hello.payload_as().unwrap();
        assert_eq!(h.protocol_version, PROTOCOL_VERSION);
        let resp = Frame::decode(&out[1]).unwrap();
        assert_eq!((resp.id, resp.kind), (5, FrameType::Saliency));
        let s: SaliencyResponse = resp.payload_as().unwrap();
        assert_eq!(s.saliency.len(), 4);
    }

    #[test]
    fn malformed_frames_all_get_error_frames() {
        let bad = malformed_frames(11, 600);
        assert_eq!(bad, malformed_frames(11, 600));
        let out = serve(&bad);
        let replies = &out[1..];
        assert_eq!(replies.len(), bad.iter().filter(|l| !l.trim().is_empty()).count());
        for (req, reply) in bad.iter().zip(replies) {
            check_error_frame(reply).unwrap_or_else(|e| panic!("{req} -> {reply}: {e}"));
        }
    }
}
