//! Client for scorers served over the line protocol in [`crate::protocol`].

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{
    clamp_prob, FluencyModel, MaskedSequence, Proposer, SaliencyModel, ScorerError, TokenDistribution, Verifier,
};
use crate::protocol::{
    ClaimRequest, ErrorPayload, FluencyRequest, FluencyResponse, Frame, FrameType, Hello, ProposeTokenRequest,
    ProposeTokenResponse, SaliencyResponse, ScoreEntitiesRequest, ScoreEntitiesResponse, VerifyResponse,
    PROTOCOL_VERSION,
};
use crate::text::EvidenceSet;

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    // set after a timeout or transport failure; a late reply would desynchronize ids
    broken: bool,
    child: Option<Child>,
}

/// A connection to a scorer server. Calls are serialized; open one connection per chain
/// for parallel use.
pub struct RemoteScorer {
    conn: Mutex<Connection>,
    timeout: Duration,
    hello: Hello,
}

fn io_err(e: impl std::fmt::Display) -> ScorerError {
    ScorerError::Io(e.to_string())
}

fn spawn_reader<R: std::io::Read + Send + 'static>(reader: R) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(reader).lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
    rx
}

impl RemoteScorer {
    /// Connects to `endpoint`: `stdio:<command line>` spawns a child speaking the protocol on
    /// its standard streams; `tcp://host:port` or plain `host:port` opens a socket.
    pub fn connect(endpoint: &str, timeout: Duration) -> Result<Self, ScorerError> {
        if let Some(cmd) = endpoint.strip_prefix("stdio:") {
            let mut parts = cmd.split_whitespace();
            let program = parts
                .next()
                .ok_or_else(|| ScorerError::Io("empty stdio command".into()))?;
            let mut child = Command::new(program)
                .args(parts)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(io_err)?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            Self::handshake(Box::new(stdin), spawn_reader(stdout), Some(child), timeout)
        } else {
            let addr = endpoint.strip_prefix("tcp://").unwrap_or(endpoint);
            let sock = addr
                .to_socket_addrs()
                .map_err(io_err)?
                .next()
                .ok_or_else(|| ScorerError::Io(format!("cannot resolve {addr}")))?;
            let stream = TcpStream::connect_timeout(&sock, timeout).map_err(io_err)?;
            stream.set_nodelay(true).ok();
            let reader = stream.try_clone().map_err(io_err)?;
            Self::handshake(Box::new(stream), spawn_reader(reader), None, timeout)
        }
    }

    fn handshake(
        writer: Box<dyn Write + Send>,
        lines: Receiver<std::io::Result<String>>,
        child: Option<Child>,
        timeout: Duration,
    ) -> Result<Self, ScorerError> {
        let mut conn = Connection {
            writer,
            lines,
            next_id: 1,
            broken: false,
            child,
        };
        let frame = Self::read_frame(&mut conn, timeout)?;
        if frame.kind != FrameType::Hello {
            return Err(ScorerError::Protocol(format!(
                "expected hello, got {}",
                frame.kind.name()
            )));
        }
        let hello: Hello = frame.payload_as().map_err(ScorerError::Protocol)?;
        if hello.protocol_version != PROTOCOL_VERSION {
            return Err(ScorerError::Protocol(format!(
                "server speaks protocol {}, client {}",
                hello.protocol_version, PROTOCOL_VERSION
            )));
        }
        Ok(Self {
            conn: Mutex::new(conn),
            timeout,
            hello,
        })
    }

    pub fn capabilities(&self) -> &[String] {
        &self.hello.capabilities
    }

    fn read_frame(conn: &mut Connection, timeout: Duration) -> Result<Frame, ScorerError> {
        match conn.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Frame::decode(&line).map_err(|e| {
                conn.broken = true;
                ScorerError::Protocol(format!("malformed frame: {e}"))
            }),
            Ok(Err(e)) => {
                conn.broken = true;
                Err(io_err(e))
            }
            Err(RecvTimeoutError::Timeout) => {
                conn.broken = true;
                Err(ScorerError::Timeout(timeout.as_millis() as u64))
            }
            Err(RecvTimeoutError::Disconnected) => {
                conn.broken = true;
                Err(ScorerError::Io("scorer closed the connection".into()))
            }
        }
    }

    fn call<Req: Serialize, Resp: DeserializeOwned>(&self, kind: FrameType, req: &Req) -> Result<Resp, ScorerError> {
        let mut conn = self
            .conn
            .lock()
            .map_err(|_| ScorerError::Io("connection lock poisoned".into()))?;
        if conn.broken {
            return Err(ScorerError::Io("connection unusable after an earlier failure".into()));
        }
        let id = conn.next_id;
        conn.next_id += 1;
        let line = Frame::new(id, kind, req).encode();
        let sent = writeln!(conn.writer, "{line}").and_then(|_| conn.writer.flush());
        if let Err(e) = sent {
            conn.broken = true;
            return Err(io_err(e));
        }
        let frame = Self::read_frame(&mut conn, self.timeout)?;
        if frame.id != id {
            conn.broken = true;
            return Err(ScorerError::Protocol(format!(
                "response id {} does not match request id {id}",
                frame.id
            )));
        }
        match frame.kind {
            FrameType::Error => {
                let p: ErrorPayload = frame.payload_as().map_err(ScorerError::Protocol)?;
                Err(ScorerError::RemoteFailure(format!("{}: {}", p.code, p.message)))
            }
            k if k == kind => frame.payload_as().map_err(ScorerError::Protocol),
            k => Err(ScorerError::Protocol(format!(
                "expected {} response, got {}",
                kind.name(),
                k.name()
            ))),
        }
    }

    fn evidence_texts(evidence: &EvidenceSet) -> Vec<String> {
        evidence.passages().iter().map(|p| p.to_text()).collect()
    }
}

impl Drop for RemoteScorer {
    fn drop(&mut self) {
        if let Ok(conn) = self.conn.get_mut() {
            if let Some(child) = conn.child.as_mut() {
                let _ = child.kill();
                let _ = child.wait();
            }
        }
    }
}

fn finite(x: f64, what: &str) -> Result<f64, ScorerError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ScorerError::Protocol(format!("non-finite {what}")))
    }
}

impl Verifier for RemoteScorer {
    fn support_prob(&self, seq: &[String], evidence: &EvidenceSet) -> Result<f64, ScorerError> {
        let r: VerifyResponse = self.call(
            FrameType::Verify,
            &ClaimRequest {
                tokens: seq.to_vec(),
                evidence: Self::evidence_texts(evidence),
            },
        )?;
        let p = finite(r.prob, "probability")?;
        if !(0.0..=1.0).contains(&p) {
            return Err(ScorerError::Protocol(format!("probability {p} outside [0, 1]")));
        }
        Ok(clamp_prob(p))
    }
}

impl FluencyModel for RemoteScorer {
    fn pseudo_loglik(&self, seq: &[String]) -> Result<f64, ScorerError> {
        let r: FluencyResponse = self.call(FrameType::Fluency, &FluencyRequest { tokens: seq.to_vec() })?;
        let ll = finite(r.loglik, "log-likelihood")?;
        if ll > 0.0 {
            return Err(ScorerError::Protocol(format!("positive log-likelihood {ll}")));
        }
        Ok(ll)
    }
}

impl SaliencyModel for RemoteScorer {
    fn token_saliency(&self, seq: &[String], evidence: &EvidenceSet) -> Result<Vec<f64>, ScorerError> {
        let r: SaliencyResponse = self.call(
            FrameType::Saliency,
            &ClaimRequest {
                tokens: seq.to_vec(),
                evidence: Self::evidence_texts(evidence),
            },
        )?;
        if r.saliency.len() != seq.len() {
            return Err(ScorerError::Protocol(format!(
                "saliency length {} for {} tokens",
                r.saliency.len(),
                seq.len()
            )));
        }
        for &s in &r.saliency {
            if finite(s, "saliency")? < 0.0 {
                return Err(ScorerError::Protocol("negative saliency".into()));
            }
        }
        Ok(r.saliency)
    }
}

impl Proposer for RemoteScorer {
    fn token_dist(&self, masked: &MaskedSequence, evidence: &EvidenceSet) -> Result<TokenDistribution, ScorerError> {
        let r: ProposeTokenResponse = self.call(
            FrameType::ProposeToken,
            &ProposeTokenRequest {
                masked: masked.with_marker(),
                evidence: Self::evidence_texts(evidence),
            },
        )?;
        TokenDistribution::from_weights(r.distribution)
    }

    fn entity_scores(
        &self,
        masked: &MaskedSequence,
        evidence: &EvidenceSet,
        candidates: &[Vec<String>],
    ) -> Result<Vec<f64>, ScorerError> {
        let r: ScoreEntitiesResponse = self.call(
            FrameType::ScoreEntities,
            &ScoreEntitiesRequest {
                masked: masked.with_marker(),
                evidence: Self::evidence_texts(evidence),
                candidates: candidates.to_vec(),
            },
        )?;
        if r.scores.len() != candidates.len() {
            return Err(ScorerError::Protocol(format!(
                "{} scores for {} candidates",
                r.scores.len(),
                candidates.len()
            )));
        }
        for &s in &r.scores {
            finite(s, "entity score")?;
        }
        Ok(r.scores)
    }
}
