use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use factedit_core::protocol::{
    check_error_frame, malformed_frames, serve_connection, Frame, FrameType, Hello, ReferenceHandler, PROTOCOL_VERSION,
};
use factedit_core::scorers::{
    reference_bundle, FluencyModel, Proposer, RemoteScorer, ScorerBundle, ScorerError, Scorers, Verifier,
};
use factedit_core::synth::{background_corpus, planted_errors, reference_config};
use factedit_core::{Sampler, SamplerConfig, TokenSequence};

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn reference() -> (ScorerBundle, factedit_core::synth::SyntheticInstance) {
    let inst = planted_errors(1, 5).remove(0);
    let ev = inst.evidence_set();
    (
        reference_bundle(&inst.claim, &ev, &background_corpus(), &reference_config()),
        inst,
    )
}

/// Serves the reference handler on an ephemeral port for one connection.
fn spawn_reference_server(bundle: ScorerBundle) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        stream.set_nodelay(true).unwrap();
        let handler = ReferenceHandler::new(bundle);
        let reader = BufReader::new(stream.try_clone().unwrap());
        let _ = serve_connection(&handler, reader, stream);
    });
    addr
}

/// One-connection server that sends hello and then answers each request with `reply`.
fn spawn_scripted<F>(reply: F) -> String
where
    F: Fn(&Frame) -> Option<String> + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        stream.set_nodelay(true).unwrap();
        let hello = Hello {
            protocol_version: PROTOCOL_VERSION,
            capabilities: vec!["verify".into()],
        };
        writeln!(stream, "{}", Frame::new(0, FrameType::Hello, &hello).encode()).unwrap();
        let reader = BufReader::new(stream.try_clone().unwrap());
        for line in reader.lines() {
            let Ok(line) = line else { break };
            let req = Frame::decode(&line).unwrap();
            if let Some(out) = reply(&req) {
                if writeln!(stream, "{out}").is_err() {
                    break;
                }
            }
        }
    });
    addr
}

const TIMEOUT: Duration = Duration::from_secs(5);

#[test]
fn remote_scores_match_local_scores() {
    let (bundle, inst) = reference();
    let remote = RemoteScorer::connect(&spawn_reference_server(bundle.clone()), TIMEOUT).unwrap();
    assert!(remote.capabilities().iter().any(|c| c == "score_entities"));
    let ev = inst.evidence_set();
    let claim = inst.claim.tokens();
    assert_eq!(
        remote.support_prob(claim, &ev).unwrap(),
        bundle.verifier.support_prob(claim, &ev).unwrap()
    );
    assert_eq!(
        remote.pseudo_loglik(claim).unwrap(),
        bundle.fluency.pseudo_loglik(claim).unwrap()
    );
    let masked = factedit_core::scorers::MaskedSequence {
        left: claim[..1].to_vec(),
        right: claim[2..].to_vec(),
    };
    let cands = vec![toks("Paris"), toks("Anna Berg")];
    assert_eq!(
        remote.entity_scores(&masked, &ev, &cands).unwrap(),
        bundle.proposer.entity_scores(&masked, &ev, &cands).unwrap()
    );
}

#[test]
fn remote_chain_reproduces_local_chain() {
    let (bundle, inst) = reference();
    let remote = RemoteScorer::connect(&spawn_reference_server(bundle.clone()), TIMEOUT).unwrap();
    let config = SamplerConfig {
        iterations: 10,
        seed: 9,
        ..SamplerConfig::default()
    };
    let evidence = Arc::new(inst.evidence_set());

    let local = Sampler::new(bundle.scorers(), bundle.proposer(), config)
        .run(inst.claim.clone(), evidence.clone())
        .unwrap();
    let scorers = Scorers {
        fluency: &remote,
        verifier: &remote,
        saliency: &remote,
    };
    let over_wire = Sampler::new(scorers, &remote, config)
        .run(inst.claim.clone(), evidence)
        .unwrap();
    assert_eq!(local.trace, over_wire.trace);
    assert_eq!(local.best, over_wire.best);
}

#[test]
fn mismatched_response_id_is_a_protocol_error() {
    let addr = spawn_scripted(|req| {
        Some(Frame::new(req.id + 1, FrameType::Verify, &serde_json::json!({"prob": 0.5})).encode())
    });
    let remote = RemoteScorer::connect(&addr, TIMEOUT).unwrap();
    let ev = factedit_core::EvidenceSet::new(vec![], &TokenSequence::default(), &[]);
    let err = remote.support_prob(&toks("a b"), &ev).unwrap_err();
    assert!(matches!(err, ScorerError::Protocol(_)), "{err:?}");
    // the connection is not reused after ids desynchronize
    assert!(remote.support_prob(&toks("a b"), &ev).is_err());
}

#[test]
fn silent_server_times_out() {
    let addr = spawn_scripted(|_| None);
    let remote = RemoteScorer::connect(&addr, Duration::from_millis(200)).unwrap();
    let ev = factedit_core::EvidenceSet::new(vec![], &TokenSequence::default(), &[]);
    let err = remote.support_prob(&toks("a"), &ev).unwrap_err();
    assert_eq!(err, ScorerError::Timeout(200));
}

#[test]
fn error_frame_is_a_remote_failure() {
    let addr = spawn_scripted(|req| Some(Frame::error(req.id, "model_error", "out of memory").encode()));
    let remote = RemoteScorer::connect(&addr, TIMEOUT).unwrap();
    let ev = factedit_core::EvidenceSet::new(vec![], &TokenSequence::default(), &[]);
    match remote.support_prob(&toks("a"), &ev) {
        Err(ScorerError::RemoteFailure(m)) => assert!(m.contains("out of memory")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn out_of_range_values_are_rejected() {
    let addr =
        spawn_scripted(|req| Some(Frame::new(req.id, FrameType::Verify, &serde_json::json!({"prob": 1.5})).encode()));
    let remote = RemoteScorer::connect(&addr, TIMEOUT).unwrap();
    let ev = factedit_core::EvidenceSet::new(vec![], &TokenSequence::default(), &[]);
    assert!(matches!(
        remote.support_prob(&toks("a"), &ev),
        Err(ScorerError::Protocol(_))
    ));
}

#[test]
fn wrong_protocol_version_fails_handshake() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let hello = Hello {
            protocol_version: PROTOCOL_VERSION + 1,
            capabilities: vec![],
        };
        writeln!(stream, "{}", Frame::new(0, FrameType::Hello, &hello).encode()).unwrap();
        thread::sleep(Duration::from_millis(200));
    });
    assert!(matches!(
        RemoteScorer::connect(&addr, TIMEOUT),
        Err(ScorerError::Protocol(_))
    ));
}

#[test]
fn reference_server_answers_malformed_frames_over_tcp() {
    let (bundle, _) = reference();
    let addr = spawn_reference_server(bundle);
    let mut stream = TcpStream::connect(&addr).unwrap();
    stream.set_read_timeout(Some(TIMEOUT)).unwrap();
    stream.set_nodelay(true).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    assert_eq!(Frame::decode(&line).unwrap().kind, FrameType::Hello);
    for bad in malformed_frames(11, 500) {
        writeln!(stream, "{bad}").unwrap();
        line.clear();
        reader.read_line(&mut line).unwrap();
        check_error_frame(&line).unwrap_or_else(|e| panic!("{bad:?} -> {line:?}: {e}"));
    }
}
