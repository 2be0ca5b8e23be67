use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use regretmeter::bridge::{spawn_loopback, BridgeClient, BridgeEndpoint, BridgeError, BridgeModel, PROTOCOL_VERSION};
use regretmeter::decoding::DecoderSpec;
use regretmeter::fixtures;
use regretmeter::lm::LanguageModel;
use regretmeter::metrics::{estimate_regret, EstimatorOptions};
use regretmeter::Error;

fn tiny_oracle() -> Arc<dyn LanguageModel> {
    Arc::new(fixtures::tiny_pair().0)
}

fn hello(v: usize) -> Value {
    json!({"v": PROTOCOL_VERSION, "V": v, "model": "scripted", "bos": 0, "eos": v - 1})
}

/// Serves one connection: answers hello, then replies to each later request
/// with `reply(request)`, or stays silent when it returns `None`.
fn scripted<F>(hello: Value, reply: F) -> String
where
    F: Fn(&Value) -> Option<Value> + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut writer = stream.try_clone().unwrap();
        for line in BufReader::new(stream).lines() {
            let Ok(line) = line else { return };
            let req: Value = serde_json::from_str(&line).unwrap();
            let out = if req["op"] == "hello" { Some(hello.clone()) } else { reply(&req) };
            match out {
                Some(v) => {
                    if writeln!(writer, "{v}").is_err() {
                        return;
                    }
                }
                None => thread::sleep(Duration::from_secs(5)),
            }
        }
    });
    addr
}

fn endpoint(addr: &str) -> BridgeEndpoint {
    BridgeEndpoint::new(addr).with_timeout(Duration::from_millis(500))
}

fn uniform_row(v: usize) -> Vec<f64> {
    vec![-(v as f64).ln(); v]
}

#[test]
fn loopback_matches_local_model_bit_for_bit() {
    let local = fixtures::tiny_pair().0;
    let addr = spawn_loopback(tiny_oracle()).unwrap();
    let remote = BridgeModel::connect(&endpoint(&addr), Some(local.vocab())).unwrap();
    let ctxs: [&[u32]; 4] = [&[0], &[0, 1], &[0, 2, 1], &[0, 1, 1, 2]];
    let got = remote.next_dists(&ctxs).unwrap();
    for (c, d) in ctxs.iter().zip(&got) {
        assert_eq!(d.logprobs(), local.next_dist(c).unwrap().logprobs());
    }
    assert_eq!(remote.model_id(), format!("bridge:{}", local.model_id()));
}

#[test]
fn regret_through_bridge_equals_local_regret() {
    let (o, p) = fixtures::tiny_pair();
    let addr = spawn_loopback(Arc::new(p.clone())).unwrap();
    let remote = BridgeModel::connect(&endpoint(&addr), Some(p.vocab())).unwrap();
    let prompts = vec![vec![0]; 200];
    let opts = EstimatorOptions::with_seed(3);
    let spec = DecoderSpec::Ancestral { temperature: 1.0 };
    let local = estimate_regret(&o, &p, &spec, &prompts, 6, &opts).unwrap();
    let bridged = estimate_regret(&o, &remote, &spec, &prompts, 6, &opts).unwrap();
    assert_eq!(local.r_le_l, bridged.r_le_l);
    assert_eq!(local.stderr_le_l, bridged.stderr_le_l);
}

#[test]
fn batch_replies_keep_request_order_and_are_cached() {
    let addr = spawn_loopback(tiny_oracle()).unwrap();
    let local = fixtures::tiny_pair().0;
    let remote = BridgeModel::connect(&endpoint(&addr), None).unwrap();
    let ctxs: Vec<Vec<u32>> = vec![vec![0, 2], vec![0, 1], vec![0], vec![0, 1]];
    let refs: Vec<&[u32]> = ctxs.iter().map(Vec::as_slice).collect();
    let got = remote.next_dists(&refs).unwrap();
    for (c, d) in refs.iter().zip(&got) {
        assert_eq!(d.logprobs(), local.next_dist(c).unwrap().logprobs());
    }
    assert_eq!(remote.cached(), 3);
    remote.next_dist(&[0, 2]).unwrap();
    assert_eq!(remote.cached(), 3);
}

#[test]
fn unnamed_vocab_uses_id_tokens() {
    let addr = spawn_loopback(tiny_oracle()).unwrap();
    let remote = BridgeModel::connect(&endpoint(&addr), None).unwrap();
    assert_eq!(remote.vocab().token(1), Some("<1>"));
}

#[test]
fn vocab_disagreement_is_rejected() {
    let addr = spawn_loopback(tiny_oracle()).unwrap();
    let other = fixtures::trap::vocab();
    let err = BridgeModel::connect(&endpoint(&addr), Some(&other)).err().unwrap();
    assert!(err.to_string().contains("mismatch"), "{err}");
}

#[test]
fn wrong_row_length_is_rejected() {
    let addr = scripted(hello(4), |_| Some(json!({"v": 1, "logprobs": [uniform_row(3)]})));
    let mut c = BridgeClient::connect(&endpoint(&addr)).unwrap();
    let err = c.remote_next_dists(&[&[0]]).unwrap_err();
    assert!(matches!(err, BridgeError::LengthMismatch { expected: 4, got: 3 }), "{err}");
    assert!(err.to_string().contains("length mismatch"));
}

#[test]
fn wrong_reply_count_is_rejected() {
    let addr = scripted(hello(4), |_| Some(json!({"v": 1, "logprobs": [uniform_row(4)]})));
    let mut c = BridgeClient::connect(&endpoint(&addr)).unwrap();
    let err = c.remote_next_dists(&[&[0], &[0, 1]]).unwrap_err();
    assert!(matches!(err, BridgeError::CountMismatch { expected: 2, got: 1 }), "{err}");
}

#[test]
fn unsupported_version_is_rejected() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut w = stream.try_clone().unwrap();
        let mut line = String::new();
        BufReader::new(stream).read_line(&mut line).unwrap();
        writeln!(w, "{}", json!({"v": 2, "V": 4, "model": "future", "bos": 0, "eos": 3})).unwrap();
    });
    let err = BridgeClient::connect(&endpoint(&addr)).err().unwrap();
    assert!(matches!(err, BridgeError::Version { got: 2 }));
    assert!(err.to_string().contains("unsupported protocol version"));
}

#[test]
fn silent_server_times_out() {
    let addr = scripted(hello(4), |_| None);
    let mut c = BridgeClient::connect(&endpoint(&addr)).unwrap();
    let start = Instant::now();
    let err = c.remote_next_dists(&[&[0]]).unwrap_err();
    assert!(matches!(err, BridgeError::Timeout(_)), "{err}");
    assert!(start.elapsed() < Duration::from_secs(3));
}

#[test]
fn unreachable_address_fails_fast() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let err = BridgeClient::connect(&endpoint(&format!("127.0.0.1:{port}"))).err().unwrap();
    assert!(matches!(err, BridgeError::Connect { .. }), "{err}");
}

#[test]
fn small_drift_is_renormalized_large_drift_rejected() {
    let addr = scripted(hello(2), |req| {
        let n = req["ctxs"].as_array().unwrap().len();
        let row = if n == 1 {
            vec![(0.5f64 + 5e-5).ln(), 0.5f64.ln()]
        } else {
            vec![0.45f64.ln(), 0.45f64.ln()]
        };
        Some(json!({"v": 1, "logprobs": vec![row; n]}))
    });
    let mut c = BridgeClient::connect(&endpoint(&addr)).unwrap();
    let ok = c.remote_next_dists(&[&[0]]).unwrap();
    let s: f64 = ok[0].iter().map(|x| x.exp()).sum();
    assert!((s - 1.0).abs() < 1e-12);
    let err = c.remote_next_dists(&[&[0], &[0, 1]]).unwrap_err();
    assert!(matches!(err, BridgeError::NotNormalized { index: 0, .. }), "{err}");
}

#[test]
fn null_entries_mean_zero_probability() {
    let addr = scripted(hello(3), |_| Some(json!({"v": 1, "logprobs": [[null, 0.5f64.ln(), 0.5f64.ln()]]})));
    let mut c = BridgeClient::connect(&endpoint(&addr)).unwrap();
    let row = c.remote_next_dists(&[&[0]]).unwrap().remove(0);
    assert_eq!(row[0], f64::NEG_INFINITY);
}

#[test]
fn server_errors_are_surfaced() {
    let addr = scripted(hello(4), |_| Some(json!({"v": 1, "error": {"code": "oom", "message": "out of memory"}})));
    let mut c = BridgeClient::connect(&endpoint(&addr)).unwrap();
    let err = c.remote_next_dists(&[&[0]]).unwrap_err();
    assert!(matches!(err, BridgeError::Server { ref code, .. } if code == "oom"), "{err}");
}

#[test]
fn oversized_batch_is_refused_client_side() {
    let addr = spawn_loopback(tiny_oracle()).unwrap();
    let mut c = BridgeClient::connect(&endpoint(&addr).with_max_batch(2)).unwrap();
    let err = c.remote_next_dists(&[&[0], &[0], &[0]]).unwrap_err();
    assert!(matches!(err, BridgeError::BatchTooLarge { got: 3, max: 2 }));
}

#[test]
fn bridge_model_splits_large_batches() {
    let addr = spawn_loopback(tiny_oracle()).unwrap();
    let remote = BridgeModel::connect(&endpoint(&addr).with_max_batch(2), None).unwrap();
    let ctxs: Vec<Vec<u32>> = (0..7).map(|i| std::iter::once(0).chain(std::iter::repeat_n(1, i)).collect()).collect();
    let refs: Vec<&[u32]> = ctxs.iter().map(Vec::as_slice).collect();
    assert_eq!(remote.next_dists(&refs).unwrap().len(), 7);
}

#[test]
fn stdio_transport_talks_to_the_binary() {
    let bin = env!("CARGO_BIN_EXE_regretmeter");
    let ep = BridgeEndpoint::new(format!("stdio:{bin} bridge serve --model builtin:tiny --stdio"))
        .with_timeout(Duration::from_secs(10));
    let remote = BridgeModel::connect(&ep, None).unwrap();
    let local = fixtures::tiny_pair().0;
    assert_eq!(remote.next_dist(&[0, 1]).unwrap().logprobs(), local.next_dist(&[0, 1]).unwrap().logprobs());
}

#[test]
fn bad_context_reaches_client_as_server_error() {
    let addr = spawn_loopback(tiny_oracle()).unwrap();
    let mut c = BridgeClient::connect(&endpoint(&addr)).unwrap();
    let err = c.remote_next_dists(&[&[0, 3]]).unwrap_err();
    assert!(matches!(err, BridgeError::Server { ref code, .. } if code == "bad_context"), "{err}");
}

#[test]
fn bridge_errors_convert_into_crate_errors() {
    let e: Error = BridgeError::NoAddress.into();
    assert!(e.to_string().contains("REGRETMETER_BRIDGE_ADDR"));
}
