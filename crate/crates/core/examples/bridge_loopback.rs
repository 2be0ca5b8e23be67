//! Serves a local model over the bridge protocol on 127.0.0.1 and measures
//! regret through it. Set REGRETMETER_BRIDGE_ADDR to use a remote server
//! instead.

use std::sync::Arc;
use std::time::Duration;

use regretmeter::bridge::{spawn_loopback, BridgeEndpoint, BridgeModel, ADDR_ENV};
use regretmeter::decoding::DecoderSpec;
use regretmeter::fixtures::tiny_pair;
use regretmeter::lm::LanguageModel;
use regretmeter::metrics::{estimate_regret, EstimatorOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (oracle, student) = tiny_pair();
    let addr = match std::env::var(ADDR_ENV) {
        Ok(a) => a,
        Err(_) => spawn_loopback(Arc::new(student.clone()))?,
    };
    let endpoint = BridgeEndpoint::new(addr.clone()).with_timeout(Duration::from_secs(5));
    let remote = BridgeModel::connect(&endpoint, Some(oracle.vocab()))?;
    println!("connected to {addr}: {}", remote.model_id());

    let spec = DecoderSpec::Ancestral { temperature: 1.0 };
    let prompts = vec![vec![0]; 500];
    let opts = EstimatorOptions::with_seed(1);
    let local = estimate_regret(&oracle, &student, &spec, &prompts, 5, &opts)?;
    let bridged = estimate_regret(&oracle, &remote, &spec, &prompts, 5, &opts)?;
    println!("local   R = {:?}", local.r_le_l);
    println!("bridged R = {:?}", bridged.r_le_l);
    println!("identical: {}  cached contexts: {}", local.r_le_l == bridged.r_le_l, remote.cached());
    Ok(())
}
