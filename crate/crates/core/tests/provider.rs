use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use contrastscore::ingest::{load_token_records, write_tokenprobs};
use contrastscore::provider::{
    fetch_pair, mean_divergence, mock_generate, FileProvider, HttpProvider, MockProvider, PromptTemplate,
    ProviderConfig, ProviderError, ProviderKind, TokenProbProvider, WireRequest, WireResponse, WireToken,
};
use contrastscore::{EvaluationInstance, InstanceKey, Role};

fn instance(system: &str, hypothesis: &str) -> EvaluationInstance {
    EvaluationInstance::new(
        InstanceKey::new("d", "1", system),
        "源文本",
        hypothesis,
        None,
        BTreeMap::from([("mqm".to_owned(), -1.0)]),
    )
    .unwrap()
}

fn template() -> PromptTemplate {
    PromptTemplate::for_target_code("en")
}

/// Minimal HTTP/1.1 server answering each request with `respond(body)`.
struct Server {
    url: String,
    hits: Arc<AtomicUsize>,
    requests: Arc<Mutex<Vec<WireRequest>>>,
}

fn serve(respond: impl Fn(usize, &WireRequest) -> (u16, String) + Send + 'static) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/logprobs", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let requests = Arc::new(Mutex::new(Vec::new()));
    let (h, r) = (hits.clone(), requests.clone());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0u8; len];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            let req: WireRequest = serde_json::from_slice(&body).unwrap();
            let n = h.fetch_add(1, Ordering::SeqCst);
            let (status, payload) = respond(n, &req);
            r.lock().unwrap().push(req);
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    Server { url, hits, requests }
}

/// Whitespace tokens with ids from a fixed table and log-probability -0.5 each.
fn wire_for(req: &WireRequest, id_offset: u32) -> String {
    let tokens = req
        .continuation
        .split_whitespace()
        .enumerate()
        .map(|(i, w)| WireToken {
            token_id: w.len() as u32 * 100 + i as u32 + id_offset,
            text: w.to_owned(),
            logprob: -0.5,
            top_k: req.top_k.map(|k| (0..k as u32).collect()),
        })
        .collect();
    serde_json::to_string(&WireResponse {
        tokenizer_id: Some("bpe".into()),
        tokens,
    })
    .unwrap()
}

fn http_config(url: &str, role: Role, cache: Option<&std::path::Path>) -> ProviderConfig {
    let mut c = ProviderConfig::new(ProviderKind::Http, format!("{}-model", role.as_str()), role, 1.0);
    c.endpoint = Some(url.to_owned());
    c.cache_dir = cache.map(Into::into);
    c.retries = 2;
    c.timeout_secs = 5.0;
    c
}

#[test]
fn mock_is_deterministic() {
    assert_eq!(mock_generate(7, 20, 0.4), mock_generate(7, 20, 0.4));
    assert_ne!(mock_generate(7, 20, 0.4), mock_generate(8, 20, 0.4));
    let zero = mock_generate(3, 10, 0.0);
    assert!(zero.prob_pairs().all(|(e, a)| e == a));

    let cfg = ProviderConfig::new(ProviderKind::Mock, "m", Role::Amateur, 1.5);
    let p = MockProvider::new(cfg, 7, 0.3).unwrap();
    let inst = instance("s", "the quick brown fox");
    assert_eq!(
        p.fetch(&inst, &template()).unwrap(),
        p.fetch(&inst, &template()).unwrap()
    );
}

#[test]
fn divergence_grows_with_roughness() {
    let levels = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let means: Vec<f64> = levels
        .iter()
        .map(|&r| {
            (0..1000)
                .map(|s| mean_divergence(&mock_generate(s, 16, r)))
                .sum::<f64>()
                / 1000.0
        })
        .collect();
    assert_eq!(means[0], 0.0);
    assert!(means.windows(2).all(|w| w[0] < w[1]), "{means:?}");
}

#[test]
fn mock_provider_pairs_align() {
    let mk = |role: Role| {
        let mut c = ProviderConfig::new(
            ProviderKind::Mock,
            role.as_str(),
            role,
            ProviderConfig::default_temperature(role),
        );
        c.top_k_capture = Some(5);
        MockProvider::new(c, 1, 0.5).unwrap()
    };
    let (e, a) = (mk(Role::Expert), mk(Role::Amateur));
    let pair = fetch_pair(&e, &a, &instance("s", "a b c d e"), &template()).unwrap();
    assert_eq!(pair.len(), 5);
    assert!(pair
        .expert()
        .tokens()
        .iter()
        .all(|t| t.top_k.as_ref().is_some_and(|h| h.len() <= 5)));
}

#[test]
fn file_provider_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pairs: Vec<_> = (0..5).map(|s| mock_generate(s, 6, 0.5)).collect();
    let path = dir.path().join("tp.jsonl");
    write_tokenprobs(&path, &pairs).unwrap();
    let set = Arc::new(load_token_records(&[path]).unwrap());
    let e = FileProvider::new(set.clone(), Role::Expert);
    let a = FileProvider::new(set, Role::Amateur);
    for p in &pairs {
        let k = p.key();
        let inst = EvaluationInstance::new(k.clone(), "", "x", None, BTreeMap::from([("h".to_owned(), 0.0)])).unwrap();
        assert_eq!(&fetch_pair(&e, &a, &inst, &template()).unwrap(), p);
    }
    let missing = instance("nope", "x");
    assert!(matches!(
        e.fetch(&missing, &template()),
        Err(ProviderError::NotFound { .. })
    ));
}

#[test]
fn http_fetch_and_cache() {
    let server = serve(|_, req| (200, wire_for(req, 0)));
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = http_config(&server.url, Role::Expert, Some(dir.path()));
    cfg.top_k_capture = Some(3);
    let p = HttpProvider::new(cfg.clone()).unwrap();
    let inst = instance("s", "where is the logo");
    let first = p.fetch(&inst, &template()).unwrap();
    assert_eq!(first.len(), 4);
    assert!((first.tokens()[0].prob - (-0.5f64).exp()).abs() < 1e-15);
    assert_eq!(first.tokenizer_id(), "bpe");
    assert_eq!(p.network_requests(), 1);

    let again = p.fetch(&inst, &template()).unwrap();
    assert_eq!(again, first);
    assert_eq!(p.network_requests(), 1);

    // A fresh provider over the same cache directory makes no requests.
    let fresh = HttpProvider::new(cfg).unwrap();
    assert_eq!(fresh.fetch(&inst, &template()).unwrap(), first);
    assert_eq!(fresh.network_requests(), 0);
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);

    let sent = server.requests.lock().unwrap()[0].clone();
    assert_eq!(sent.top_k, Some(3));
    assert_eq!(sent.continuation, "where is the logo");
    assert!(sent.prompt.contains("源文本"));
}

#[test]
fn http_cache_is_transparent() {
    let server = serve(|_, req| (200, wire_for(req, 0)));
    let dir = tempfile::tempdir().unwrap();
    let cached = HttpProvider::new(http_config(&server.url, Role::Amateur, Some(dir.path()))).unwrap();
    let uncached = HttpProvider::new(http_config(&server.url, Role::Amateur, None)).unwrap();
    let inst = instance("s", "one two three");
    assert_eq!(
        cached.fetch(&inst, &template()).unwrap(),
        uncached.fetch(&inst, &template()).unwrap()
    );
    assert_eq!(
        cached.fetch(&inst, &template()).unwrap(),
        uncached.fetch(&inst, &template()).unwrap()
    );
    assert_eq!(uncached.network_requests(), 2);
    assert_eq!(cached.network_requests(), 1);
}

#[test]
fn http_retries_server_errors() {
    let server = serve(|n, req| {
        if n < 2 {
            (503, "busy".into())
        } else {
            (200, wire_for(req, 0))
        }
    });
    let p = HttpProvider::new(http_config(&server.url, Role::Expert, None)).unwrap();
    assert_eq!(p.fetch(&instance("s", "a b"), &template()).unwrap().len(), 2);
    assert_eq!(p.network_requests(), 3);
}

#[test]
fn http_gives_up_after_retry_budget() {
    let server = serve(|_, _| (500, "down".into()));
    let p = HttpProvider::new(http_config(&server.url, Role::Expert, None)).unwrap();
    match p.fetch(&instance("s", "a b"), &template()) {
        Err(ProviderError::BackendError { status: 500, body }) => assert_eq!(body, "down"),
        other => panic!("{other:?}"),
    }
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn http_client_errors_are_not_retried() {
    let server = serve(|_, _| (400, "bad request".into()));
    let p = HttpProvider::new(http_config(&server.url, Role::Expert, None)).unwrap();
    assert!(matches!(
        p.fetch(&instance("s", "a"), &template()),
        Err(ProviderError::BackendError { status: 400, .. })
    ));
    assert_eq!(p.network_requests(), 1);
}

#[test]
fn http_tokenization_drift_across_roles() {
    let server = serve(|_, req| {
        let offset = if req.model.starts_with("amateur") { 1 } else { 0 };
        (200, wire_for(req, offset))
    });
    let dir = tempfile::tempdir().unwrap();
    let e = HttpProvider::new(http_config(&server.url, Role::Expert, Some(dir.path()))).unwrap();
    let a = HttpProvider::new(http_config(&server.url, Role::Amateur, Some(dir.path()))).unwrap();
    let inst = instance("s", "x y z");
    e.fetch(&inst, &template()).unwrap();
    assert!(matches!(
        a.fetch(&inst, &template()),
        Err(ProviderError::TokenizationDrift { .. })
    ));
}

#[test]
fn http_config_is_validated() {
    let c = ProviderConfig::new(ProviderKind::Http, "m", Role::Expert, 1.0);
    assert!(matches!(HttpProvider::new(c), Err(ProviderError::Config(_))));
    let mut c = http_config("http://127.0.0.1:9", Role::Expert, None);
    c.temperature = 0.0;
    assert!(HttpProvider::new(c).is_err());
}

#[test]
fn http_cache_key_depends_on_inputs() {
    let p = HttpProvider::new(http_config("http://127.0.0.1:9", Role::Expert, None)).unwrap();
    let k = InstanceKey::new("d", "1", "s");
    let base = p.cache_key(&k, "prompt", "text");
    assert_eq!(base, p.cache_key(&k, "prompt", "text"));
    assert_ne!(base, p.cache_key(&k, "prompt2", "text"));
    assert_ne!(base, p.cache_key(&InstanceKey::new("d", "2", "s"), "prompt", "text"));
    let mut hot = http_config("http://127.0.0.1:9", Role::Expert, None);
    hot.temperature = 0.5;
    assert_ne!(base, HttpProvider::new(hot).unwrap().cache_key(&k, "prompt", "text"));
}
