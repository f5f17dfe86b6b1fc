use std::thread;
use std::time::Duration;

use monoforge::translate::{BackendError, HttpBackend, MtBackend, WireRequest, WireResponse};
use tiny_http::{Header, Response, Server};

/// Serves scripted replies, one per request, then shuts down. Successful
/// replies upper-case the sentences.
fn serve(script: Vec<u16>) -> (String, thread::JoinHandle<Vec<WireRequest>>) {
    let server = Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}/translate", server.server_addr().to_ip().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for status in script {
            let mut req = server.recv().unwrap();
            let body: WireRequest = serde_json::from_reader(req.as_reader()).unwrap();
            let reply = match status {
                200 => serde_json::to_string(&WireResponse {
                    translations: body.sentences.iter().map(|s| s.to_uppercase()).collect(),
                })
                .unwrap(),
                // Valid status, malformed body.
                0 => "{\"nope\": 1}".to_string(),
                _ => String::new(),
            };
            seen.push(body);
            let header = Header::from_bytes("Content-Type", "application/json").unwrap();
            let code = if status == 0 { 200 } else { status };
            req.respond(Response::from_string(reply).with_status_code(code).with_header(header)).unwrap();
        }
        seen
    });
    (url, handle)
}

fn request() -> WireRequest {
    WireRequest {
        src: "en".into(),
        tgt: "hi".into(),
        beam: 5,
        sentences: vec!["one.".into(), "two words.".into()],
    }
}

#[test]
fn posts_json_and_reads_translations() {
    let (url, server) = serve(vec![200]);
    let backend = HttpBackend::new(&url, Duration::from_secs(10));
    assert_eq!(backend.translate(&request()).unwrap(), vec!["ONE.", "TWO WORDS."]);
    assert_eq!(server.join().unwrap(), vec![request()]);
}

#[test]
fn status_codes_map_to_error_kinds() {
    let (url, server) = serve(vec![503, 429, 400, 0]);
    let backend = HttpBackend::new(&url, Duration::from_secs(10));
    assert!(matches!(backend.translate(&request()), Err(BackendError::Transient(_))));
    assert!(matches!(backend.translate(&request()), Err(BackendError::Transient(_))));
    assert!(matches!(backend.translate(&request()), Err(BackendError::Protocol(_))));
    assert!(matches!(backend.translate(&request()), Err(BackendError::Protocol(_))));
    server.join().unwrap();
}

#[test]
fn unreachable_endpoint_is_transient() {
    // Bind and drop to get a port nobody listens on.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let backend = HttpBackend::new(&format!("http://127.0.0.1:{port}/"), Duration::from_secs(2));
    assert!(matches!(backend.translate(&request()), Err(BackendError::Transient(_))));
}
