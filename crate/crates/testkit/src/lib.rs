//! Test support shared by the workspace: a recording HTTP fixture server and
//! bundled PubMed XML fixtures.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Instant;

pub mod fixtures;

/// One request as observed by the fixture server.
#[derive(Debug, Clone)]
pub struct RecordedRequest {
    pub method: String,
    pub path: String,
    pub query: HashMap<String, String>,
    pub body: String,
    pub at: Instant,
}

/// Response produced by a fixture handler.
#[derive(Debug, Clone)]
pub struct FixtureResponse {
    pub status: u16,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl FixtureResponse {
    pub fn xml(body: impl Into<String>) -> Self {
        Self::with_type(200, "text/xml", body.into().into_bytes())
    }

    pub fn json(body: impl Into<String>) -> Self {
        Self::with_type(200, "application/json", body.into().into_bytes())
    }

    pub fn status(status: u16) -> Self {
        Self::with_type(status, "text/plain", format!("status {status}").into_bytes())
    }

    pub fn with_type(status: u16, content_type: &str, body: Vec<u8>) -> Self {
        Self {
            status,
            content_type: content_type.to_string(),
            body,
        }
    }
}

type Handler = dyn Fn(&RecordedRequest) -> FixtureResponse + Send + Sync + 'static;

/// A local HTTP server on an ephemeral port. Every request is recorded before
/// the handler runs. The server stops when dropped.
pub struct FixtureServer {
    server: Arc<tiny_http::Server>,
    base_url: String,
    log: Arc<Mutex<Vec<RecordedRequest>>>,
    worker: Option<JoinHandle<()>>,
}

impl FixtureServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(&RecordedRequest) -> FixtureResponse + Send + Sync + 'static,
    {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind fixture server"));
        let port = server
            .server_addr()
            .to_ip()
            .expect("fixture server has an ip address")
            .port();
        let log = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);

        let worker = {
            let server = Arc::clone(&server);
            let log = Arc::clone(&log);
            std::thread::spawn(move || {
                for mut request in server.incoming_requests() {
                    let at = Instant::now();
                    let (path, query) = split_url(request.url());
                    let mut body = String::new();
                    let _ = request.as_reader().read_to_string(&mut body);
                    let recorded = RecordedRequest {
                        method: request.method().to_string(),
                        path,
                        query,
                        body,
                        at,
                    };
                    log.lock().unwrap().push(recorded.clone());
                    let reply = handler(&recorded);
                    let header = tiny_http::Header::from_bytes(
                        &b"Content-Type"[..],
                        reply.content_type.as_bytes(),
                    )
                    .expect("valid header");
                    let response = tiny_http::Response::from_data(reply.body)
                        .with_status_code(reply.status)
                        .with_header(header);
                    let _ = request.respond(response);
                }
            })
        };

        Self {
            server,
            base_url: format!("http://127.0.0.1:{port}"),
            log,
            worker: Some(worker),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url, path)
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.log.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

fn split_url(url: &str) -> (String, HashMap<String, String>) {
    let (path, query) = url.split_once('?').unwrap_or((url, ""));
    let params = url::form_urlencoded::parse(query.as_bytes())
        .into_owned()
        .collect();
    (path.to_string(), params)
}

/// Builds an esearch XML reply for the given ids with the total `count`.
pub fn esearch_reply(ids: &[&str], count: usize) -> String {
    let mut xml = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<eSearchResult><Count>{count}</Count><RetMax>{}</RetMax><IdList>",
        ids.len()
    );
    for id in ids {
        xml.push_str(&format!("<Id>{id}</Id>"));
    }
    xml.push_str("</IdList></eSearchResult>");
    xml
}
