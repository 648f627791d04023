//! HTTP client for a remote completion service.
//!
//! Wire contract: `POST` to the configured URL with body
//! `{"prompt": …, "temperature": …, "max_tokens": …}` and an optional
//! `Authorization: Bearer …` header; a successful response is
//! `{"text": …}`. Non-2xx statuses and transport failures map onto the
//! core generation errors, so the shared retry policy applies unchanged.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use debias_core::generation::{GenerateError, GenerationBackend, GenerationConfig};

use crate::config::Secret;

#[derive(Debug, Clone)]
pub struct RemoteCompletionClient {
    url: String,
    token: Option<Secret>,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    text: String,
}

impl RemoteCompletionClient {
    pub fn new(url: impl Into<String>, token: Option<Secret>) -> Self {
        Self {
            url: url.into(),
            token,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// One agent per call so each request honors the timeout currently in
    /// `config` rather than whatever was configured first.
    fn agent(config: &GenerationConfig) -> ureq::Agent {
        ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            // Keep non-2xx as plain responses; status mapping happens below.
            .http_status_as_error(false)
            .build()
            .new_agent()
    }
}

fn transport_error(error: ureq::Error) -> GenerateError {
    match error {
        ureq::Error::Timeout(_) => GenerateError::Timeout,
        other => GenerateError::Backend {
            status: None,
            message: other.to_string(),
        },
    }
}

impl GenerationBackend for RemoteCompletionClient {
    fn id(&self) -> &str {
        "remote"
    }

    fn complete(&self, prompt: &str, config: &GenerationConfig) -> Result<String, GenerateError> {
        let body = json!({
            "prompt": prompt,
            "temperature": config.temperature,
            "max_tokens": config.max_new_tokens,
        });

        let mut request = Self::agent(config).post(&self.url);
        if let Some(token) = &self.token {
            request = request.header("Authorization", format!("Bearer {}", token.0));
        }
        let mut response = request.send_json(&body).map_err(transport_error)?;

        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let message = response
                .body_mut()
                .read_to_string()
                .unwrap_or_default()
                .trim()
                .to_string();
            return Err(GenerateError::Backend {
                status: Some(status),
                message: if message.is_empty() {
                    format!("backend returned status {status}")
                } else {
                    message
                },
            });
        }

        let parsed: CompletionResponse =
            response
                .body_mut()
                .read_json()
                .map_err(|e| GenerateError::Backend {
                    status: Some(status),
                    message: format!("invalid response body: {e}"),
                })?;
        // An empty completion is returned as-is; the shared retry wrapper
        // treats it as retryable.
        Ok(parsed.text)
    }

    fn pause(&self, delay: Duration) {
        std::thread::sleep(delay);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    use debias_core::generation::generate;

    /// Minimal scripted HTTP/1.1 server: serves the given (status, body)
    /// responses in order, one connection each, then exits. Returns the
    /// bound URL and a handle yielding the captured request bodies.
    fn scripted_server(
        responses: Vec<(u16, String)>,
    ) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind test listener");
        let url = format!("http://{}/v1/complete", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let mut captured = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().expect("accept");
                let mut reader = BufReader::new(stream);
                let mut content_length = 0usize;
                let mut line = String::new();
                loop {
                    line.clear();
                    reader.read_line(&mut line).expect("read header line");
                    let header = line.trim_end();
                    if header.is_empty() {
                        break;
                    }
                    if let Some(value) = header
                        .to_ascii_lowercase()
                        .strip_prefix("content-length:")
                        .map(str::trim)
                        .and_then(|v| v.parse().ok())
                    {
                        content_length = value;
                    }
                }
                let mut request_body = vec![0u8; content_length];
                reader.read_exact(&mut request_body).expect("read body");
                captured.push(String::from_utf8_lossy(&request_body).into_owned());

                let reason = match status {
                    200 => "OK",
                    400 => "Bad Request",
                    500 => "Internal Server Error",
                    _ => "Status",
                };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-length: {}\r\nconnection: close\r\ncontent-type: application/json\r\n\r\n{body}",
                    body.len()
                );
                let mut stream = reader.into_inner();
                stream.write_all(response.as_bytes()).expect("write response");
                stream.flush().expect("flush");
            }
            captured
        });
        (url, handle)
    }

    fn test_config() -> GenerationConfig {
        GenerationConfig {
            timeout_ms: 2_000,
            max_retries: 2,
            seed: 7,
            ..GenerationConfig::default()
        }
    }

    #[test]
    fn success_parses_the_text_field_and_sends_the_contract_body() {
        let (url, handle) =
            scripted_server(vec![(200, "{\"text\":\"a kinder sentence\"}".into())]);
        let client = RemoteCompletionClient::new(url, None);
        let config = test_config();
        let text = client.complete("Biased: x\nUnbiased:", &config).unwrap();
        assert_eq!(text, "a kinder sentence");

        let bodies = handle.join().unwrap();
        let sent: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent["prompt"], "Biased: x\nUnbiased:");
        assert_eq!(sent["temperature"], config.temperature);
        assert_eq!(sent["max_tokens"], config.max_new_tokens as u64);
    }

    #[test]
    fn bearer_token_is_attached_when_present() {
        // Capture headers by speaking HTTP manually for one connection.
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/complete", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut headers = Vec::new();
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let header = line.trim_end().to_string();
                if header.is_empty() {
                    break;
                }
                if let Some(v) = header
                    .to_ascii_lowercase()
                    .strip_prefix("content-length:")
                    .map(str::trim)
                    .and_then(|v| v.parse().ok())
                {
                    content_length = v;
                }
                headers.push(header);
            }
            let mut body = vec![0u8; content_length];
            reader.read_exact(&mut body).unwrap();
            let mut stream = reader.into_inner();
            stream
                .write_all(
                    b"HTTP/1.1 200 OK\r\ncontent-length: 13\r\nconnection: close\r\n\r\n{\"text\":\"ok\"}",
                )
                .unwrap();
            headers
        });

        let client = RemoteCompletionClient::new(url, Some(Secret("sesame".into())));
        client.complete("p", &test_config()).unwrap();
        let headers = handle.join().unwrap();
        assert!(
            headers
                .iter()
                .any(|h| h.eq_ignore_ascii_case("authorization: Bearer sesame")),
            "missing bearer header in {headers:?}"
        );
    }

    #[test]
    fn http_500_maps_to_a_retryable_backend_error() {
        let (url, handle) = scripted_server(vec![(500, "overloaded".into())]);
        let client = RemoteCompletionClient::new(url, None);
        let error = client.complete("p", &test_config()).unwrap_err();
        match &error {
            GenerateError::Backend { status, message } => {
                assert_eq!(*status, Some(500));
                assert_eq!(message, "overloaded");
            }
            other => panic!("unexpected error: {other:?}"),
        }
        assert!(error.is_retryable());
        handle.join().unwrap();
    }

    #[test]
    fn http_400_maps_to_a_non_retryable_backend_error() {
        let (url, handle) = scripted_server(vec![(400, "bad prompt".into())]);
        let client = RemoteCompletionClient::new(url, None);
        let error = client.complete("p", &test_config()).unwrap_err();
        assert!(matches!(
            &error,
            GenerateError::Backend {
                status: Some(400),
                ..
            }
        ));
        assert!(!error.is_retryable());
        handle.join().unwrap();
    }

    #[test]
    fn invalid_success_body_is_a_backend_error() {
        let (url, handle) = scripted_server(vec![(200, "{\"wrong\":true}".into())]);
        let client = RemoteCompletionClient::new(url, None);
        let error = client.complete("p", &test_config()).unwrap_err();
        assert!(matches!(
            error,
            GenerateError::Backend {
                status: Some(200),
                ..
            }
        ));
        handle.join().unwrap();
    }

    #[test]
    fn connection_refused_is_a_statusless_backend_error() {
        // Bind then drop to find a port nothing is listening on.
        let port = {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            listener.local_addr().unwrap().port()
        };
        let client = RemoteCompletionClient::new(format!("http://127.0.0.1:{port}/c"), None);
        let error = client.complete("p", &test_config()).unwrap_err();
        match &error {
            GenerateError::Backend { status: None, .. } => {}
            GenerateError::Timeout => {} // some stacks surface refusal as timeout
            other => panic!("unexpected error: {other:?}"),
        }
        assert!(error.is_retryable());
    }

    #[test]
    fn retry_wrapper_recovers_after_two_500s() {
        let (url, handle) = scripted_server(vec![
            (500, "first".into()),
            (500, "second".into()),
            (200, "{\"text\":\"third time lucky\"}".into()),
        ]);
        let client = RemoteCompletionClient::new(url, None);
        let generation = generate(&client, "p", &test_config()).unwrap();
        assert_eq!(generation.text, "third time lucky");
        assert_eq!(generation.attempts, 3);
        assert_eq!(handle.join().unwrap().len(), 3);
    }

    #[test]
    fn slow_server_times_out() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/slow", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            // Accept but never respond; the client's global timeout fires.
            let (stream, _) = listener.accept().unwrap();
            thread::sleep(Duration::from_millis(600));
            drop(stream);
        });
        let client = RemoteCompletionClient::new(url, None);
        let config = GenerationConfig {
            timeout_ms: 150,
            max_retries: 0,
            ..GenerationConfig::default()
        };
        let started = std::time::Instant::now();
        let error = client.complete("p", &config).unwrap_err();
        assert!(matches!(error, GenerateError::Timeout));
        assert!(started.elapsed() < Duration::from_millis(500));
        handle.join().unwrap();
    }
}
