//! The HTTP adapter against a throwaway in-process server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use xprobe::imaging::ImageTensor;
use xprobe::oracle::{ClassLabel, Classifier, RemoteClassifier};

/// Serves `requests` connections. Each reply scores an image by the mean of
/// its decoded floats, or answers with `status` when it is not 200.
fn serve(requests: usize, status: u16) -> (String, thread::JoinHandle<Vec<serde_json::Value>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for _ in 0..requests {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            assert!(request_line.starts_with("POST /score "), "{request_line}");
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let request: serde_json::Value = serde_json::from_slice(&body).unwrap();
            let reply = if status == 200 {
                let confidences: Vec<f64> = request["images"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|b64| {
                        let bytes = STANDARD.decode(b64.as_str().unwrap()).unwrap();
                        let values: Vec<f32> =
                            bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                        values.iter().map(|v| *v as f64).sum::<f64>() / values.len() as f64
                    })
                    .collect();
                serde_json::json!({ "confidences": confidences }).to_string()
            } else {
                "{\"error\": \"nope\"}".to_string()
            };
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
            seen.push(request);
        }
        seen
    });
    (url, handle)
}

#[test]
fn scores_round_trip_through_the_wire_format() {
    let (url, server) = serve(1, 200);
    let model = RemoteClassifier::new("remote", &url, 3);
    let a = ImageTensor::new(1, 2, 1, vec![0.25, 0.75]).unwrap();
    let b = ImageTensor::new(1, 2, 1, vec![1.0, 0.0]).unwrap();
    let scores = model.score_batch(&[a.clone(), b], ClassLabel(2)).unwrap();
    assert_eq!(scores, vec![0.5, 0.5]);

    let seen = server.join().unwrap();
    assert_eq!(seen[0]["class_id"], 2);
    let first = STANDARD.decode(seen[0]["images"][0].as_str().unwrap()).unwrap();
    assert_eq!(first, a.to_le_bytes());
}

#[test]
fn non_200_is_an_oracle_error() {
    let (url, server) = serve(1, 503);
    let model = RemoteClassifier::new("remote", &url, 2);
    let image = ImageTensor::filled(2, 2, 1, 0.5).unwrap();
    match model.score_batch(&[image], ClassLabel(0)) {
        Err(xprobe::Error::Oracle { model, message }) => {
            assert_eq!(model, "remote");
            assert!(message.contains("503"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    server.join().unwrap();
}

#[test]
fn unreachable_server_is_an_oracle_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let model = RemoteClassifier::new("gone", &url, 2);
    let image = ImageTensor::filled(1, 1, 1, 0.5).unwrap();
    assert!(matches!(model.score_batch(&[image], ClassLabel(0)), Err(xprobe::Error::Oracle { .. })));
    assert_eq!(model.score_batch(&[], ClassLabel(0)).unwrap(), Vec::<f64>::new());
}
