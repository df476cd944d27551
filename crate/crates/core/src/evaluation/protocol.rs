//! Newline-delimited JSON messages exchanged with trainer workers.
//!
//! ```text
//! worker -> {"type":"ready","protocol":1}
//! engine -> {"type":"eval","id":"3-000017","layers":"c3-m2-c5","shortcuts":[[1,3]],"channels":32,"dataset":"usps","regime":"brief","seed":12345}
//! worker -> {"type":"result","id":"3-000017","accuracy":0.91,"matthews":0.9,"params":41234,"status":"ok"}
//! worker -> {"type":"result","id":"3-000017","status":"failed","error":"out of memory"}
//! engine -> {"type":"shutdown"}
//! ```
//!
//! Unknown fields are ignored; unknown message types are violations.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{EvaluationRequest, Regime};
use crate::metrics::{EvaluationResult, EvaluationStatus};

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Outgoing<'a> {
    Eval {
        id: &'a str,
        layers: &'a str,
        shortcuts: Vec<[usize; 2]>,
        channels: usize,
        dataset: &'a str,
        regime: Regime,
        seed: u64,
    },
    Shutdown,
}

/// Encodes an evaluation request as a single line (without the newline).
pub fn encode_request(request: &EvaluationRequest) -> String {
    let message = Outgoing::Eval {
        id: &request.candidate_id,
        layers: &request.layers,
        shortcuts: request.shortcuts.iter().map(|&(s, e)| [s, e]).collect(),
        channels: request.channels,
        dataset: &request.dataset,
        regime: request.regime,
        seed: request.seed,
    };
    serde_json::to_string(&message).expect("request serializes")
}

pub fn encode_shutdown() -> String {
    serde_json::to_string(&Outgoing::Shutdown).expect("shutdown serializes")
}

/// Decodes an `eval` line back into a request, as a worker would.
pub fn decode_request(line: &str) -> Result<EvaluationRequest, String> {
    #[derive(Deserialize)]
    struct Eval {
        id: String,
        layers: String,
        shortcuts: Vec<[usize; 2]>,
        channels: usize,
        dataset: String,
        regime: Regime,
        seed: u64,
    }
    let value: Value = serde_json::from_str(line).map_err(|e| format!("malformed JSON: {e}"))?;
    match value.get("type").and_then(Value::as_str) {
        Some("eval") => {}
        Some(other) => return Err(format!("expected eval message, got `{other}`")),
        None => return Err("message has no type".into()),
    }
    let eval: Eval = serde_json::from_value(value).map_err(|e| format!("invalid eval message: {e}"))?;
    Ok(EvaluationRequest {
        candidate_id: eval.id,
        layers: eval.layers,
        shortcuts: eval.shortcuts.into_iter().map(|[s, e]| (s, e)).collect(),
        channels: eval.channels,
        dataset: eval.dataset,
        regime: eval.regime,
        seed: eval.seed,
    })
}

/// A message received from a worker.
#[derive(Clone, Debug, PartialEq)]
pub enum WorkerMessage {
    Ready { protocol: u64 },
    Result(EvaluationResult),
}

#[derive(Deserialize)]
struct ResultFields {
    id: String,
    status: EvaluationStatus,
    accuracy: Option<f64>,
    matthews: Option<f64>,
    params: Option<u64>,
    error: Option<String>,
}

pub fn decode_worker_line(line: &str) -> Result<WorkerMessage, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("malformed JSON: {e}"))?;
    let kind = value
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| "message has no string `type` field".to_string())?;
    match kind {
        "ready" => {
            let protocol = value
                .get("protocol")
                .and_then(Value::as_u64)
                .ok_or_else(|| "ready message without integer protocol".to_string())?;
            Ok(WorkerMessage::Ready { protocol })
        }
        "result" => {
            let fields: ResultFields =
                serde_json::from_value(value).map_err(|e| format!("invalid result message: {e}"))?;
            match fields.status {
                EvaluationStatus::Ok => {
                    let (Some(accuracy), Some(matthews), Some(params)) =
                        (fields.accuracy, fields.matthews, fields.params)
                    else {
                        return Err("ok result must carry accuracy, matthews and params".into());
                    };
                    if !(0.0..=1.0).contains(&accuracy) || !(-1.0..=1.0).contains(&matthews) {
                        return Err(format!(
                            "metrics out of range: accuracy {accuracy}, matthews {matthews}"
                        ));
                    }
                    Ok(WorkerMessage::Result(EvaluationResult::ok(
                        fields.id, accuracy, matthews, params,
                    )))
                }
                EvaluationStatus::Failed => Ok(WorkerMessage::Result(EvaluationResult::failed(
                    fields.id,
                    fields.error.unwrap_or_else(|| "worker reported failure".into()),
                ))),
            }
        }
        other => Err(format!("unknown message type `{other}`")),
    }
}

/// Encodes a result line as a worker would emit it, in the documented field order.
pub fn encode_result(result: &EvaluationResult) -> String {
    match result.status {
        EvaluationStatus::Ok => format!(
            r#"{{"type":"result","id":{},"accuracy":{},"matthews":{},"params":{},"status":"ok"}}"#,
            json(&result.candidate_id),
            json(&result.accuracy),
            json(&result.matthews),
            result.parameter_count,
        ),
        EvaluationStatus::Failed => format!(
            r#"{{"type":"result","id":{},"status":"failed","error":{}}}"#,
            json(&result.candidate_id),
            json(&result.error.clone().unwrap_or_default()),
        ),
    }
}

fn json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string(value).expect("value serializes")
}

pub fn encode_ready() -> String {
    format!("{{\"type\":\"ready\",\"protocol\":{PROTOCOL_VERSION}}}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request() -> EvaluationRequest {
        EvaluationRequest {
            candidate_id: "abc".into(),
            layers: "c3-m2-c5".into(),
            shortcuts: vec![(1, 3)],
            channels: 32,
            dataset: "usps".into(),
            regime: Regime::Brief,
            seed: 12345,
        }
    }

    #[test]
    fn request_line_is_bit_exact() {
        assert_eq!(
            encode_request(&request()),
            r#"{"type":"eval","id":"abc","layers":"c3-m2-c5","shortcuts":[[1,3]],"channels":32,"dataset":"usps","regime":"brief","seed":12345}"#
        );
        assert_eq!(encode_shutdown(), r#"{"type":"shutdown"}"#);
        assert_eq!(encode_ready(), r#"{"type":"ready","protocol":1}"#);
        assert_eq!(decode_request(&encode_request(&request())).unwrap(), request());
        assert!(decode_request(r#"{"type":"shutdown"}"#).is_err());
    }

    #[test]
    fn decodes_worker_messages() {
        assert_eq!(
            decode_worker_line(r#"{"type":"ready","protocol":1}"#).unwrap(),
            WorkerMessage::Ready { protocol: 1 }
        );
        let ok = decode_worker_line(
            r#"{"type":"result","id":"abc","accuracy":0.5,"matthews":0.25,"params":7,"status":"ok","extra":[1]}"#,
        )
        .unwrap();
        assert_eq!(ok, WorkerMessage::Result(EvaluationResult::ok("abc", 0.5, 0.25, 7)));

        let failed = decode_worker_line(r#"{"type":"result","id":"abc","status":"failed","error":"oom"}"#).unwrap();
        let WorkerMessage::Result(failed) = failed else {
            panic!()
        };
        assert!(failed.is_failed());
        assert_eq!(failed.matthews, -1.0);
        assert_eq!(failed.error.as_deref(), Some("oom"));
    }

    #[test]
    fn rejects_violations() {
        for bad in [
            "not json",
            r#"{"id":"x"}"#,
            r#"{"type":"hello"}"#,
            r#"{"type":"ready"}"#,
            r#"{"type":"result","id":"x","status":"ok"}"#,
            r#"{"type":"result","id":"x","status":"maybe"}"#,
            r#"{"type":"result","id":"x","accuracy":2.0,"matthews":0.1,"params":1,"status":"ok"}"#,
        ] {
            assert!(decode_worker_line(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn result_encoding_round_trips() {
        let ok = EvaluationResult::ok("z", 0.75, 0.5, 99);
        assert_eq!(
            encode_result(&ok),
            r#"{"type":"result","id":"z","accuracy":0.75,"matthews":0.5,"params":99,"status":"ok"}"#
        );
        assert_eq!(
            decode_worker_line(&encode_result(&ok)).unwrap(),
            WorkerMessage::Result(ok)
        );
    }
}
