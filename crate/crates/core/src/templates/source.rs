use std::collections::{BTreeMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use log::debug;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Task, TemplateError, TemplateRecord, TraitSample};

/// One instruction-response pair proposed by a source.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub instruction: String,
    pub response: String,
    /// Whether the instruction is meant to carry `{option}`.
    #[serde(default)]
    pub has_options: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub task: Task,
    pub traits: TraitSample,
    pub max_words: usize,
}

/// Supplier of candidate templates. `Ok(None)` means the source is
/// exhausted.
pub trait TemplateSource {
    fn generate(&mut self, req: &GenerationRequest) -> Result<Option<Candidate>, TemplateError>;

    /// A reworded version of `previous`, whose best ROUGE-L match against
    /// accepted instructions was `similarity`.
    fn rewrite(
        &mut self,
        req: &GenerationRequest,
        previous: &Candidate,
        similarity: f64,
    ) -> Result<Option<Candidate>, TemplateError>;
}

/// Offline source replaying a fixed corpus in order, one queue per task.
/// A rewrite request consumes the next queued candidate of the task.
#[derive(Clone, Debug, Default)]
pub struct CannedSource {
    queues: BTreeMap<Task, VecDeque<Candidate>>,
}

impl CannedSource {
    pub fn new(records: Vec<TemplateRecord>) -> Self {
        let mut queues: BTreeMap<Task, VecDeque<Candidate>> = BTreeMap::new();
        for r in records {
            queues.entry(r.task).or_default().push_back(Candidate {
                instruction: r.instruction,
                response: r.response,
                has_options: r.has_options,
            });
        }
        CannedSource { queues }
    }

    pub fn remaining(&self, task: Task) -> usize {
        self.queues.get(&task).map_or(0, VecDeque::len)
    }

    fn next(&mut self, task: Task) -> Option<Candidate> {
        self.queues.get_mut(&task).and_then(VecDeque::pop_front)
    }
}

impl TemplateSource for CannedSource {
    fn generate(&mut self, req: &GenerationRequest) -> Result<Option<Candidate>, TemplateError> {
        Ok(self.next(req.task))
    }

    fn rewrite(&mut self, req: &GenerationRequest, _: &Candidate, _: f64) -> Result<Option<Candidate>, TemplateError> {
        Ok(self.next(req.task))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpSourceConfig {
    pub endpoint: String,
    /// Environment variable holding a bearer token, if any.
    pub token_env: Option<String>,
    pub timeout_secs: u64,
    /// Every exchange is appended here as one JSON line.
    pub log_path: Option<PathBuf>,
}

/// Client for an external text generator.
///
/// Each call POSTs `{mode, task, traits, has_options, required_placeholders,
/// max_words, previous?, similarity?}` and expects `{instruction, response}`
/// back; status 204 signals exhaustion.
pub struct HttpSource {
    agent: ureq::Agent,
    cfg: HttpSourceConfig,
    token: Option<String>,
    log: Option<File>,
}

impl HttpSource {
    pub fn new(cfg: HttpSourceConfig) -> Result<Self, TemplateError> {
        let token = match &cfg.token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                TemplateError::Argument(format!("environment variable {var} with the source token is not set"))
            })?),
            None => None,
        };
        let log = match &cfg.log_path {
            Some(p) => Some(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(|source| TemplateError::Io { path: p.clone(), source })?,
            ),
            None => None,
        };
        let agent = ureq::Agent::new_with_config(
            ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
                .http_status_as_error(false)
                .build(),
        );
        Ok(HttpSource { agent, cfg, token, log })
    }

    fn call(&mut self, body: serde_json::Value) -> Result<Option<Candidate>, TemplateError> {
        let has_options = body["has_options"].as_bool().unwrap_or(false);
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let outcome = req.send_json(&body).map_err(|e| e.to_string()).and_then(|mut resp| {
            let status = resp.status().as_u16();
            let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
            Ok((status, text))
        });
        if let Some(log) = &mut self.log {
            let entry = match &outcome {
                Ok((status, text)) => json!({"request": body, "status": status, "response": text}),
                Err(e) => json!({"request": body, "error": e}),
            };
            writeln!(log, "{entry}").map_err(|source| TemplateError::Io {
                path: self.cfg.log_path.clone().unwrap_or_default(),
                source,
            })?;
        }
        let (status, text) = outcome.map_err(TemplateError::Source)?;
        debug!("template source answered {status}");
        match status {
            204 => Ok(None),
            200..=299 => {
                #[derive(Deserialize)]
                struct Reply {
                    instruction: String,
                    response: String,
                }
                let r: Reply =
                    serde_json::from_str(&text).map_err(|e| TemplateError::Source(format!("bad reply: {e}")))?;
                Ok(Some(Candidate { instruction: r.instruction, response: r.response, has_options }))
            }
            s => Err(TemplateError::Source(format!("HTTP {s}: {text}"))),
        }
    }

    fn body(req: &GenerationRequest, mode: &str) -> serde_json::Value {
        let has_options = req.task.supports_options() && req.traits.wants_options;
        json!({
            "mode": mode,
            "task": req.task,
            "traits": req.traits,
            "has_options": has_options,
            "required_placeholders": req.task.required_placeholders(),
            "max_words": req.max_words,
        })
    }
}

impl TemplateSource for HttpSource {
    fn generate(&mut self, req: &GenerationRequest) -> Result<Option<Candidate>, TemplateError> {
        self.call(Self::body(req, "generate"))
    }

    fn rewrite(
        &mut self,
        req: &GenerationRequest,
        previous: &Candidate,
        similarity: f64,
    ) -> Result<Option<Candidate>, TemplateError> {
        let mut body = Self::body(req, "rewrite");
        body["previous"] = json!(previous);
        body["similarity"] = json!(similarity);
        self.call(body)
    }
}
