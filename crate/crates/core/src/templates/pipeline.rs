use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::filter::{check_instruction, check_response, DEFAULT_MAX_WORDS};
use super::rouge::rouge_l;
use super::source::{Candidate, GenerationRequest, TemplateSource};
use super::traits::{sample_traits, TraitPools};
use super::{Task, TemplateError, TemplateRecord};
use crate::numkit::RngStream;

pub const DEFAULT_THRESHOLD: f64 = 0.75;
pub const DEFAULT_MAX_REWRITES: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DedupConfig {
    /// A candidate whose best ROUGE-L match exceeds this is rewritten.
    pub threshold: f64,
    pub max_rewrites: usize,
    pub max_words: usize,
    pub seed: u64,
    pub pools: TraitPools,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            threshold: DEFAULT_THRESHOLD,
            max_rewrites: DEFAULT_MAX_REWRITES,
            max_words: DEFAULT_MAX_WORDS,
            seed: 0,
            pools: TraitPools::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupStats {
    pub candidates: usize,
    pub rejected_instruction: usize,
    pub rejected_response: usize,
    pub rewrites: usize,
    /// Still too similar after the last allowed rewrite.
    pub discarded: usize,
    pub exhausted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DedupOutcome {
    pub records: Vec<TemplateRecord>,
    pub stats: DedupStats,
}

fn max_similarity(text: &str, accepted: &[TemplateRecord]) -> f64 {
    accepted.iter().map(|r| rouge_l(text, &r.instruction)).fold(0.0, f64::max)
}

/// Collects up to `target` templates for `task`.
///
/// Each round samples questioner traits, asks the source for a candidate
/// and applies the instruction filter. A candidate more similar than
/// `threshold` to an accepted instruction is sent back for rewriting up to
/// `max_rewrites` times, then dropped. Survivors must pass the response
/// rules. Stops early, with a warning, when the source runs dry.
pub fn dedup_pipeline<S: TemplateSource + ?Sized>(
    source: &mut S,
    task: Task,
    target: usize,
    cfg: &DedupConfig,
) -> Result<DedupOutcome, TemplateError> {
    if !(cfg.threshold > 0.0 && cfg.threshold <= 1.0) {
        return Err(TemplateError::Argument(format!("threshold {} must lie in (0, 1]", cfg.threshold)));
    }
    let mut rng = RngStream::new(cfg.seed);
    let mut accepted: Vec<TemplateRecord> = Vec::new();
    let mut stats = DedupStats::default();
    'rounds: while accepted.len() < target {
        let traits = sample_traits(&cfg.pools, task, &mut rng)?;
        let req = GenerationRequest { task, traits, max_words: cfg.max_words };
        let Some(mut cand) = source.generate(&req)? else {
            stats.exhausted = true;
            break;
        };
        stats.candidates += 1;
        let passes = |c: &Candidate| check_instruction(&c.instruction, task, c.has_options, cfg.max_words);
        if let Err(why) = passes(&cand) {
            debug!("instruction rejected: {why}");
            stats.rejected_instruction += 1;
            continue;
        }
        let mut sim = max_similarity(&cand.instruction, &accepted);
        let mut rewrites = 0;
        while sim > cfg.threshold && rewrites < cfg.max_rewrites {
            let Some(next) = source.rewrite(&req, &cand, sim)? else {
                stats.exhausted = true;
                break 'rounds;
            };
            rewrites += 1;
            stats.rewrites += 1;
            cand = next;
            if let Err(why) = passes(&cand) {
                debug!("rewritten instruction rejected: {why}");
                stats.rejected_instruction += 1;
                continue 'rounds;
            }
            sim = max_similarity(&cand.instruction, &accepted);
        }
        if sim > cfg.threshold {
            stats.discarded += 1;
            continue;
        }
        if let Err(why) = check_response(&cand.response, task, cfg.max_words) {
            debug!("response rejected: {why}");
            stats.rejected_response += 1;
            continue;
        }
        accepted.push(TemplateRecord {
            task,
            instruction: cand.instruction,
            response: cand.response,
            has_options: cand.has_options && task.supports_options(),
            traits: Some(req.traits),
            split: None,
        });
    }
    if accepted.len() < target {
        warn!("template source exhausted: {} of {target} {task} templates accepted", accepted.len());
    }
    Ok(DedupOutcome { records: accepted, stats })
}
