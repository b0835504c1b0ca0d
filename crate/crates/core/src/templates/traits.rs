use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Task, TemplateError};
use crate::numkit::RngStream;

/// Probability of including 3, 2, 1 and 0 trait kinds.
pub const TRAIT_COUNT_PROBS: [f64; 4] = [0.27, 0.45, 0.18, 0.10];
/// Chance that a classification prompt asks for a multiple-choice list.
pub const OPTION_PROBABILITY: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraitKind {
    Personality,
    Motivation,
    Proficiency,
}

impl TraitKind {
    pub const ALL: [TraitKind; 3] = [TraitKind::Personality, TraitKind::Motivation, TraitKind::Proficiency];
}

/// Value pools for each trait kind. Motivations are per task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraitPools {
    pub personalities: Vec<String>,
    pub motivations: BTreeMap<Task, Vec<String>>,
    pub proficiencies: Vec<String>,
}

impl Default for TraitPools {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let mut motivations = BTreeMap::new();
        motivations.insert(
            Task::Cta,
            s(&["checking a clustering result", "labelling cells for a figure", "auditing an atlas annotation"]),
        );
        motivations.insert(
            Task::Dsp,
            s(&["screening candidate compounds", "explaining a relapse", "planning a follow-up assay"]),
        );
        motivations.insert(
            Task::Cpcg,
            s(&["augmenting a rare population", "testing an analysis pipeline", "teaching a class"]),
        );
        TraitPools {
            personalities: s(&["curious", "impatient", "meticulous", "friendly", "skeptical"]),
            motivations,
            proficiencies: s(&["high", "low"]),
        }
    }
}

impl TraitPools {
    /// Newline-separated pool files replace the matching default pool.
    pub fn with_lines(mut self, kind: TraitKind, task: Option<Task>, text: &str) -> Self {
        let v: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect();
        match (kind, task) {
            (TraitKind::Personality, _) => self.personalities = v,
            (TraitKind::Proficiency, _) => self.proficiencies = v,
            (TraitKind::Motivation, Some(t)) => {
                self.motivations.insert(t, v);
            }
            (TraitKind::Motivation, None) => {
                for t in Task::ALL {
                    self.motivations.insert(t, v.clone());
                }
            }
        }
        self
    }

    fn pool(&self, kind: TraitKind, task: Task) -> &[String] {
        match kind {
            TraitKind::Personality => &self.personalities,
            TraitKind::Motivation => self.motivations.get(&task).map_or(&[], Vec::as_slice),
            TraitKind::Proficiency => &self.proficiencies,
        }
    }
}

/// Questioner traits for one prompt.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraitSample {
    /// Included kinds in canonical order.
    pub kinds: Vec<TraitKind>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub personality: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub motivation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub proficiency: Option<String>,
    /// Whether the prompt requests a multiple-choice placeholder.
    #[serde(default)]
    pub wants_options: bool,
}

/// Draws the number of trait kinds from [`TRAIT_COUNT_PROBS`], a uniform
/// subset of that size, a uniform value for each included kind, and the
/// option request for classification tasks.
pub fn sample_traits(pools: &TraitPools, task: Task, rng: &mut RngStream) -> Result<TraitSample, TemplateError> {
    let u = rng.uniform();
    let mut cum = 0.0;
    let mut k = 0;
    for (i, p) in TRAIT_COUNT_PROBS.iter().enumerate() {
        cum += p;
        if u < cum {
            k = 3 - i;
            break;
        }
    }
    let mut kinds = TraitKind::ALL.to_vec();
    kinds.shuffle(rng);
    kinds.truncate(k);
    kinds.sort();
    let mut out = TraitSample { kinds: kinds.clone(), ..Default::default() };
    for kind in kinds {
        let pool = pools.pool(kind, task);
        if pool.is_empty() {
            return Err(TemplateError::Argument(format!("empty {kind:?} pool for {task}")));
        }
        let v = Some(pool[rng.below(pool.len())].clone());
        match kind {
            TraitKind::Personality => out.personality = v,
            TraitKind::Motivation => out.motivation = v,
            TraitKind::Proficiency => out.proficiency = v,
        }
    }
    out.wants_options = task.supports_options() && rng.uniform() < OPTION_PROBABILITY;
    Ok(out)
}
