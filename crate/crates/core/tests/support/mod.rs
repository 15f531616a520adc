//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::PathBuf;

use plan_harvest::corpus::{ranked, ActionInstance, GoldSlot, SlotKind};
use plan_harvest::Plan;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
}

/// Largest number of gold slots any one-to-one assignment of extracted
/// actions can consume, found by exhaustive search.
pub fn max_assignment(gold: &[GoldSlot], extracted: &Plan) -> usize {
    fn search(gold: &[GoldSlot], names: &[&str], used: &mut Vec<bool>) -> usize {
        let Some((first, rest)) = names.split_first() else {
            return 0;
        };
        let mut best = search(gold, rest, used);
        for (i, slot) in gold.iter().enumerate() {
            if !used[i] && slot.members.iter().any(|m| m.name == *first) {
                used[i] = true;
                best = best.max(1 + search(gold, rest, used));
                used[i] = false;
            }
        }
        best
    }
    let names: Vec<&str> = extracted.actions.iter().map(|a| a.name.as_str()).collect();
    search(gold, &names, &mut vec![false; gold.len()])
}

pub const ALPHABET: [&str; 4] = ["a", "b", "c", "d"];

fn bare(name: &str) -> ActionInstance {
    ActionInstance::new(name, Vec::<String>::new())
}

/// Random gold slots (up to `max_slots`) over the four-letter alphabet.
pub fn random_gold<R: Rng>(rng: &mut R, max_slots: usize) -> Vec<GoldSlot> {
    let n = rng.gen_range(0..=max_slots);
    let slots = (0..n)
        .map(|_| match rng.gen_range(0..3) {
            0 => GoldSlot::essential(bare(ALPHABET[rng.gen_range(0..4)])),
            1 => GoldSlot::optional(bare(ALPHABET[rng.gen_range(0..4)])),
            _ => {
                let k = rng.gen_range(2..=3);
                GoldSlot::exclusive(
                    (0..k)
                        .map(|_| bare(ALPHABET[rng.gen_range(0..4)]))
                        .collect(),
                )
            }
        })
        .collect();
    ranked(slots)
}

/// Random gold slots whose member names are pairwise distinct.
pub fn random_distinct_gold<R: Rng>(rng: &mut R, max_slots: usize) -> Vec<GoldSlot> {
    let mut gold = random_gold(rng, max_slots);
    let mut pool: Vec<&str> = ALPHABET.to_vec();
    pool.extend([
        "e", "f", "g", "h", "i", "j", "k", "l", "m", "n", "o", "p", "q", "r",
    ]);
    pool.shuffle(rng);
    let mut names = pool.into_iter();
    for member in gold.iter_mut().flat_map(|s| s.members.iter_mut()) {
        member.name = names
            .next()
            .expect("pool covers 6 slots of up to 3 members")
            .to_string();
    }
    gold
}

pub fn random_plan<R: Rng>(rng: &mut R, max_actions: usize) -> Plan {
    let n = rng.gen_range(0..=max_actions);
    Plan::new(
        (0..n)
            .map(|_| bare(ALPHABET[rng.gen_range(0..4)]))
            .collect(),
    )
}

/// True when no name occurs twice across all members of all slots.
pub fn gold_names_distinct(gold: &[GoldSlot]) -> bool {
    let mut names: Vec<&str> = gold
        .iter()
        .flat_map(|s| s.members.iter().map(|m| m.name.as_str()))
        .collect();
    let total = names.len();
    names.sort_unstable();
    names.dedup();
    names.len() == total
}

pub fn is_exclusive(slot: &GoldSlot) -> bool {
    slot.kind == SlotKind::Exclusive
}

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use plan_harvest::backend::{HttpResponse, Transport, TransportError};
use serde_json::{json, Value};

/// Canned completions keyed by the test text (the last TEXT block of the prompt).
pub fn load_completions(path: &std::path::Path) -> HashMap<String, String> {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn test_text_of(prompt: &str) -> &str {
    let start = prompt.rfind("TEXT\n\n").map(|i| i + 6).unwrap_or(0);
    let end = prompt.rfind("\n\nACTIONS\n").unwrap_or(prompt.len());
    &prompt[start..end]
}

/// In-process stand-in for the completion endpoint.
pub struct FakeServer {
    pub completions: HashMap<String, String>,
    /// The first `fail_first` calls answer HTTP 429.
    pub fail_first: usize,
    pub calls: AtomicUsize,
}

impl FakeServer {
    pub fn new(completions: HashMap<String, String>) -> Self {
        Self {
            completions,
            fail_first: 0,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for FakeServer {
    fn post_json(
        &self,
        _: &str,
        _: &str,
        body: &Value,
        _: Duration,
    ) -> Result<HttpResponse, TransportError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n < self.fail_first {
            return Ok(HttpResponse {
                status: 429,
                body: "{}".into(),
                retry_after: None,
            });
        }
        let prompt = body["prompt"].as_str().unwrap_or_default();
        let text = self
            .completions
            .get(test_text_of(prompt))
            .cloned()
            .unwrap_or_default();
        Ok(HttpResponse {
            status: 200,
            body: json!({"choices": [{"text": text}]}).to_string(),
            retry_after: None,
        })
    }
}

/// Transport that counts calls and always fails.
#[derive(Default)]
pub struct NoNetwork {
    pub calls: AtomicUsize,
}

impl Transport for NoNetwork {
    fn post_json(
        &self,
        _: &str,
        _: &str,
        _: &Value,
        _: Duration,
    ) -> Result<HttpResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Err(TransportError("network access is not allowed here".into()))
    }
}
