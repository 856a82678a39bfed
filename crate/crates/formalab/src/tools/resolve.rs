//! Fuzzy symbol resolution: normalized edit distance over suffix-qualified
//! names, with namespace hints applied as score bonuses.

use serde::Serialize;

use super::SymbolIndex;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub name: String,
    pub signature: String,
    pub score: f64,
}

/// Classic Levenshtein distance over unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = if ca == cb { 0 } else { 1 };
            curr[j + 1] = (prev[j] + sub).min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Similarity in [0, 1]: 1 for identical strings.
fn similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - edit_distance(a, b) as f64 / longest as f64
}

const HINT_BONUS: f64 = 0.15;

/// Score one candidate: the best similarity between the token and any
/// suffix qualification of the candidate (full name, then progressively
/// shorter dotted suffixes), plus a bonus when a namespace hint matches
/// one of the candidate's namespace components.
pub fn score(candidate: &str, token: &str, hints: &[String]) -> f64 {
    let components: Vec<&str> = candidate.split('.').collect();
    let mut best = similarity(candidate, token);
    for start in 1..components.len() {
        let suffix = components[start..].join(".");
        best = best.max(similarity(&suffix, token));
    }
    let namespace = &components[..components.len().saturating_sub(1)];
    let hint_hit = hints.iter().any(|h| namespace.iter().any(|c| c == h));
    if hint_hit {
        best += HINT_BONUS;
    }
    best
}

/// Rank index entries against a token; at most `top_k` results, best first,
/// ties broken by name for determinism.
pub fn rank(index: &SymbolIndex, token: &str, hints: &[String], top_k: usize) -> Vec<Candidate> {
    let mut scored: Vec<Candidate> = index
        .entries()
        .iter()
        .map(|e| Candidate {
            name: e.name.clone(),
            signature: e.signature.clone(),
            score: score(&e.name, token, hints),
        })
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.name.cmp(&b.name))
    });
    scored.truncate(top_k);
    scored
}
