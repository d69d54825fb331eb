use std::collections::BTreeSet;

use tracing::warn;

use crate::locator::Ranking;

fn gold(goldset: &[String]) -> BTreeSet<&str> {
    goldset.iter().map(String::as_str).collect()
}

/// 1-based rank of the first goldset class, if any is ranked.
pub fn first_hit(ranking: &Ranking, goldset: &[String]) -> Option<usize> {
    let g = gold(goldset);
    ranking.iter().position(|r| g.contains(r.path.as_str())).map(|i| i + 1)
}

/// `1 / r` for the first relevant rank `r`; 0 when nothing relevant is ranked.
pub fn reciprocal_rank(ranking: &Ranking, goldset: &[String]) -> f64 {
    first_hit(ranking, goldset).map_or(0.0, |r| 1.0 / r as f64)
}

/// Sum of precision at each relevant rank, divided by the goldset size.
/// Goldset entries missing from the ranking contribute 0.
pub fn average_precision(ranking: &Ranking, goldset: &[String]) -> f64 {
    let g = gold(goldset);
    if g.is_empty() {
        return 0.0;
    }
    let mut found = 0usize;
    let mut total = 0.0;
    for (i, r) in ranking.iter().enumerate() {
        if g.contains(r.path.as_str()) {
            found += 1;
            total += found as f64 / (i + 1) as f64;
        }
    }
    total / g.len() as f64
}

/// Fraction of bugs whose first hit is at rank `k` or better.
pub fn top_at_k(first_hits: &[Option<usize>], k: usize) -> f64 {
    if first_hits.is_empty() {
        warn!("top@k over zero bugs is defined as 0");
        return 0.0;
    }
    let hits = first_hits.iter().filter(|h| h.is_some_and(|r| r <= k)).count();
    hits as f64 / first_hits.len() as f64
}
