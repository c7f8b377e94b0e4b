//! Brute-force reference implementations for the acceptance suite.
//!
//! These deliberately share no code with the metric implementations: the
//! ranking metrics are checked by enumerating every tie-breaking
//! permutation and every correct/wrong pair in integer arithmetic.

use itertools::Itertools;
use num::{BigInt, BigRational};
use rand::Rng;

use cbu_core::metrics::ScoredEntry;
use cbu_core::model::Label;

fn ratio(numer: i64, denom: i64) -> BigRational {
    BigRational::new(BigInt::from(numer), BigInt::from(denom))
}

/// A random labeled pool: 2..=9 integer-scored model candidates (ties are
/// frequent by construction) plus an optional human-written entry.
pub fn random_pool(rng: &mut impl Rng) -> Vec<ScoredEntry> {
    let non_human = rng.gen_range(2..=9usize);
    let mut pool = Vec::with_capacity(non_human + 1);
    for i in 0..non_human {
        pool.push(ScoredEntry {
            candidate_id: format!("c{i}"),
            score: f64::from(rng.gen_range(0..=4u8)),
            label: if rng.gen::<bool>() { Label::Correct } else { Label::Wrong },
            is_human: false,
        });
    }
    if rng.gen::<f64>() < 0.4 {
        pool.push(ScoredEntry {
            candidate_id: "human".to_string(),
            score: f64::from(rng.gen_range(0..=4u8)),
            label: Label::Correct,
            is_human: true,
        });
    }
    pool
}

fn factorial(n: usize) -> i64 {
    (1..=n as i64).product()
}

/// Expected Acc@1 and Recall@5 by enumerating all n! tie-breaking
/// permutations (stable sort by descending score breaks ties in
/// permutation order). Feasible for n <= 7.
pub fn oracle_top1_and_recall5(
    entries: &[&ScoredEntry],
) -> (Option<BigRational>, Option<BigRational>) {
    if entries.is_empty() {
        return (None, None);
    }
    let n = entries.len();
    let total_correct = entries.iter().filter(|e| e.label == Label::Correct).count();

    let mut top1_hits = 0i64;
    let mut top5_correct = 0i64;
    for perm in (0..n).permutations(n) {
        let mut order = perm;
        order.sort_by(|&a, &b| entries[b].score.total_cmp(&entries[a].score));
        if entries[order[0]].label == Label::Correct {
            top1_hits += 1;
        }
        top5_correct += order
            .iter()
            .take(5)
            .filter(|&&i| entries[i].label == Label::Correct)
            .count() as i64;
    }

    let permutations = factorial(n);
    let acc = Some(ratio(top1_hits, permutations));
    let recall = if total_correct == 0 {
        None
    } else {
        Some(ratio(top5_correct, permutations * total_correct as i64))
    };
    (acc, recall)
}

/// AUC by direct pair enumeration over the non-human candidates, counting
/// wins twice and ties once.
pub fn oracle_auc(pool: &[ScoredEntry]) -> Option<BigRational> {
    let correct: Vec<&ScoredEntry> = pool
        .iter()
        .filter(|e| !e.is_human && e.label == Label::Correct)
        .collect();
    let wrong: Vec<&ScoredEntry> = pool
        .iter()
        .filter(|e| !e.is_human && e.label == Label::Wrong)
        .collect();
    if correct.is_empty() || wrong.is_empty() {
        return None;
    }
    let mut twice_wins = 0i64;
    for c in &correct {
        for w in &wrong {
            if c.score > w.score {
                twice_wins += 2;
            } else if c.score == w.score {
                twice_wins += 1;
            }
        }
    }
    Some(ratio(twice_wins, 2 * (correct.len() * wrong.len()) as i64))
}

/// Integer-score sums compared cross-multiplied, so means never leave
/// exact arithmetic. Scores from `random_pool` are small integers.
fn integer_score(entry: &ScoredEntry) -> i64 {
    let value = entry.score as i64;
    assert_eq!(value as f64, entry.score, "oracle pools use integer scores");
    value
}

fn win_value(lhs_num: i64, lhs_den: i64, rhs_num: i64, rhs_den: i64) -> BigRational {
    // Compare lhs_num/lhs_den with rhs_num/rhs_den by cross-multiplication.
    let left = lhs_num * rhs_den;
    let right = rhs_num * lhs_den;
    match left.cmp(&right) {
        std::cmp::Ordering::Greater => ratio(1, 1),
        std::cmp::Ordering::Equal => ratio(1, 2),
        std::cmp::Ordering::Less => ratio(0, 1),
    }
}

/// HumanWin: the human score against the mean wrong score.
pub fn oracle_human_win(pool: &[ScoredEntry]) -> Option<BigRational> {
    let human = pool.iter().find(|e| e.is_human)?;
    let wrong: Vec<i64> = pool
        .iter()
        .filter(|e| !e.is_human && e.label == Label::Wrong)
        .map(integer_score)
        .collect();
    if wrong.is_empty() {
        return None;
    }
    Some(win_value(
        integer_score(human),
        1,
        wrong.iter().sum(),
        wrong.len() as i64,
    ))
}

/// MeanWin: mean correct score against mean wrong score (non-human).
pub fn oracle_mean_win(pool: &[ScoredEntry]) -> Option<BigRational> {
    let correct: Vec<i64> = pool
        .iter()
        .filter(|e| !e.is_human && e.label == Label::Correct)
        .map(integer_score)
        .collect();
    let wrong: Vec<i64> = pool
        .iter()
        .filter(|e| !e.is_human && e.label == Label::Wrong)
        .map(integer_score)
        .collect();
    if correct.is_empty() || wrong.is_empty() {
        return None;
    }
    Some(win_value(
        correct.iter().sum(),
        correct.len() as i64,
        wrong.iter().sum(),
        wrong.len() as i64,
    ))
}

/// Spearman via O(n^2) average ranks and a plain Pearson correlation.
pub fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .map(|&v| {
                let less = values.iter().filter(|&&other| other < v).count();
                let equal = values.iter().filter(|&&other| other == v).count();
                less as f64 + (equal as f64 + 1.0) / 2.0
            })
            .collect()
    }
    let rx = ranks(x);
    let ry = ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    cov / (vx.sqrt() * vy.sqrt())
}
