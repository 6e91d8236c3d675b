//! Independent reference implementations used as test oracles. None of
//! these call into the library code they check.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Nominal alpha from its pairwise-disagreement definition: observed
/// disagreement sums over ordered value pairs inside each unit (weighted
/// by 1/(m_u - 1)), expected disagreement over all ordered pairs of the
/// pooled pairable values. `units` maps a unit to its list of values.
pub fn alpha_pairwise(units: &BTreeMap<u32, Vec<usize>>) -> Option<f64> {
    let pairable: Vec<&Vec<usize>> = units.values().filter(|v| v.len() >= 2).collect();
    if pairable.len() < 2 {
        return None;
    }
    let pooled: Vec<usize> = pairable.iter().flat_map(|v| v.iter().copied()).collect();
    let n = pooled.len() as f64;

    let mut d_o = 0.0;
    for values in &pairable {
        let m = values.len() as f64;
        let mut disagree = 0.0;
        for (i, a) in values.iter().enumerate() {
            for (j, b) in values.iter().enumerate() {
                if i != j && a != b {
                    disagree += 1.0;
                }
            }
        }
        d_o += disagree / (m - 1.0);
    }
    d_o /= n;

    let mut d_e = 0.0;
    for (i, a) in pooled.iter().enumerate() {
        for (j, b) in pooled.iter().enumerate() {
            if i != j && a != b {
                d_e += 1.0;
            }
        }
    }
    d_e /= n * (n - 1.0);
    Some(if d_e == 0.0 { 1.0 } else { 1.0 - d_o / d_e })
}

/// Direct simulation of the like-tally heuristic: draw a party from
/// `priors`, draw `likes` likes (own party with probability 1 - eps, else
/// a uniform other party), and count the user as correct when the own
/// party is the unique maximum. Returns the fraction of correct users.
pub fn monte_carlo_heuristic_accuracy(priors: &[f64; 5], likes: u32, eps: f64, users: usize, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let total: f64 = priors.iter().sum();
    let mut correct = 0usize;
    for _ in 0..users {
        let mut u = rng.random::<f64>() * total;
        let mut own = 4;
        for (i, p) in priors.iter().enumerate() {
            if u < *p {
                own = i;
                break;
            }
            u -= p;
        }
        let mut tally = [0u32; 5];
        for _ in 0..likes {
            if rng.random::<f64>() < eps {
                let mut other = rng.random_range(0..4);
                if other >= own {
                    other += 1;
                }
                tally[other] += 1;
            } else {
                tally[own] += 1;
            }
        }
        let max = *tally.iter().max().unwrap();
        let leaders = tally.iter().filter(|&&c| c == max).count();
        if likes >= 10 && leaders == 1 && tally[own] == max {
            correct += 1;
        }
    }
    correct as f64 / users as f64
}

/// Probability that majority voting over `k` i.i.d. predictions recovers
/// true class `truth`, when each prediction is correct with probability
/// `acc` and otherwise uniform over the other four classes. Ties are
/// broken by the lowest class index (vote counts equal score sums for
/// one-hot scores). Computed by enumerating all vote compositions.
pub fn majority_vote_accuracy(k: usize, acc: f64, truth: usize) -> f64 {
    let p: Vec<f64> = (0..5).map(|c| if c == truth { acc } else { (1.0 - acc) / 4.0 }).collect();
    let mut fact = vec![1.0f64; k + 1];
    for i in 1..=k {
        fact[i] = fact[i - 1] * i as f64;
    }
    let mut total = 0.0;
    let mut counts = [0usize; 5];
    fn rec(
        c: usize,
        left: usize,
        counts: &mut [usize; 5],
        p: &[f64],
        fact: &[f64],
        k: usize,
        truth: usize,
        total: &mut f64,
    ) {
        if c == 4 {
            counts[4] = left;
            let max = *counts.iter().max().unwrap();
            let winner = counts.iter().position(|&v| v == max).unwrap();
            if winner == truth {
                let mut prob = fact[k];
                for i in 0..5 {
                    prob *= p[i].powi(counts[i] as i32) / fact[counts[i]];
                }
                *total += prob;
            }
            return;
        }
        for v in 0..=left {
            counts[c] = v;
            rec(c + 1, left - v, counts, p, fact, k, truth, total);
        }
    }
    rec(0, k, &mut counts, &p, &fact, k, truth, &mut total);
    total
}

/// Whitespace word count without hashtags, mentions and links, written
/// independently of the library's token rules.
pub fn plain_word_count(text: &str) -> usize {
    text.split_whitespace()
        .filter(|t| {
            let l = t.to_lowercase();
            !(t.starts_with('#')
                || t.starts_with('@')
                || l.starts_with("http://")
                || l.starts_with("https://")
                || l.starts_with("t.co/"))
        })
        .count()
}
