//! Reporting helpers for the acceptance suite.
//!
//! The suite itself lives in `tests/acceptance.rs` and runs with
//! `cargo test -p causal-gym-acceptance`. Each check prints one line:
//!
//! ```text
//! PASS c3b: offpolicy - confounded = 0.3365 (12.1 combined SE, need > 3)
//! ```

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(id: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            pass,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.id, self.detail)
    }
}

/// `|a - b|` in units of the combined standard error of two independent estimates.
pub fn combined_sigmas(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    let se = se_a.hypot(se_b);
    if se == 0.0 {
        if a == b {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a - b).abs() / se
    }
}

/// Outcome of running a per-seed check until at least `needed` of the seeds
/// pass or that can no longer happen.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedVote<T> {
    pub needed: usize,
    pub total: usize,
    pub results: Vec<(u64, bool, T)>,
}

impl<T> SeedVote<T> {
    pub fn passes(&self) -> usize {
        self.results.iter().filter(|r| r.1).count()
    }

    pub fn pass(&self) -> bool {
        self.passes() >= self.needed
    }
}

pub fn vote<T>(seeds: &[u64], needed: usize, mut run: impl FnMut(u64) -> (bool, T)) -> SeedVote<T> {
    let mut results = Vec::new();
    for (i, &seed) in seeds.iter().enumerate() {
        let passes = results.iter().filter(|r: &&(u64, bool, T)| r.1).count();
        let remaining = seeds.len() - i;
        if passes >= needed || passes + remaining < needed {
            break;
        }
        let (ok, info) = run(seed);
        results.push((seed, ok, info));
    }
    SeedVote {
        needed,
        total: seeds.len(),
        results,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display() {
        assert_eq!(Check::new("c1", true, "ok").to_string(), "PASS c1: ok");
        assert_eq!(Check::new("c2", false, "no").to_string(), "FAIL c2: no");
    }

    #[test]
    fn sigmas() {
        assert_eq!(combined_sigmas(1.0, 0.3, 0.5, 0.4), 1.0);
        assert_eq!(combined_sigmas(1.0, 0.0, 1.0, 0.0), 0.0);
        assert!(combined_sigmas(1.0, 0.0, 0.9, 0.0).is_infinite());
    }

    #[test]
    fn vote_stops_once_decided() {
        let mut calls = Vec::new();
        let v = vote(&[1, 2, 3], 2, |s| {
            calls.push(s);
            (true, ())
        });
        assert!(v.pass());
        assert_eq!(calls, vec![1, 2]);

        calls.clear();
        let v = vote(&[1, 2, 3], 2, |s| {
            calls.push(s);
            (false, ())
        });
        assert!(!v.pass());
        assert_eq!(calls, vec![1, 2]);

        let v = vote(&[1, 2, 3], 2, |s| (s != 2, ()));
        assert_eq!((v.passes(), v.results.len()), (2, 3));
    }
}
