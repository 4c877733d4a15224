use super::MetricsError;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::BTreeMap;
use std::io::Read;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    Left,
    Right,
}

/// One two-alternative forced-choice answer.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Vote {
    pub observer: String,
    #[serde(rename = "left_method")]
    pub left: String,
    #[serde(rename = "right_method")]
    pub right: String,
    pub choice: Choice,
}

impl Vote {
    pub fn winner(&self) -> &str {
        match self.choice {
            Choice::Left => &self.left,
            Choice::Right => &self.right,
        }
    }

    pub fn loser(&self) -> &str {
        match self.choice {
            Choice::Left => &self.right,
            Choice::Right => &self.left,
        }
    }
}

/// Parses `observer,left_method,right_method,choice`. Row numbers in
/// errors count the header as row 1.
pub fn read_votes_csv<R: Read>(reader: R) -> Result<Vec<Vote>, MetricsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| MetricsError::BadVote {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let expected = ["observer", "left_method", "right_method", "choice"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(MetricsError::BadVote {
            row: 1,
            message: format!("header must be {}", expected.join(",")),
        });
    }
    let mut votes = Vec::new();
    for (i, rec) in rdr.deserialize::<Vote>().enumerate() {
        let row = i + 2;
        let v = rec.map_err(|e| MetricsError::BadVote {
            row,
            message: e.to_string(),
        })?;
        if v.left == v.right {
            return Err(MetricsError::BadVote {
                row,
                message: format!("method {} compared with itself", v.left),
            });
        }
        if v.observer.is_empty() || v.left.is_empty() || v.right.is_empty() {
            return Err(MetricsError::BadVote {
                row,
                message: "empty field".into(),
            });
        }
        votes.push(v);
    }
    Ok(votes)
}

/// `counts[i][j]`: times method `i` was preferred over method `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceMatrix {
    methods: Vec<String>,
    counts: Vec<Vec<u64>>,
    observers: usize,
}

impl PreferenceMatrix {
    pub fn new(methods: Vec<String>, counts: Vec<Vec<u64>>, observers: usize) -> Result<Self, MetricsError> {
        let n = methods.len();
        if n < 2 {
            return Err(MetricsError::TooFewMethods);
        }
        if counts.len() != n || counts.iter().any(|r| r.len() != n) || (0..n).any(|i| counts[i][i] != 0) {
            return Err(MetricsError::BadVote {
                row: 0,
                message: "count matrix must be square with a zero diagonal".into(),
            });
        }
        Ok(Self {
            methods,
            counts,
            observers,
        })
    }

    /// Methods sorted by name.
    pub fn from_votes(votes: &[Vote]) -> Result<Self, MetricsError> {
        let mut names: Vec<String> = votes.iter().flat_map(|v| [v.left.clone(), v.right.clone()]).collect();
        names.sort();
        names.dedup();
        Self::from_votes_with(names, votes)
    }

    fn from_votes_with(methods: Vec<String>, votes: &[Vote]) -> Result<Self, MetricsError> {
        let index: BTreeMap<&str, usize> = methods.iter().enumerate().map(|(i, m)| (m.as_str(), i)).collect();
        let n = methods.len();
        let mut counts = vec![vec![0u64; n]; n];
        for v in votes {
            counts[index[v.winner()]][index[v.loser()]] += 1;
        }
        let mut obs: Vec<&str> = votes.iter().map(|v| v.observer.as_str()).collect();
        obs.sort();
        obs.dedup();
        let observers = obs.len();
        Self::new(methods, counts, observers)
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn observers(&self) -> usize {
        self.observers
    }

    pub fn presentations(&self, i: usize, j: usize) -> u64 {
        self.counts[i][j] + self.counts[j][i]
    }
}

/// Case V scale values: `z_i = (1/n) sum_j probit(p_ij)` with `p_ii = 0.5`
/// and `p_ij` clipped to `[1/(2N), 1 - 1/(2N)]`, recentered to zero mean.
pub fn thurstone_scores(p: &PreferenceMatrix) -> Result<Vec<f64>, MetricsError> {
    let n = p.methods.len();
    let normal = Normal::standard();
    let mut z = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let total = p.presentations(i, j);
            if total == 0 {
                return Err(MetricsError::MissingPair(p.methods[i].clone(), p.methods[j].clone()));
            }
            let lo = 1.0 / (2.0 * total as f64);
            let pij = (p.counts[i][j] as f64 / total as f64).clamp(lo, 1.0 - lo);
            z[i] += if pij == 0.5 { 0.0 } else { normal.inverse_cdf(pij) };
        }
    }
    for v in z.iter_mut() {
        *v /= n as f64;
    }
    let mean = z.iter().sum::<f64>() / n as f64;
    Ok(z.into_iter().map(|v| v - mean).collect())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StudyResult {
    pub methods: Vec<String>,
    pub z: Vec<f64>,
    /// 95% percentile intervals, absent when no bootstrap was requested.
    pub ci: Option<Vec<(f64, f64)>>,
    pub observers: usize,
    /// Bootstrap replicates that had every pair presented.
    pub replicates: usize,
}

impl StudyResult {
    /// Method indices from highest to lowest scale value.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.z.len()).collect();
        idx.sort_by(|&a, &b| self.z[b].total_cmp(&self.z[a]).then(a.cmp(&b)));
        idx
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn intervals(samples: &[Vec<f64>], n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut col: Vec<f64> = samples.iter().map(|s| s[i]).collect();
            col.sort_by(f64::total_cmp);
            (percentile(&col, 0.025), percentile(&col, 0.975))
        })
        .collect()
}

/// Scale values with bootstrap intervals over observers.
pub fn thurstone_case_v(votes: &[Vote], bootstrap: usize, seed: u64) -> Result<StudyResult, MetricsError> {
    let p = PreferenceMatrix::from_votes(votes)?;
    let z = thurstone_scores(&p)?;
    let mut result = StudyResult {
        methods: p.methods.clone(),
        z,
        ci: None,
        observers: p.observers,
        replicates: 0,
    };
    if bootstrap == 0 {
        return Ok(result);
    }
    let mut by_observer: BTreeMap<&str, Vec<&Vote>> = BTreeMap::new();
    for v in votes {
        by_observer.entry(v.observer.as_str()).or_default().push(v);
    }
    let groups: Vec<Vec<&Vote>> = by_observer.into_values().collect();
    if groups.len() < 2 {
        return thurstone_matrix_bootstrap(&p, bootstrap, seed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(bootstrap);
    for _ in 0..bootstrap {
        let resampled: Vec<Vote> = (0..groups.len())
            .flat_map(|_| groups.choose(&mut rng).unwrap().iter().map(|v| (*v).clone()))
            .collect();
        let m = PreferenceMatrix::from_votes_with(p.methods.clone(), &resampled)?;
        if let Ok(z) = thurstone_scores(&m) {
            samples.push(z);
        }
    }
    result.replicates = samples.len();
    if !samples.is_empty() {
        result.ci = Some(intervals(&samples, p.methods.len()));
    }
    Ok(result)
}

/// Bootstrap from counts alone: each pair's wins are redrawn from a
/// binomial with the observed proportion.
pub fn thurstone_matrix_bootstrap(
    p: &PreferenceMatrix,
    bootstrap: usize,
    seed: u64,
) -> Result<StudyResult, MetricsError> {
    let z = thurstone_scores(p)?;
    let n = p.methods.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(bootstrap);
    for _ in 0..bootstrap {
        let mut counts = vec![vec![0u64; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let total = p.presentations(i, j);
                let prob = p.counts[i][j] as f64 / total as f64;
                let wins = Binomial::new(total, prob).expect("valid binomial").sample(&mut rng);
                counts[i][j] = wins;
                counts[j][i] = total - wins;
            }
        }
        let m = PreferenceMatrix::new(p.methods.clone(), counts, p.observers)?;
        samples.push(thurstone_scores(&m)?);
    }
    Ok(StudyResult {
        methods: p.methods.clone(),
        z,
        ci: (bootstrap > 0).then(|| intervals(&samples, n)),
        observers: p.observers,
        replicates: samples.len(),
    })
}

/// Synthetic votes under the Case V model: every observer judges every
/// unordered pair `per_pair` times, preferring `i` when
/// `s_i + e_i > s_j + e_j` with independent standard normal `e`.
pub fn simulate_probit_votes<R: Rng + ?Sized>(
    methods: &[(&str, f64)],
    observers: usize,
    per_pair: usize,
    rng: &mut R,
) -> Vec<Vote> {
    let mut votes = Vec::new();
    for o in 0..observers {
        for i in 0..methods.len() {
            for j in i + 1..methods.len() {
                for _ in 0..per_pair {
                    let (a, b) = if rng.random::<bool>() { (i, j) } else { (j, i) };
                    let ea: f64 = rng.sample(StandardNormal);
                    let eb: f64 = rng.sample(StandardNormal);
                    let choice = if methods[a].1 + ea > methods[b].1 + eb {
                        Choice::Left
                    } else {
                        Choice::Right
                    };
                    votes.push(Vote {
                        observer: format!("obs{o:04}"),
                        left: methods[a].0.to_string(),
                        right: methods[b].0.to_string(),
                        choice,
                    });
                }
            }
        }
    }
    votes
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent quantile: Simpson-integrated normal pdf, inverted by bisection.
    fn probit_oracle(p: f64) -> f64 {
        let cdf = |x: f64| {
            let n = 20_000;
            let h = x / n as f64;
            let pdf = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let s: f64 = (0..=n)
                .map(|k| {
                    let w = if k == 0 || k == n {
                        1.0
                    } else if k % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    w * pdf(k as f64 * h)
                })
                .sum();
            0.5 + s * h / 3.0
        };
        let (mut lo, mut hi) = (-8.0, 8.0);
        for _ in 0..80 {
            let mid = (lo + hi) / 2.0;
            if cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo + hi) / 2.0
    }

    fn pair_votes(a: &str, b: &str, a_wins: usize, b_wins: usize) -> Vec<Vote> {
        let mk = |i: usize, choice| Vote {
            observer: format!("o{i}"),
            left: a.into(),
            right: b.into(),
            choice,
        };
        (0..a_wins)
            .map(|i| mk(i, Choice::Left))
            .chain((0..b_wins).map(|i| mk(a_wins + i, Choice::Right)))
            .collect()
    }

    #[test]
    fn two_method_gap() {
        let votes = pair_votes("ours", "base", 841, 159);
        let r = thurstone_case_v(&votes, 0, 0).unwrap();
        let gap = r.z[r.methods.iter().position(|m| m == "ours").unwrap()]
            - r.z[r.methods.iter().position(|m| m == "base").unwrap()];
        assert!((gap - probit_oracle(0.841)).abs() < 1e-6);
        assert!((gap - 0.9986).abs() < 1e-3);
        assert!(r.ci.is_none());
    }

    #[test]
    fn symmetric_votes_zero() {
        let mut votes = Vec::new();
        for (a, b) in [("a", "b"), ("a", "c"), ("b", "c")] {
            votes.extend(pair_votes(a, b, 5, 5));
        }
        let z = thurstone_case_v(&votes, 0, 0).unwrap().z;
        assert!(z.iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn unanimous_pairs_are_finite_and_missing_pairs_fail() {
        let r = thurstone_case_v(&pair_votes("a", "b", 10, 0), 0, 0).unwrap();
        assert!(r.z.iter().all(|v| v.is_finite()));
        let mut votes = pair_votes("a", "b", 3, 2);
        votes.extend(pair_votes("b", "c", 3, 2));
        assert!(matches!(
            thurstone_case_v(&votes, 0, 0),
            Err(MetricsError::MissingPair(..))
        ));
    }

    #[test]
    fn relabeling_permutes_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let votes = simulate_probit_votes(&[("a", 0.0), ("b", 0.4), ("c", 0.9)], 30, 1, &mut rng);
        let renamed: Vec<Vote> = votes
            .iter()
            .map(|v| {
                let f = |m: &str| match m {
                    "a" => "z".to_string(),
                    "b" => "y".to_string(),
                    _ => "x".to_string(),
                };
                Vote {
                    left: f(&v.left),
                    right: f(&v.right),
                    ..v.clone()
                }
            })
            .collect();
        let r1 = thurstone_case_v(&votes, 0, 0).unwrap();
        let r2 = thurstone_case_v(&renamed, 0, 0).unwrap();
        // a b c map to z y x, which sort in reverse
        for i in 0..3 {
            assert!((r1.z[i] - r2.z[2 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_wins_keeps_order() {
        let counts = vec![vec![0, 6, 8], vec![4, 0, 7], vec![2, 3, 0]];
        let doubled: Vec<Vec<u64>> = counts.iter().map(|r| r.iter().map(|c| 2 * c).collect()).collect();
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let a = thurstone_scores(&PreferenceMatrix::new(names.clone(), counts, 10).unwrap()).unwrap();
        let b = thurstone_scores(&PreferenceMatrix::new(names, doubled, 20).unwrap()).unwrap();
        let order = |z: &[f64]| {
            let mut i: Vec<usize> = (0..z.len()).collect();
            i.sort_by(|&x, &y| z[y].total_cmp(&z[x]));
            i
        };
        assert_eq!(order(&a), order(&b));
    }

    #[test]
    fn bootstrap_brackets_estimate_and_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let votes = simulate_probit_votes(&[("a", 0.0), ("b", 0.5), ("c", 1.0)], 37, 2, &mut rng);
        let r = thurstone_case_v(&votes, 200, 7).unwrap();
        let ci = r.ci.as_ref().unwrap();
        for (z, (lo, hi)) in r.z.iter().zip(ci) {
            assert!(lo <= z && z <= hi);
        }
        assert_eq!(r, thurstone_case_v(&votes, 200, 7).unwrap());
        let m = PreferenceMatrix::from_votes(&votes).unwrap();
        let fallback = thurstone_matrix_bootstrap(&m, 100, 1).unwrap();
        assert_eq!(fallback.ci.unwrap().len(), 3);
    }

    #[test]
    fn csv_parsing() {
        let text = "observer,left_method,right_method,choice\nA,ours,base,left\nB, base ,ours,right\n";
        let votes = read_votes_csv(text.as_bytes()).unwrap();
        assert_eq!(votes.len(), 2);
        assert_eq!(votes[1].winner(), "ours");
        let bad = "observer,left_method,right_method,choice\nA,ours,base,left\nB,ours,base,maybe\n";
        assert!(matches!(
            read_votes_csv(bad.as_bytes()),
            Err(MetricsError::BadVote { row: 3, .. })
        ));
        let header = "who,l,r,c\n";
        assert!(matches!(
            read_votes_csv(header.as_bytes()),
            Err(MetricsError::BadVote { row: 1, .. })
        ));
    }
}
