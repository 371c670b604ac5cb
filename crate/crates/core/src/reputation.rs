//! Reputation scoring.
//!
//! Scores live on `[0, 10]`; higher means less trustworthy. The reference
//! scorer measures euclidean distance from the client's normalized features
//! to the nearest known-malicious point: a client identical to a corpus
//! member scores 10, one at the far corner of the unit cube scores 0.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::features::{self, FeatureError, FeatureTable, FeatureVector, MaliciousCorpus, ScoreTable};

/// A reputation score in `[0, 10]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ReputationScore(f64);

impl ReputationScore {
    pub const MIN: ReputationScore = ReputationScore(0.0);
    pub const MAX: ReputationScore = ReputationScore(10.0);

    /// `None` unless `value` is finite and within `[0, 10]`.
    pub fn new(value: f64) -> Option<Self> {
        (0.0..=10.0).contains(&value).then_some(Self(value))
    }

    /// Clamp an arbitrary real onto the score scale. NaN maps to the maximum.
    pub fn saturating(value: f64) -> Self {
        if value.is_nan() {
            Self::MAX
        } else {
            Self(value.clamp(0.0, 10.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for ReputationScore {
    type Error = String;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Self::new(value).ok_or_else(|| format!("reputation score {value} is outside [0, 10]"))
    }
}

impl From<ReputationScore> for f64 {
    fn from(score: ReputationScore) -> f64 {
        score.0
    }
}

impl fmt::Display for ReputationScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Score `v` by its distance to the nearest corpus point.
///
/// `score = 10 * (1 - dist / sqrt(k))`, where `dist` is measured in the
/// corpus unit cube, so `sqrt(k)` is the largest possible distance.
pub fn score_euclidean(
    v: &FeatureVector,
    corpus: &MaliciousCorpus,
) -> Result<ReputationScore, FeatureError> {
    let u = features::normalize(v, corpus)?;
    let k = corpus.dim();
    if k == 0 {
        // no features: every client is indistinguishable from the corpus
        return Ok(ReputationScore::MAX);
    }
    let nearest_sq = corpus
        .unit_points()
        .iter()
        .map(|p| {
            p.iter()
                .zip(u.values())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    let dist = nearest_sq.sqrt();
    Ok(ReputationScore::saturating(10.0 * (1.0 - dist / (k as f64).sqrt())))
}

/// Which model produces scores.
#[derive(Debug, Clone)]
pub enum ScorerKind {
    /// Distance to a malicious corpus, with client features from a static table.
    EuclideanCorpus {
        corpus: MaliciousCorpus,
        features: FeatureTable,
    },
    /// Scores read straight from a fixture table.
    FixtureTable(ScoreTable),
}

/// A configured scorer. Immutable after construction; share it freely.
#[derive(Debug, Clone)]
pub struct Scorer {
    kind: ScorerKind,
    unknown_client_score: ReputationScore,
}

impl Scorer {
    /// Unknown clients default to the maximum score (fail closed).
    pub fn new(kind: ScorerKind) -> Result<Self, FeatureError> {
        Self::with_unknown_score(kind, ReputationScore::MAX)
    }

    pub fn with_unknown_score(
        kind: ScorerKind,
        unknown_client_score: ReputationScore,
    ) -> Result<Self, FeatureError> {
        if let ScorerKind::EuclideanCorpus { corpus, features } = &kind {
            if let Some(k) = features.dim() {
                if k != corpus.dim() {
                    return Err(FeatureError::DimensionMismatch {
                        expected: corpus.dim(),
                        found: k,
                    });
                }
            }
        }
        Ok(Self {
            kind,
            unknown_client_score,
        })
    }

    pub fn fixture(table: ScoreTable) -> Self {
        Self {
            kind: ScorerKind::FixtureTable(table),
            unknown_client_score: ReputationScore::MAX,
        }
    }

    pub fn kind(&self) -> &ScorerKind {
        &self.kind
    }

    pub fn unknown_client_score(&self) -> ReputationScore {
        self.unknown_client_score
    }

    /// Score a client by canonical IP. Total: unknown clients get the
    /// configured default.
    pub fn score_client(&self, ip: &str) -> ReputationScore {
        match &self.kind {
            ScorerKind::FixtureTable(table) => table.get(ip),
            ScorerKind::EuclideanCorpus { corpus, features } => features::lookup_features(ip, features)
                // dimensions were checked at construction
                .and_then(|v| score_euclidean(v, corpus).ok()),
        }
        .unwrap_or(self.unknown_client_score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(values: &[f64]) -> FeatureVector {
        FeatureVector::new(values.to_vec()).unwrap()
    }

    fn unit_corpus(points: &[&[f64]]) -> MaliciousCorpus {
        let k = points[0].len();
        MaliciousCorpus::with_bounds(points.iter().map(|p| fv(p)).collect(), vec![(0.0, 1.0); k])
            .unwrap()
    }

    // Written out independently of score_euclidean: plain scalar arithmetic.
    fn oracle_score(dx: f64, dy: f64) -> f64 {
        let dist = (dx * dx + dy * dy).sqrt();
        10.0 * (1.0 - dist / 2f64.sqrt())
    }

    #[test]
    fn score_bounds() {
        assert!(ReputationScore::new(-0.1).is_none());
        assert!(ReputationScore::new(10.1).is_none());
        assert!(ReputationScore::new(f64::NAN).is_none());
        assert_eq!(ReputationScore::saturating(12.0), ReputationScore::MAX);
        assert_eq!(ReputationScore::saturating(-1.0), ReputationScore::MIN);
        assert_eq!(ReputationScore::saturating(f64::NAN), ReputationScore::MAX);
        assert!(serde_json::from_str::<ReputationScore>("11").is_err());
        assert_eq!(serde_json::from_str::<ReputationScore>("2.5").unwrap().value(), 2.5);
    }

    #[test]
    fn corpus_member_scores_ten() {
        let corpus = features::parse_corpus(b"1,2\n3,5\n-4,0\n").unwrap();
        for p in corpus.points() {
            assert_eq!(score_euclidean(p, &corpus).unwrap().value(), 10.0);
        }
    }

    #[test]
    fn farthest_corner_scores_zero() {
        let corpus = unit_corpus(&[&[0.0, 0.0]]);
        assert_eq!(score_euclidean(&fv(&[1.0, 1.0]), &corpus).unwrap().value(), 0.0);
    }

    #[test]
    fn three_four_five() {
        let corpus = unit_corpus(&[&[0.0, 0.0]]);
        let s = score_euclidean(&fv(&[0.3, 0.4]), &corpus).unwrap().value();
        let expected = oracle_score(0.3, 0.4);
        assert!((expected - 6.4645).abs() < 1e-4);
        assert!((s - expected).abs() < 1e-12, "{s} vs {expected}");
    }

    #[test]
    fn nearest_point_wins() {
        let corpus = unit_corpus(&[&[0.0, 0.0], &[1.0, 1.0]]);
        let s = score_euclidean(&fv(&[0.9, 0.9]), &corpus).unwrap().value();
        assert!((s - oracle_score(0.1, 0.1)).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let corpus = unit_corpus(&[&[0.0, 0.0]]);
        assert!(matches!(
            score_euclidean(&fv(&[0.0]), &corpus),
            Err(FeatureError::DimensionMismatch { .. })
        ));
        let mut table = FeatureTable::default();
        table.insert("10.0.0.1", fv(&[1.0, 2.0, 3.0])).unwrap();
        assert!(Scorer::new(ScorerKind::EuclideanCorpus {
            corpus,
            features: table
        })
        .is_err());
    }

    #[test]
    fn fixture_scorer() {
        let mut table = ScoreTable::default();
        table.insert("10.0.0.7", ReputationScore::new(7.0).unwrap());
        let scorer = Scorer::fixture(table);
        assert_eq!(scorer.score_client("10.0.0.7").value(), 7.0);
        assert_eq!(scorer.score_client("10.0.0.8").value(), 10.0);

        let empty = Scorer::fixture(ScoreTable::default());
        assert_eq!(empty.score_client("192.0.2.1").value(), 10.0);

        let lenient = Scorer::with_unknown_score(
            ScorerKind::FixtureTable(ScoreTable::default()),
            ReputationScore::new(2.0).unwrap(),
        )
        .unwrap();
        assert_eq!(lenient.score_client("192.0.2.1").value(), 2.0);
    }

    #[test]
    fn euclidean_scorer_dispatch() {
        let corpus = features::parse_corpus(b"5,5\n0,10\n").unwrap();
        let features = features::parse_feature_table(b"10.0.0.1,5,5\n10.0.0.2,0,5\n").unwrap();
        let scorer = Scorer::new(ScorerKind::EuclideanCorpus { corpus, features }).unwrap();
        assert_eq!(scorer.score_client("10.0.0.1").value(), 10.0);
        // corpus normalizes to (1,0) and (0,1); the query to (0,0): dist 1
        let s = scorer.score_client("10.0.0.2").value();
        assert!((s - oracle_score(1.0, 0.0)).abs() < 1e-12, "{s}");
        assert_eq!(scorer.score_client("10.0.0.3").value(), 10.0);
    }

    proptest! {
        #[test]
        fn scores_in_range(
            rows in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3), 1..10),
            q in prop::collection::vec(-1000.0f64..1000.0, 3),
        ) {
            let corpus = MaliciousCorpus::new(rows.iter().map(|r| fv(r)).collect()).unwrap();
            let s = score_euclidean(&fv(&q), &corpus).unwrap().value();
            prop_assert!((0.0..=10.0).contains(&s));
        }

        #[test]
        fn permutation_invariant(
            rows in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 2), 2..10),
            q in prop::collection::vec(-100.0f64..100.0, 2),
            rotate in 0usize..10,
        ) {
            let a = MaliciousCorpus::new(rows.iter().map(|r| fv(r)).collect()).unwrap();
            let mut shuffled = rows.clone();
            shuffled.reverse();
            let n = shuffled.len();
            shuffled.rotate_left(rotate % n);
            let b = MaliciousCorpus::new(shuffled.iter().map(|r| fv(r)).collect()).unwrap();
            let v = fv(&q);
            prop_assert_eq!(score_euclidean(&v, &a).unwrap(), score_euclidean(&v, &b).unwrap());
        }

        #[test]
        fn moving_toward_nearest_never_lowers_score(
            q in prop::collection::vec(0.0f64..=1.0, 2),
            t in 0.0f64..=1.0,
        ) {
            // single point corpus: the nearest point never changes
            let corpus = unit_corpus(&[&[0.2, 0.7]]);
            let target = [0.2, 0.7];
            let closer: Vec<f64> = q.iter().zip(target).map(|(a, b)| a + t * (b - a)).collect();
            let before = score_euclidean(&fv(&q), &corpus).unwrap();
            let after = score_euclidean(&fv(&closer), &corpus).unwrap();
            prop_assert!(after >= before);
        }

        #[test]
        fn deterministic(q in prop::collection::vec(-10.0f64..10.0, 2)) {
            let corpus = features::parse_corpus(b"1,2\n-3,4\n0,0\n").unwrap();
            let a = score_euclidean(&fv(&q), &corpus).unwrap();
            let b = score_euclidean(&fv(&q), &corpus).unwrap();
            prop_assert_eq!(a.value().to_bits(), b.value().to_bits());
        }
    }
}
