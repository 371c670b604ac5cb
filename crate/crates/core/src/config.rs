//! Gate configuration.
//!
//! The on-disk form is a flat JSON object ([`ConfigFile`]); every key is
//! optional and command-line flags are merged over it before it is resolved
//! into a validated [`GateConfig`].

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{self, FeatureError};
use crate::ip;
use crate::policy::{PolicyError, PolicyKind, PolicySpec, DEFAULT_D_MAX, DEFAULT_EPSILON};
use crate::puzzle::store::{StoreConfig, DEFAULT_CAPACITY, DEFAULT_TTL_SECS};
use crate::reputation::{ReputationScore, Scorer, ScorerKind};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_STATIC_BODY: &str = "ok";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Data { path: PathBuf, source: FeatureError },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("invalid value for {key}: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("missing {0}")]
    Missing(&'static str),
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

/// Raw configuration keys as they appear in the JSON file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub listen: Option<String>,
    pub scorer: Option<String>,
    pub policy: Option<String>,
    pub offset: Option<u32>,
    pub epsilon: Option<f64>,
    pub d_max: Option<u32>,
    pub ttl: Option<u64>,
    pub store_capacity: Option<usize>,
    pub upstream: Option<String>,
    pub static_body: Option<String>,
    pub test_mode: Option<bool>,
    pub exempt_ips: Option<Vec<String>>,
    pub corpus_path: Option<PathBuf>,
    pub feature_table_path: Option<PathBuf>,
    pub score_table_path: Option<PathBuf>,
    pub unknown_client_score: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let bytes = read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Overlay every key set in `other` onto `self`.
    pub fn merge(mut self, other: ConfigFile) -> Self {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if other.$field.is_some() { self.$field = other.$field; })*
            };
        }
        take!(
            listen,
            scorer,
            policy,
            offset,
            epsilon,
            d_max,
            ttl,
            store_capacity,
            upstream,
            static_body,
            test_mode,
            exempt_ips,
            corpus_path,
            feature_table_path,
            score_table_path,
            unknown_client_score
        );
        self
    }
}

fn read(path: &Path) -> Result<Vec<u8>, ConfigError> {
    std::fs::read(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScorerSource {
    Euclidean {
        corpus_path: PathBuf,
        feature_table_path: PathBuf,
    },
    Fixture {
        score_table_path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Upstream {
    Static(String),
    /// Base URL of the origin, `http://host:port`.
    Forward(String),
}

/// Validated gate configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct GateConfig {
    pub listen: SocketAddr,
    pub scorer: ScorerSource,
    pub unknown_client_score: ReputationScore,
    pub policy: PolicySpec,
    pub store: StoreConfig,
    pub upstream: Upstream,
    pub test_mode: bool,
    pub exempt_ips: BTreeSet<String>,
}

impl GateConfig {
    pub fn resolve(file: ConfigFile) -> Result<Self, ConfigError> {
        let listen = file
            .listen
            .as_deref()
            .unwrap_or(DEFAULT_LISTEN)
            .parse()
            .map_err(|e| invalid("listen", format!("{e}")))?;

        let scorer = match file.scorer.as_deref().unwrap_or("fixture") {
            "euclidean" => ScorerSource::Euclidean {
                corpus_path: file.corpus_path.ok_or(ConfigError::Missing("corpus_path"))?,
                feature_table_path: file
                    .feature_table_path
                    .ok_or(ConfigError::Missing("feature_table_path"))?,
            },
            "fixture" => ScorerSource::Fixture {
                score_table_path: file
                    .score_table_path
                    .ok_or(ConfigError::Missing("score_table_path"))?,
            },
            other => return Err(invalid("scorer", format!("{other:?}"))),
        };

        let unknown_client_score = match file.unknown_client_score {
            None => ReputationScore::MAX,
            Some(v) => ReputationScore::new(v)
                .ok_or_else(|| invalid("unknown_client_score", format!("{v} not in [0, 10]")))?,
        };

        let epsilon = file.epsilon.unwrap_or(DEFAULT_EPSILON);
        let kind = match file.policy.as_deref().unwrap_or("policy1") {
            "linear" => PolicyKind::Linear {
                offset: file.offset.unwrap_or(1),
            },
            "error-range" => PolicyKind::ErrorRange { epsilon },
            preset => PolicySpec::preset(preset, epsilon)?.kind(),
        };
        let d_max = file.d_max.unwrap_or(DEFAULT_D_MAX);
        let policy = PolicySpec::new(kind, d_max)?;

        let ttl = file.ttl.unwrap_or(DEFAULT_TTL_SECS);
        if ttl == 0 {
            return Err(invalid("ttl", "must be positive"));
        }
        let capacity = file.store_capacity.unwrap_or(DEFAULT_CAPACITY);
        if capacity == 0 {
            return Err(invalid("store_capacity", "must be positive"));
        }

        let upstream = match file.upstream.as_deref().unwrap_or("static") {
            "static" => Upstream::Static(
                file.static_body
                    .unwrap_or_else(|| DEFAULT_STATIC_BODY.to_string()),
            ),
            origin if origin.starts_with("http://") => {
                if file.static_body.is_some() {
                    return Err(invalid(
                        "upstream",
                        "static_body cannot be combined with a forwarding upstream",
                    ));
                }
                Upstream::Forward(origin.trim_end_matches('/').to_string())
            }
            other => return Err(invalid("upstream", format!("{other:?} is neither \"static\" nor http://host:port"))),
        };

        let exempt_ips = file
            .exempt_ips
            .unwrap_or_default()
            .iter()
            .map(|raw| ip::canonicalize(raw).ok_or_else(|| invalid("exempt_ips", raw.clone())))
            .collect::<Result<_, _>>()?;

        Ok(Self {
            listen,
            scorer,
            unknown_client_score,
            policy,
            store: StoreConfig {
                ttl,
                capacity,
                d_max,
            },
            upstream,
            test_mode: file.test_mode.unwrap_or(false),
            exempt_ips,
        })
    }

    /// Load the scorer's data files.
    pub fn build_scorer(&self) -> Result<Scorer, ConfigError> {
        let data = |path: &Path, source| ConfigError::Data {
            path: path.to_path_buf(),
            source,
        };
        let kind = match &self.scorer {
            ScorerSource::Fixture { score_table_path } => ScorerKind::FixtureTable(
                features::parse_score_table(&read(score_table_path)?)
                    .map_err(|e| data(score_table_path, e))?,
            ),
            ScorerSource::Euclidean {
                corpus_path,
                feature_table_path,
            } => ScorerKind::EuclideanCorpus {
                corpus: features::parse_corpus(&read(corpus_path)?)
                    .map_err(|e| data(corpus_path, e))?,
                features: features::parse_feature_table(&read(feature_table_path)?)
                    .map_err(|e| data(feature_table_path, e))?,
            },
        };
        Scorer::with_unknown_score(kind, self.unknown_client_score)
            .map_err(|e| data(Path::new("scorer"), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn fixture_file() -> ConfigFile {
        ConfigFile {
            score_table_path: Some("scores.csv".into()),
            ..Default::default()
        }
    }

    #[test]
    fn defaults() {
        let cfg = GateConfig::resolve(fixture_file()).unwrap();
        assert_eq!(cfg.listen, DEFAULT_LISTEN.parse().unwrap());
        assert_eq!(cfg.policy, PolicySpec::linear(1).unwrap());
        assert_eq!(cfg.store, StoreConfig::default());
        assert_eq!(cfg.upstream, Upstream::Static("ok".into()));
        assert!(!cfg.test_mode);
        assert_eq!(cfg.unknown_client_score, ReputationScore::MAX);
    }

    #[test]
    fn parses_json_keys() {
        let json = r#"{
            "listen": "0.0.0.0:9000", "scorer": "euclidean", "policy": "error-range",
            "epsilon": 1.5, "d_max": 20, "ttl": 60, "store_capacity": 10,
            "upstream": "http://127.0.0.1:9100/", "test_mode": true,
            "exempt_ips": ["2001:DB8::1", "10.0.0.1"],
            "corpus_path": "c.csv", "feature_table_path": "f.csv"
        }"#;
        let cfg = GateConfig::resolve(serde_json::from_str(json).unwrap()).unwrap();
        assert_eq!(cfg.policy.kind(), PolicyKind::ErrorRange { epsilon: 1.5 });
        assert_eq!(cfg.policy.d_max(), 20);
        assert_eq!(cfg.store.ttl, 60);
        assert_eq!(cfg.store.capacity, 10);
        assert_eq!(cfg.upstream, Upstream::Forward("http://127.0.0.1:9100".into()));
        assert!(cfg.exempt_ips.contains("2001:db8::1"));
        assert!(matches!(cfg.scorer, ScorerSource::Euclidean { .. }));
    }

    #[test]
    fn presets_and_linear() {
        for (name, offset) in [("policy1", 1), ("policy2", 5)] {
            let cfg = GateConfig::resolve(ConfigFile {
                policy: Some(name.into()),
                ..fixture_file()
            })
            .unwrap();
            assert_eq!(cfg.policy.kind(), PolicyKind::Linear { offset });
        }
        let cfg = GateConfig::resolve(ConfigFile {
            policy: Some("linear".into()),
            offset: Some(3),
            ..fixture_file()
        })
        .unwrap();
        assert_eq!(cfg.policy.kind(), PolicyKind::Linear { offset: 3 });
        let cfg = GateConfig::resolve(ConfigFile {
            policy: Some("policy3".into()),
            ..fixture_file()
        })
        .unwrap();
        assert_eq!(cfg.policy.kind(), PolicyKind::ErrorRange { epsilon: 1.0 });
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            ConfigFile { scorer: Some("magic".into()), ..fixture_file() },
            ConfigFile { scorer: Some("euclidean".into()), ..fixture_file() },
            ConfigFile { policy: Some("policy7".into()), ..fixture_file() },
            ConfigFile { policy: Some("linear".into()), offset: Some(0), ..fixture_file() },
            ConfigFile { ttl: Some(0), ..fixture_file() },
            ConfigFile { store_capacity: Some(0), ..fixture_file() },
            ConfigFile { d_max: Some(0), ..fixture_file() },
            ConfigFile { upstream: Some("ftp://x".into()), ..fixture_file() },
            ConfigFile {
                upstream: Some("http://127.0.0.1:1".into()),
                static_body: Some("x".into()),
                ..fixture_file()
            },
            ConfigFile { exempt_ips: Some(vec!["nope".into()]), ..fixture_file() },
            ConfigFile { unknown_client_score: Some(11.0), ..fixture_file() },
            ConfigFile { listen: Some("nowhere".into()), ..fixture_file() },
            ConfigFile::default(),
        ];
        for file in bad {
            assert!(GateConfig::resolve(file.clone()).is_err(), "{file:?}");
        }
        assert!(serde_json::from_str::<ConfigFile>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn merge_overrides() {
        let base = ConfigFile {
            ttl: Some(10),
            d_max: Some(12),
            ..fixture_file()
        };
        let merged = base.merge(ConfigFile {
            ttl: Some(20),
            ..Default::default()
        });
        assert_eq!(merged.ttl, Some(20));
        assert_eq!(merged.d_max, Some(12));
    }

    #[test]
    fn builds_scorers_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, body: &str| {
            let path = dir.path().join(name);
            std::fs::File::create(&path).unwrap().write_all(body.as_bytes()).unwrap();
            path
        };
        let scores = write("scores.csv", "10.0.0.3,3\n");
        let cfg = GateConfig::resolve(ConfigFile {
            score_table_path: Some(scores),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(cfg.build_scorer().unwrap().score_client("10.0.0.3").value(), 3.0);

        let cfg = GateConfig::resolve(ConfigFile {
            scorer: Some("euclidean".into()),
            corpus_path: Some(write("corpus.csv", "0,0\n1,1\n")),
            feature_table_path: Some(write("features.csv", "10.0.0.1,1,1\n")),
            unknown_client_score: Some(4.0),
            ..Default::default()
        })
        .unwrap();
        let scorer = cfg.build_scorer().unwrap();
        assert_eq!(scorer.score_client("10.0.0.1").value(), 10.0);
        assert_eq!(scorer.score_client("10.0.0.2").value(), 4.0);

        let missing = GateConfig::resolve(ConfigFile {
            score_table_path: Some(dir.path().join("absent.csv")),
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(missing.build_scorer(), Err(ConfigError::Io { .. })));

        let broken = GateConfig::resolve(ConfigFile {
            score_table_path: Some(write("bad.csv", "10.0.0.1,12\n")),
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(broken.build_scorer(), Err(ConfigError::Data { .. })));
    }
}
