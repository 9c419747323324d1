//! Deterministic synthetic corpora with ledgers of the counts they are
//! built to produce.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{GoldLabel, Review, ReviewCorpus, Store};
use crate::llm::{MockLlmScript, ERROR_RESPONSE};
use crate::nli::{MockNliTable, Trigger};

const APPS: [(&str, usize, usize); 5] = [
    ("Calm", 106_181, 22_983),
    ("Headspace", 78_989, 16_376),
    ("Sanvelo", 8_554, 698),
    ("Talkspace", 5_054, 2_928),
    ("Shine", 5_596, 662),
];

const FILLER: [&str; 12] = [
    "the app keeps crashing after the last update",
    "way too expensive for what you get",
    "meditations are boring and repetitive",
    "cannot cancel my subscription easily",
    "the sleep stories stopped loading",
    "customer support never answered me",
    "too many notifications every day",
    "audio cuts out halfway through sessions",
    "login screen freezes on my tablet",
    "the free trial was misleading",
    "content has not changed in months",
    "the new design is confusing",
];

const PRIVACY: [&str; 6] = [
    "they sell my data to advertisers",
    "my therapist chats were shared without consent",
    "the app tracks my location constantly",
    "they leaked my personal information",
    "no way to delete my account data",
    "my health records were shared with facebook",
];

fn largest_remainder(weights: &[usize], total: usize) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    let mut out: Vec<usize> = weights.iter().map(|w| w * total / sum).collect();
    let mut rem: Vec<(usize, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| (w * total % sum, i))
        .collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = total - out.iter().sum::<usize>();
    for &(_, i) in rem.iter().take(short) {
        out[i] += 1;
    }
    out
}

fn review(id: String, app: &str, store: Store, rating: u8, text: String, gold: Option<GoldLabel>) -> Review {
    Review {
        id,
        app_name: app.to_string(),
        store,
        rating,
        text_raw: text,
        text_norm: None,
        submitted_at: None,
        gold_label: gold,
    }
}

fn filler(rng: &mut impl Rng) -> String {
    let a = FILLER[rng.random_range(0..FILLER.len())];
    let b = FILLER[rng.random_range(0..FILLER.len())];
    format!("{}. Also {b}!", capitalize(a))
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreLedger {
    pub total: usize,
    pub low_rated: usize,
    pub per_app: Vec<(String, usize, usize)>,
}

/// Store-scale corpus with Table-I proportions divided by `divisor`.
pub fn store_fixture(divisor: usize, seed: u64) -> (ReviewCorpus, StoreLedger) {
    let total_all: usize = APPS.iter().map(|a| a.1).sum();
    let low_all: usize = APPS.iter().map(|a| a.2).sum();
    let total = total_all / divisor;
    let low = low_all / divisor;
    let totals = largest_remainder(&APPS.map(|a| a.1), total);
    let lows = largest_remainder(&APPS.map(|a| a.2), low);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reviews = Vec::with_capacity(total);
    let mut per_app = Vec::new();
    for (i, (app, _, _)) in APPS.iter().enumerate() {
        let (n, n_low) = (totals[i], lows[i].min(totals[i]));
        per_app.push((app.to_string(), n, n_low));
        for k in 0..n {
            let rating = if k < n_low {
                rng.random_range(1..=2)
            } else {
                rng.random_range(3..=5)
            };
            let store = if rng.random_bool(0.6) {
                Store::GooglePlay
            } else {
                Store::AppleAppStore
            };
            reviews.push(review(format!("{}-{k:05}", app.to_lowercase()), app, store, rating, filler(&mut rng), None));
        }
    }
    reviews.shuffle(&mut rng);
    let low_rated = per_app.iter().map(|a| a.2).sum();
    let corpus = ReviewCorpus::from_reviews("synthetic", reviews);
    (corpus, StoreLedger { total, low_rated, per_app })
}

/// Gold-labeled corpus: `n_privacy` reviews labeled 1, `n_other` labeled 0.
pub fn labeled_fixture(n_privacy: usize, n_other: usize, seed: u64) -> ReviewCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reviews = Vec::with_capacity(n_privacy + n_other);
    for i in 0..n_privacy + n_other {
        let app = APPS[i % APPS.len()].0;
        let (text, gold) = if i < n_privacy {
            let p = PRIVACY[rng.random_range(0..PRIVACY.len())];
            (format!("Privacy nightmare: {p} and {}", FILLER[i % FILLER.len()]), GoldLabel::Privacy)
        } else {
            (format!("Privacy policy aside, {}", filler(&mut rng)), GoldLabel::NonPrivacy)
        };
        reviews.push(review(format!("gold-{i:04}"), app, Store::GooglePlay, rng.random_range(1..=5), text, Some(gold)));
    }
    reviews.shuffle(&mut rng);
    ReviewCorpus::from_reviews("synthetic-labeled", reviews)
}

/// Counts an extraction run over [`ExtractionFixture`] must reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionLedger {
    pub ingested: usize,
    pub rating_filtered: usize,
    pub excluded_empty: usize,
    pub nli_scored: usize,
    pub maybe_privacy: usize,
    pub llm_yes: usize,
    pub llm_no: usize,
    pub llm_failed: usize,
    pub tiebreaks: usize,
    pub human_confirmed: usize,
    pub human_rejected: usize,
}

#[derive(Debug, Clone)]
pub struct ExtractionFixture {
    pub dir: PathBuf,
    pub config_path: PathBuf,
    pub corpus_path: PathBuf,
    pub ledger: ExtractionLedger,
    /// Review ids the LLM script answers `yes` for, in corpus order.
    pub yes_ids: Vec<String>,
    /// Per yes-review: did the lead and second annotator disagree.
    pub disagreements: Vec<bool>,
}

pub const ANNOTATORS: [&str; 4] = ["ann-a", "ann-b", "ann-c", "ann-d"];

/// Writes a 500-review unlabeled corpus, mock backend tables, annotator
/// scripts and a config into `dir`.
///
/// Layout: 40 reviews rated 3-5, 3 low-rated reviews that normalize to
/// nothing, and 457 scored reviews of which 60 carry privacy phrases.
/// The LLM script answers 25 candidates yes, 33 no and fails 2.
pub fn write_extraction_fixture(dir: &Path, seed: u64) -> std::io::Result<ExtractionFixture> {
    const TOTAL: usize = 500;
    const HIGH: usize = 40;
    const EMPTY: usize = 3;
    const CANDIDATES: usize = 60;
    const YES: usize = 25;
    const FAILED: usize = 2;
    const TIEBREAKS: usize = 5;
    const TIE_CONFIRMS: usize = 3;
    const AGREE_REJECTS: usize = 2;

    fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kinds: Vec<u8> = std::iter::repeat_n(0u8, TOTAL - HIGH - EMPTY - CANDIDATES)
        .chain(std::iter::repeat_n(1, HIGH))
        .chain(std::iter::repeat_n(2, EMPTY))
        .chain(std::iter::repeat_n(3, CANDIDATES))
        .collect();
    kinds.shuffle(&mut rng);

    let mut reviews = Vec::with_capacity(TOTAL);
    let mut candidate_ids = Vec::new();
    for (i, kind) in kinds.iter().enumerate() {
        let app = APPS[i % APPS.len()].0;
        let id = format!("x{i:04}");
        let (rating, text) = match kind {
            0 => (rng.random_range(1..=2), filler(&mut rng)),
            // Privacy phrases in high-rated reviews must not reach the NLI stage.
            1 => (rng.random_range(3..=5), format!("{} but {}", capitalize(PRIVACY[i % PRIVACY.len()]), FILLER[i % FILLER.len()])),
            2 => (1, "!!! :( ...".to_string()),
            _ => {
                candidate_ids.push(id.clone());
                (rng.random_range(1..=2), format!("{}. {}", capitalize(PRIVACY[rng.random_range(0..PRIVACY.len())]), filler(&mut rng)))
            }
        };
        reviews.push(review(id, app, Store::GooglePlay, rating, text, None));
    }
    let corpus = ReviewCorpus::from_reviews("synthetic-extraction", reviews);
    let corpus_path = dir.join("reviews.jsonl");
    corpus
        .write_jsonl(&corpus_path)
        .map_err(|e| std::io::Error::other(e.to_string()))?;

    let table = MockNliTable {
        triggers: PRIVACY
            .iter()
            .enumerate()
            .map(|(k, p)| Trigger {
                phrase: p.to_string(),
                hypothesis_ids: vec![1 + (k as u32 * 3) % 21, 1 + (k as u32 * 3 + 7) % 21],
                score: 0.93,
            })
            .collect(),
        default_score: 0.05,
        jitter: 0.02,
        seed,
    };

    // Candidate roles in corpus order: shuffled yes / no / failed.
    let mut roles: Vec<u8> = std::iter::repeat_n(0u8, YES)
        .chain(std::iter::repeat_n(1, CANDIDATES - YES - FAILED))
        .chain(std::iter::repeat_n(2, FAILED))
        .collect();
    roles.shuffle(&mut rng);
    let yes_patterns: [&[&str]; 3] = [
        &["yes", "yes", "yes", "yes", "yes"],
        &["Yes.", "no", "yes", "YES", "no"],
        &["yes", "maybe", "yes", "no", "yes"],
    ];
    let no_patterns: [&[&str]; 3] = [
        &["no", "no", "no", "no", "no"],
        &["yes", "No.", "no", "yes", "no"],
        &["yes", "unsure", "no", "no", "unsure"],
    ];
    let mut script = MockLlmScript::default();
    let mut yes_ids = Vec::new();
    for (k, (id, role)) in candidate_ids.iter().zip(&roles).enumerate() {
        let responses: Vec<String> = match role {
            0 => {
                yes_ids.push(id.clone());
                yes_patterns[k % 3].iter().map(|s| s.to_string()).collect()
            }
            1 => no_patterns[k % 3].iter().map(|s| s.to_string()).collect(),
            _ => vec!["yes".into(), ERROR_RESPONSE.into()],
        };
        script.insert(id.clone(), responses);
    }
    // A decoy scripted for a filtered-out review; it must never be asked.
    script.insert("x-never-asked", vec!["yes".into()]);

    // Annotator scripts. Every reviewer answers for every queued review so
    // any assignment works; the first TIEBREAKS yes-reviews are split
    // between lead and the other labeler, of which TIE_CONFIRMS resolve to
    // privacy; the next AGREE_REJECTS are unanimous non-privacy.
    let mut disagreements = Vec::new();
    let mut ann: BTreeMap<&str, BTreeMap<String, &str>> = BTreeMap::new();
    for (k, id) in yes_ids.iter().enumerate() {
        let (lead, other, third) = if k < TIEBREAKS {
            let third = if k < TIE_CONFIRMS { "y" } else { "n" };
            ("y", "n", third)
        } else if k < TIEBREAKS + AGREE_REJECTS {
            ("n", "n", "n")
        } else {
            ("y", "y", "y")
        };
        disagreements.push(k < TIEBREAKS);
        ann.entry(ANNOTATORS[0]).or_default().insert(id.clone(), lead);
        for a in &ANNOTATORS[1..] {
            // Whoever is the second labeler answers `other`; everyone else
            // answers as tiebreaker.
            ann.entry(a).or_default().insert(id.clone(), if is_second(k, a) { other } else { third });
        }
    }
    let ledger = ExtractionLedger {
        ingested: TOTAL,
        rating_filtered: TOTAL - HIGH,
        excluded_empty: EMPTY,
        nli_scored: TOTAL - HIGH - EMPTY,
        maybe_privacy: CANDIDATES,
        llm_yes: YES,
        llm_no: CANDIDATES - YES - FAILED,
        llm_failed: FAILED,
        tiebreaks: TIEBREAKS,
        human_confirmed: YES - AGREE_REJECTS - (TIEBREAKS - TIE_CONFIRMS),
        human_rejected: AGREE_REJECTS + TIEBREAKS - TIE_CONFIRMS,
    };

    let write = |name: &str, v: &serde_json::Value| -> std::io::Result<PathBuf> {
        let p = dir.join(name);
        fs::write(&p, serde_json::to_string_pretty(v).expect("json") + "\n")?;
        Ok(p)
    };
    write("nli_mock.json", &serde_json::to_value(&table).expect("table"))?;
    write("llm_script.json", &serde_json::to_value(&script).expect("script"))?;
    write("annotators.json", &serde_json::to_value(&ann).expect("ann"))?;
    write("ledger.json", &serde_json::to_value(ledger).expect("ledger"))?;
    let config = json!({
        "seed": seed,
        "output_dir": "run",
        "corpus": {"path": "reviews.jsonl", "min_rating": 1, "max_rating": 2},
        "nli": {
            "backends": [{"name": "mock-nli", "model": "mock", "endpoint": "mock", "mock_table": "nli_mock.json"}],
            "use": "mock-nli"
        },
        "hypotheses": {"sets": ["mh_domain"], "use": "mh_domain"},
        "llm": {
            "name": "mock-llm", "model": "mock", "endpoint": "mock", "mock_script": "llm_script.json",
            "retry": {"max_retries": 0, "base_delay_ms": 0, "max_delay_ms": 0}
        },
        "annotation": {"annotators": ANNOTATORS, "lead": ANNOTATORS[0], "script": "annotators.json"}
    });
    let config_path = write("config.json", &config)?;
    Ok(ExtractionFixture {
        dir: dir.to_path_buf(),
        config_path,
        corpus_path,
        ledger,
        yes_ids,
        disagreements,
    })
}

/// Whether `annotator` is the second labeler of the `k`-th queued review
/// under lead-plus-round-robin assignment over [`ANNOTATORS`].
fn is_second(k: usize, annotator: &str) -> bool {
    ANNOTATORS[1 + k % (ANNOTATORS.len() - 1)] == annotator
}
