//! Synthetic corpora with a planted identity/toxicity correlation, plus the
//! starter templates, term lists, tweets, external scores and pseudo
//! embeddings that accompany them. Everything is generated from a seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CommentRecord, DEFAULT_IDENTITY_COLUMNS};
use crate::features::EmbeddingTable;
use crate::numerics::{seeded_rng, SeededRng};
use crate::textproc::tokenize;

/// Identity terms and the annotation column each one marks.
pub const IDENTITY_TERMS: [(&str, &str); 16] = [
    ("muslim", "muslim"),
    ("muslims", "muslim"),
    ("christian", "christian"),
    ("christians", "christian"),
    ("jewish", "jewish"),
    ("gay", "homosexual_gay_or_lesbian"),
    ("lesbian", "homosexual_gay_or_lesbian"),
    ("black", "black"),
    ("white", "white"),
    ("asian", "asian"),
    ("latino", "latino"),
    ("women", "female"),
    ("transgender", "transgender"),
    ("atheist", "atheist"),
    ("hindu", "hindu"),
    ("immigrants", "other_race_or_ethnicity"),
];

/// Stand-in tokens for the slur lexicon. They carry no meaning outside tests.
pub const PLACEHOLDER_SLURS: [&str; 8] = ["zorp", "quibbet", "flangor", "mibble", "drosk", "yarnel", "plitch", "vexom"];

const INSULTS: [&str; 32] = [
    "idiot", "stupid", "moron", "pathetic", "trash", "loser", "clown", "garbage", "dumb", "scum", "worthless",
    "ignorant", "fool", "disgusting", "imbecile", "vile", "filthy", "lowlife", "hypocrite", "coward", "nitwit",
    "buffoon", "dimwit", "cretin", "parasite", "vermin", "halfwit", "dunce", "numbskull", "simpleton", "bonehead",
    "dullard",
];

const NEGATIVE: [&str; 20] = [
    "bad", "wrong", "terrible", "awful", "worst", "sad", "angry", "fail", "problem", "crime", "violence", "attack",
    "blame", "shame", "corrupt", "lies", "mess", "disaster", "hate", "ugly",
];

const NEUTRAL: &[&str] = &[
    "the", "a", "this", "that", "is", "are", "was", "were", "it", "they", "we", "you", "i", "he", "she", "and", "or",
    "but", "so", "if", "of", "to", "in", "on", "for", "with", "about", "from", "by", "at", "city", "council", "vote",
    "budget", "plan", "tax", "school", "road", "park", "water", "power", "energy", "price", "market", "job", "work",
    "people", "family", "child", "house", "rent", "bus", "train", "weather", "rain", "summer", "winter", "game",
    "team", "coach", "season", "article", "story", "news", "paper", "writer", "reader", "comment", "point", "idea",
    "policy", "law", "court", "judge", "state", "country", "island", "harbor", "ferry", "bridge", "library", "doctor",
    "nurse", "hospital", "store", "coffee", "food", "farm", "fish", "forest", "fire", "station", "mayor", "governor",
    "election", "ballot", "campaign", "office", "report", "number", "year", "week", "day", "time", "think", "agree",
    "believe", "know", "read", "said", "should", "would", "could", "really", "maybe", "good", "great", "fine", "new",
    "old", "local",
];

/// Shape of a planted-bias corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedSpec {
    pub comments: usize,
    /// Share of rows without any identity annotation.
    pub unannotated_rate: f64,
    /// Share of comments that mention an identity.
    pub identity_rate: f64,
    pub toxic_rate_identity: f64,
    pub toxic_rate_non_identity: f64,
    /// Chance that a non-toxic comment carries a negative-topic word, by group.
    pub negative_rate_identity: f64,
    pub negative_rate_non_identity: f64,
    /// Chance that a toxic comment carries no explicit insult, by group.
    pub implicit_rate_identity: f64,
    pub implicit_rate_non_identity: f64,
    /// Zipf exponent for which identity term a toxic comment uses; 0 is uniform.
    pub toxic_term_skew: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            comments: 8000,
            unannotated_rate: 0.2,
            identity_rate: 0.45,
            toxic_rate_identity: 0.16,
            toxic_rate_non_identity: 0.08,
            negative_rate_identity: 0.5,
            negative_rate_non_identity: 0.5,
            implicit_rate_identity: 0.8,
            implicit_rate_non_identity: 0.2,
            toxic_term_skew: 2.0,
            seed: 13,
        }
    }
}

fn zipf_pick<T: Copy>(rng: &mut SeededRng, words: &[T], exponent: f64) -> T {
    let weights: Vec<f64> = (1..=words.len()).map(|r| (r as f64).powf(-exponent)).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (w, &weight) in words.iter().zip(&weights) {
        if u < weight {
            return *w;
        }
        u -= weight;
    }
    words[words.len() - 1]
}

fn insert_random(rng: &mut SeededRng, tokens: &mut Vec<String>, word: &str) {
    let at = rng.gen_range(0..=tokens.len());
    tokens.insert(at, word.to_string());
}

/// A negative-topic word, drawn the same way for toxic and benign text.
fn add_negative_topic(rng: &mut SeededRng, tokens: &mut Vec<String>) {
    let w = NEGATIVE.choose(rng).unwrap();
    insert_random(rng, tokens, w);
}

fn sentence(tokens: &[String]) -> String {
    let mut s = tokens.join(" ");
    if let Some(first) = s.get(0..1) {
        s.replace_range(0..1, &first.to_uppercase());
    }
    s.push('.');
    s
}

/// Comment rows with the identity/toxicity correlation described by `spec`.
pub fn planted_comments(spec: &PlantedSpec) -> Vec<CommentRecord> {
    let mut rng = seeded_rng(spec.seed);
    (0..spec.comments)
        .map(|n| {
            let annotated = rng.gen::<f64>() >= spec.unannotated_rate;
            let identity = rng.gen::<f64>() < spec.identity_rate;
            let toxic_rate = if identity { spec.toxic_rate_identity } else { spec.toxic_rate_non_identity };
            let toxic = rng.gen::<f64>() < toxic_rate;
            let len = rng.gen_range(6..=18);
            let mut tokens: Vec<String> = (0..len).map(|_| NEUTRAL.choose(&mut rng).unwrap().to_string()).collect();
            let mut columns = BTreeMap::new();
            if identity {
                let picks = if rng.gen_bool(0.25) { 2 } else { 1 };
                for _ in 0..picks {
                    let (term, column) = if toxic {
                        zipf_pick(&mut rng, &IDENTITY_TERMS, spec.toxic_term_skew)
                    } else {
                        *IDENTITY_TERMS.choose(&mut rng).unwrap()
                    };
                    insert_random(&mut rng, &mut tokens, term);
                    columns.insert(column.to_string(), rng.gen_range(0.2..=1.0));
                }
            }
            if toxic {
                let implicit = if identity { spec.implicit_rate_identity } else { spec.implicit_rate_non_identity };
                if !rng.gen_bool(implicit) {
                    for _ in 0..rng.gen_range(1..=2) {
                        let w = zipf_pick(&mut rng, &INSULTS, 1.1);
                        insert_random(&mut rng, &mut tokens, w);
                    }
                    if rng.gen_bool(if identity { 0.35 } else { 0.1 }) {
                        let w = PLACEHOLDER_SLURS.choose(&mut rng).unwrap();
                        insert_random(&mut rng, &mut tokens, w);
                    }
                } else {
                    add_negative_topic(&mut rng, &mut tokens);
                }
                if rng.gen_bool(0.4) {
                    add_negative_topic(&mut rng, &mut tokens);
                }
            } else {
                let rate = if identity { spec.negative_rate_identity } else { spec.negative_rate_non_identity };
                if rng.gen_bool(rate) {
                    add_negative_topic(&mut rng, &mut tokens);
                }
                if rng.gen_bool(0.03) {
                    let w = zipf_pick(&mut rng, &INSULTS, 1.1);
                    insert_random(&mut rng, &mut tokens, w);
                }
            }
            let toxicity = if toxic { rng.gen_range(0.5..=1.0) } else { rng.gen_range(0.0..0.45) };
            let identity_fractions = annotated.then(|| {
                let mut all: BTreeMap<String, f64> =
                    DEFAULT_IDENTITY_COLUMNS.iter().map(|c| (c.to_string(), 0.0)).collect();
                all.extend(columns);
                all
            });
            CommentRecord { id: format!("c{n:06}"), text: sentence(&tokens), toxicity, identity_fractions }
        })
        .collect()
}

fn round6(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() { "0".into() } else { s.to_string() }
}

/// Writes rows in the comment CSV layout: id, comment_text, target and the
/// identity columns (blank for unannotated rows).
pub fn write_comments_csv<W: io::Write>(records: &[CommentRecord], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id", "comment_text", "target"];
    header.extend(DEFAULT_IDENTITY_COLUMNS);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.id.clone(), r.text.clone(), round6(r.toxicity)];
        for c in DEFAULT_IDENTITY_COLUMNS {
            row.push(match &r.identity_fractions {
                Some(f) => round6(f.get(c).copied().unwrap_or(0.0)),
                None => String::new(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Template file text covering the three generatable categories. Variant
/// rules swap insults and near-synonyms so synthetic toxic comments reach the
/// whole insult vocabulary.
pub fn starter_templates_tsv() -> String {
    let insult_variants = |word: &str, stride: usize| -> String {
        INSULTS
            .iter()
            .filter(|w| **w != word)
            .step_by(stride)
            .map(|w| format!("{word}=>{w}"))
            .collect::<Vec<_>>()
            .join("|")
    };
    let mut out = String::from("# category\tpattern\tvariants (| between rules, ; between substitutions)\n");
    let toxic_identity = [
        ("all {identity} people are {slur} idiot types", "idiot"),
        ("{identity} folks are nothing but {slur} trash", "trash"),
        ("get lost you {slur} {identity} moron", "moron"),
        ("every {identity} voter is a {slur} clown", "clown"),
        ("{identity} people are {slur} and pathetic", "pathetic"),
        ("no one wants you {identity} {slur} scum here", "scum"),
    ];
    for (pattern, word) in toxic_identity {
        let _ = writeln!(out, "toxic_identity\t{pattern}\t{}", insult_variants(word, 2));
    }
    let toxic_plain = [
        ("you are a stupid fool and everyone knows it", "stupid"),
        ("what an idiot take from a complete loser", "idiot"),
        ("only a moron would write this garbage", "moron"),
        ("this writer is a pathetic clown", "pathetic"),
        ("shut up you worthless dimwit", "worthless"),
        ("the mayor is an ignorant hypocrite", "ignorant"),
    ];
    for (pattern, word) in toxic_plain {
        let _ = writeln!(out, "toxic_non_identity\t{pattern}\t{}", insult_variants(word, 1));
    }
    let non_toxic_identity = [
        ("I am {identity} and I feel that this issue is important to me.", "feel=>think;issue=>problem;important=>significant|feel=>believe|issue=>story"),
        ("{identity} families in our city deserve good schools", "good=>great|schools=>jobs|city=>state"),
        ("my {identity} neighbors have faced violence and hate", "violence=>attack|hate=>blame|faced=>seen"),
        ("the article about {identity} people and crime was wrong", "wrong=>bad|crime=>violence|article=>report"),
        ("{identity} workers are part of the local economy", "workers=>families|local=>state"),
        ("it is sad that {identity} people still face this problem", "sad=>terrible|problem=>shame|still=>really"),
        ("as a {identity} woman I agree with the council", "agree=>disagree|council=>mayor|woman=>man"),
        ("the {identity} community center opens next week", "week=>year|opens=>closes|center=>library"),
    ];
    for (pattern, variants) in non_toxic_identity {
        let _ = writeln!(out, "non_toxic_identity\t{pattern}\t{variants}");
    }
    out
}

pub fn insult_words() -> Vec<String> {
    INSULTS.iter().map(|s| s.to_string()).collect()
}

pub fn negative_topic_words() -> Vec<String> {
    NEGATIVE.iter().map(|s| s.to_string()).collect()
}

pub fn identity_term_list() -> String {
    IDENTITY_TERMS.iter().map(|(t, _)| format!("{t}\n")).collect()
}

pub fn placeholder_slur_list() -> String {
    let mut s = String::from("# innocuous stand-in tokens; replace with an operator-supplied list\n");
    PLACEHOLDER_SLURS.iter().for_each(|t| {
        let _ = writeln!(s, "{t}");
    });
    s
}

/// Clustered random vectors: insults share one direction, negative-topic
/// words sit half way to it, identity terms share another, and everything
/// else is small noise.
pub fn pseudo_embeddings(dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = seeded_rng(seed);
    let mut center = |scale: f64| -> Vec<f64> { (0..dim).map(|_| rng.gen_range(-scale..scale)).collect() };
    let toxic = center(1.0);
    let identity = center(1.0);
    let negative: Vec<f64> = toxic.iter().zip(center(0.5)).map(|(t, n)| 0.5 * t + n).collect();
    let mut vocab: Vec<(String, Option<&Vec<f64>>)> = Vec::new();
    vocab.extend(INSULTS.iter().chain(&PLACEHOLDER_SLURS).map(|w| (w.to_string(), Some(&toxic))));
    vocab.extend(NEGATIVE.iter().map(|w| (w.to_string(), Some(&negative))));
    vocab.extend(IDENTITY_TERMS.iter().map(|(w, _)| (w.to_string(), Some(&identity))));
    vocab.extend(NEUTRAL.iter().map(|w| (w.to_string(), None)));
    for t in tokenize(&starter_templates_tsv().replace(['{', '}', '\t', '|', ';', '='], " ").replace('>', " ")) {
        vocab.push((t, None));
    }
    let mut table = EmbeddingTable::new(dim);
    for (word, c) in vocab {
        if table.get(&word).is_some() {
            continue;
        }
        let v: Vec<f64> = (0..dim)
            .map(|k| c.map_or(0.0, |c| c[k]) + rng.gen_range(-0.3..0.3))
            .collect();
        table.insert(&word, v).expect("dimension matches");
    }
    table
}

/// Embedding text format: `word v1 ... vd` per line, sorted by word.
pub fn embeddings_text(table: &EmbeddingTable, words: &[String]) -> String {
    let mut out = String::new();
    for w in words {
        if let Some(v) = table.get(w) {
            out.push_str(w);
            for x in v {
                let _ = write!(out, " {}", round6(*x));
            }
            out.push('\n');
        }
    }
    out
}

/// Every word the planted generators can emit, sorted and deduplicated.
pub fn planted_vocabulary() -> Vec<String> {
    let mut words: Vec<String> = INSULTS
        .iter()
        .chain(&PLACEHOLDER_SLURS)
        .chain(&NEGATIVE)
        .chain(NEUTRAL)
        .map(|w| w.to_string())
        .chain(IDENTITY_TERMS.iter().map(|(w, _)| w.to_string()))
        .chain(tokenize(&starter_templates_tsv().replace(['{', '}', '\t', '|', ';', '='], " ").replace('>', " ")))
        .collect();
    words.sort();
    words.dedup();
    words
}

/// Non-toxic political tweets in `Party,Handle,Tweet` layout; most mention
/// an identity term.
pub fn planted_tweets(count: usize, seed: u64) -> Vec<[String; 3]> {
    let mut rng = seeded_rng(seed);
    let parties = ["Democrat", "Republican"];
    (0..count)
        .map(|i| {
            let party = parties[i % 2];
            let handle = format!("rep_{:03}", rng.gen_range(0..60));
            let len = rng.gen_range(6..=14);
            let mut tokens: Vec<String> = (0..len).map(|_| NEUTRAL.choose(&mut rng).unwrap().to_string()).collect();
            if rng.gen_bool(0.7) {
                let (term, _) = IDENTITY_TERMS.choose(&mut rng).unwrap();
                insert_random(&mut rng, &mut tokens, term);
            }
            if rng.gen_bool(0.3) {
                let w = NEGATIVE.choose(&mut rng).unwrap();
                insert_random(&mut rng, &mut tokens, w);
            }
            [party.to_string(), format!("@{handle}"), sentence(&tokens)]
        })
        .collect()
}

/// Scores from a crude external scorer that reacts to identity terms and
/// negative words, one per tweet row.
pub fn planted_external_scores(tweets: &[[String; 3]], seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed);
    let identity: Vec<&str> = IDENTITY_TERMS.iter().map(|(t, _)| *t).collect();
    tweets
        .iter()
        .map(|t| {
            let tokens = tokenize(&t[2]);
            let id = tokens.iter().any(|w| identity.contains(&w.as_str()));
            let neg = tokens.iter().filter(|w| NEGATIVE.contains(&w.as_str())).count() as f64;
            let base = 0.1 + if id { 0.2 } else { 0.0 } + 0.2 * neg;
            (base + rng.gen_range(-0.15..0.15)).clamp(0.0, 1.0)
        })
        .collect()
}

/// Paths of a written desk bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct DeskBundle {
    pub comments: PathBuf,
    pub embeddings: PathBuf,
    pub templates: PathBuf,
    pub identity_terms: PathBuf,
    pub slur_terms: PathBuf,
    pub tweets: PathBuf,
    pub external_scores: PathBuf,
}

/// Writes a complete input set for experiments into `dir`.
pub fn write_desk_bundle(dir: &Path, spec: &PlantedSpec, tweets: usize) -> io::Result<DeskBundle> {
    fs::create_dir_all(dir)?;
    let b = DeskBundle {
        comments: dir.join("comments.csv"),
        embeddings: dir.join("embeddings_25d.txt"),
        templates: dir.join("templates.tsv"),
        identity_terms: dir.join("identity_terms.txt"),
        slur_terms: dir.join("slur_placeholders.txt"),
        tweets: dir.join("tweets.csv"),
        external_scores: dir.join("external_scores.csv"),
    };
    let mut csv_bytes = Vec::new();
    write_comments_csv(&planted_comments(spec), &mut csv_bytes).map_err(io::Error::other)?;
    fs::write(&b.comments, csv_bytes)?;
    let table = pseudo_embeddings(25, spec.seed ^ 0xE3B);
    fs::write(&b.embeddings, embeddings_text(&table, &planted_vocabulary()))?;
    fs::write(&b.templates, starter_templates_tsv())?;
    fs::write(&b.identity_terms, identity_term_list())?;
    fs::write(&b.slur_terms, placeholder_slur_list())?;
    let tw = planted_tweets(tweets, spec.seed ^ 0x7EE7);
    let mut w = csv::Writer::from_path(&b.tweets).map_err(io::Error::other)?;
    w.write_record(["Party", "Handle", "Tweet"]).map_err(io::Error::other)?;
    for t in &tw {
        w.write_record(t).map_err(io::Error::other)?;
    }
    w.flush()?;
    let scores = planted_external_scores(&tw, spec.seed ^ 0x5C0E);
    let mut s = String::from("id,score\n");
    for (i, v) in scores.iter().enumerate() {
        let _ = writeln!(s, "{},{}", i + 1, round6(*v));
    }
    fs::write(&b.external_scores, s)?;
    Ok(b)
}
