//! Tokenization and template-based generation of synthetic labeled comments.
//!
//! Templates carry an `{identity}` slot (and optionally a `{slur}` slot for
//! toxic templates) plus a list of synonym-substitution variants. Generation
//! enumerates the (template, term, slur, variant) product space per category
//! and draws from it with a seeded shuffle.

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::corpus::{Category, IdentityFlag, LabeledExample, Origin};
use crate::numerics::seeded_rng;

pub const IDENTITY_SLOT: &str = "{identity}";
pub const SLUR_SLOT: &str = "{slur}";

#[derive(Debug, Error)]
pub enum TextError {
    #[error("template line {line}: {message}")]
    Template { line: usize, message: String },
    #[error("lexicon: {0}")]
    Lexicon(String),
    #[error("no template combinations available for category {0}")]
    EmptySpace(Category),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Lowercases and splits on non-alphanumeric boundaries. Apostrophes are kept
/// when they sit between word characters ("i'm" stays one token).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        let ch = if ch == '\u{2019}' { '\'' } else { ch };
        if ch.is_alphanumeric() || ch == '\'' {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            push_token(&mut tokens, &mut current);
        }
    }
    if !current.is_empty() {
        push_token(&mut tokens, &mut current);
    }
    tokens
}

fn push_token(tokens: &mut Vec<String>, current: &mut String) {
    let trimmed = current.trim_matches('\'');
    if !trimmed.is_empty() {
        tokens.push(trimmed.to_string());
    }
    current.clear();
}

/// One synonym substitution: every whole-word occurrence of `from` becomes `to`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Substitution {
    pub from: String,
    pub to: String,
}

/// A set of substitutions applied together to produce one lexical variant.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VariantRule {
    pub substitutions: Vec<Substitution>,
}

impl VariantRule {
    pub fn new(pairs: &[(&str, &str)]) -> Self {
        Self {
            substitutions: pairs
                .iter()
                .map(|(f, t)| Substitution {
                    from: f.to_string(),
                    to: t.to_string(),
                })
                .collect(),
        }
    }

    pub fn apply(&self, pattern: &str) -> String {
        self.substitutions
            .iter()
            .fold(pattern.to_string(), |acc, s| replace_word(&acc, &s.from, &s.to))
    }
}

/// Case-insensitive whole-word replacement.
fn replace_word(text: &str, from: &str, to: &str) -> String {
    if from.is_empty() {
        return text.to_string();
    }
    let lower = text.to_lowercase();
    let needle = from.to_lowercase();
    // Lowercasing can change byte lengths for some scripts; fall back to no-op.
    if lower.len() != text.len() {
        return text.to_string();
    }
    let is_word = |c: char| c.is_alphanumeric() || c == '\'';
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    let mut search = 0;
    while let Some(found) = lower[search..].find(&needle) {
        let start = search + found;
        let end = start + needle.len();
        let before_ok = text[..start].chars().next_back().is_none_or(|c| !is_word(c));
        let after_ok = text[end..].chars().next().is_none_or(|c| !is_word(c));
        if before_ok && after_ok {
            out.push_str(&text[last..start]);
            out.push_str(to);
            last = end;
        }
        search = start + needle.len().max(1);
        while search < lower.len() && !lower.is_char_boundary(search) {
            search += 1;
        }
    }
    out.push_str(&text[last..]);
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub pattern: String,
    pub category: Category,
    /// Additional variants; the unmodified pattern is always variant zero.
    pub variants: Vec<VariantRule>,
}

impl Template {
    pub fn new(category: Category, pattern: &str, variants: Vec<VariantRule>) -> Result<Self, String> {
        let template = Self {
            pattern: pattern.to_string(),
            category,
            variants,
        };
        template.validate()?;
        Ok(template)
    }

    fn validate(&self) -> Result<(), String> {
        let has_identity = self.pattern.contains(IDENTITY_SLOT);
        let has_slur = self.pattern.contains(SLUR_SLOT);
        match self.category {
            Category::ToxicIdentity if !has_identity => {
                return Err("toxic identity templates need an {identity} slot".into())
            }
            Category::NonToxicIdentity if !has_identity => {
                return Err("non-toxic identity templates need an {identity} slot".into())
            }
            Category::NonToxicIdentity if has_slur => {
                return Err("{slur} is only allowed in toxic identity templates".into())
            }
            Category::ToxicNonIdentity if has_identity || has_slur => {
                return Err("toxic non-identity templates cannot reference identity slots".into())
            }
            Category::NonToxicNonIdentity => {
                return Err("non-toxic non-identity comments are not synthesized".into())
            }
            _ => {}
        }
        for rule in &self.variants {
            for s in &rule.substitutions {
                if s.from.trim().is_empty() {
                    return Err("variant source phrase is empty".into());
                }
                for side in [&s.from, &s.to] {
                    if side.contains('{') || side.contains('}') {
                        return Err(format!("variant phrase {side:?} would touch a slot marker"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn variant_count(&self) -> usize {
        self.variants.len() + 1
    }

    pub fn variant_pattern(&self, index: usize) -> String {
        match index {
            0 => self.pattern.clone(),
            i => self.variants[i - 1].apply(&self.pattern),
        }
    }
}

/// Parses `category<TAB>pattern<TAB>variants` lines. Variants are separated by
/// `|`; each variant is a `;`-separated list of `from=>to` substitutions.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_templates<R: BufRead>(reader: R) -> Result<Vec<Template>, TextError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(TextError::Template {
                line: lineno,
                message: format!("expected 2 or 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let category: Category = fields[0].trim().parse().map_err(|e: String| TextError::Template {
            line: lineno,
            message: e,
        })?;
        let variants = match fields.get(2) {
            Some(spec) => parse_variants(spec).map_err(|message| TextError::Template {
                line: lineno,
                message,
            })?,
            None => Vec::new(),
        };
        let template = Template::new(category, fields[1].trim(), variants)
            .map_err(|message| TextError::Template { line: lineno, message })?;
        out.push(template);
    }
    Ok(out)
}

fn parse_variants(spec: &str) -> Result<Vec<VariantRule>, String> {
    let mut rules = Vec::new();
    for group in spec.split('|').map(str::trim).filter(|g| !g.is_empty()) {
        let mut rule = VariantRule::default();
        for pair in group.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (from, to) = pair
                .split_once("=>")
                .ok_or_else(|| format!("variant substitution {pair:?} lacks '=>'"))?;
            rule.substitutions.push(Substitution {
                from: from.trim().to_string(),
                to: to.trim().to_string(),
            });
        }
        rules.push(rule);
    }
    Ok(rules)
}

pub fn format_templates(templates: &[Template]) -> String {
    let mut out = String::new();
    for t in templates {
        let variants: Vec<String> = t
            .variants
            .iter()
            .map(|r| {
                r.substitutions
                    .iter()
                    .map(|s| format!("{}=>{}", s.from, s.to))
                    .collect::<Vec<_>>()
                    .join(";")
            })
            .collect();
        out.push_str(&format!("{}\t{}\t{}\n", t.category, t.pattern, variants.join("|")));
    }
    out
}

/// Identity terms and slur stand-ins used to fill template slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermLexicon {
    identity_terms: Vec<String>,
    slur_terms: Vec<String>,
}

impl TermLexicon {
    pub fn new<I, J, S, T>(identity_terms: I, slur_terms: J) -> Result<Self, TextError>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let identity_terms = normalize_terms(identity_terms);
        let slur_terms = normalize_terms(slur_terms);
        if identity_terms.is_empty() {
            return Err(TextError::Lexicon("identity term list is empty".into()));
        }
        if slur_terms.is_empty() {
            return Err(TextError::Lexicon("slur term list is empty".into()));
        }
        Ok(Self {
            identity_terms,
            slur_terms,
        })
    }

    pub fn identity_terms(&self) -> &[String] {
        &self.identity_terms
    }

    pub fn slur_terms(&self) -> &[String] {
        &self.slur_terms
    }
}

/// Lowercased, trimmed, deduplicated (first occurrence wins), blanks dropped.
fn normalize_terms<I, S>(terms: I) -> Vec<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for t in terms {
        let t = t.as_ref().trim().to_lowercase();
        if !t.is_empty() && !t.starts_with('#') && seen.insert(t.clone()) {
            out.push(t);
        }
    }
    out
}

/// Reads a one-term-per-line list; `#` comments and blank lines are skipped.
pub fn read_term_list<R: BufRead>(reader: R) -> Result<Vec<String>, TextError> {
    let mut lines = Vec::new();
    for line in reader.lines() {
        lines.push(line?);
    }
    Ok(normalize_terms(lines))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Combination {
    template: usize,
    term: usize,
    slur: usize,
    variant: usize,
}

impl fmt::Display for Combination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}-i{}-s{}-v{}", self.template, self.term, self.slur, self.variant)
    }
}

fn combination_space(templates: &[(usize, &Template)], lexicon: &TermLexicon) -> Vec<Combination> {
    let mut space = Vec::new();
    for &(ti, t) in templates {
        let terms = if t.pattern.contains(IDENTITY_SLOT) {
            lexicon.identity_terms.len()
        } else {
            1
        };
        let slurs = if t.pattern.contains(SLUR_SLOT) {
            lexicon.slur_terms.len()
        } else {
            1
        };
        for term in 0..terms {
            for slur in 0..slurs {
                for variant in 0..t.variant_count() {
                    space.push(Combination {
                        template: ti,
                        term,
                        slur,
                        variant,
                    });
                }
            }
        }
    }
    space
}

fn render(template: &Template, lexicon: &TermLexicon, combo: &Combination) -> String {
    let text = template
        .variant_pattern(combo.variant)
        .replace(IDENTITY_SLOT, &lexicon.identity_terms[combo.term])
        .replace(SLUR_SLOT, &lexicon.slur_terms[combo.slur]);
    text.to_lowercase()
}

/// Categories that can be generated from templates, in generation order.
pub const SYNTHESIZABLE: [Category; 3] = [
    Category::ToxicIdentity,
    Category::ToxicNonIdentity,
    Category::NonToxicIdentity,
];

/// Generates `per_category_target` synthetic examples for every category that
/// has templates. Use [`synthesize_for`] to control per-category counts.
pub fn synthesize_comments(
    templates: &[Template],
    lexicon: &TermLexicon,
    per_category_target: usize,
    seed: u64,
) -> Result<Vec<LabeledExample>, TextError> {
    let targets: Vec<(Category, usize)> = SYNTHESIZABLE
        .iter()
        .filter(|c| templates.iter().any(|t| t.category == **c))
        .map(|&c| (c, per_category_target))
        .collect();
    synthesize_for(templates, lexicon, &targets, seed)
}

/// Generates exactly `count` examples for each requested category. Distinct
/// combinations are drawn first; once the space is exhausted, draws repeat
/// with replacement.
pub fn synthesize_for(
    templates: &[Template],
    lexicon: &TermLexicon,
    targets: &[(Category, usize)],
    seed: u64,
) -> Result<Vec<LabeledExample>, TextError> {
    let mut rng = seeded_rng(seed);
    let mut out = Vec::new();
    for &(category, count) in targets {
        if count == 0 {
            continue;
        }
        let members: Vec<(usize, &Template)> = templates
            .iter()
            .enumerate()
            .filter(|(_, t)| t.category == category)
            .collect();
        let mut space = combination_space(&members, lexicon);
        if space.is_empty() {
            return Err(TextError::EmptySpace(category));
        }
        space.shuffle(&mut rng);
        let mut drawn: Vec<Combination> = space.iter().copied().take(count).collect();
        while drawn.len() < count {
            drawn.push(space[rng.gen_range(0..space.len())]);
        }
        let identity = if category.is_identity() {
            IdentityFlag::Identity
        } else {
            IdentityFlag::NonIdentity
        };
        for (n, combo) in drawn.iter().enumerate() {
            let text = render(&templates[combo.template], lexicon, combo);
            out.push(LabeledExample {
                id: format!("synth-{}-{n}-{combo}", category.slug()),
                tokens: tokenize(&text),
                text,
                label: u8::from(category.is_toxic()),
                identity,
                category: Some(category),
                origin: Origin::Synthetic,
            });
        }
    }
    Ok(out)
}
