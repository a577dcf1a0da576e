//! Architectural priors: a versioned catalog of model cards, one
//! representative pick per taxonomy category, and the distilled digest
//! that conditions root generation.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_SUMMARY_CHARS: usize = 1200;
pub const MANIFEST_FILE: &str = "catalog.toml";

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog not found at {0}")]
    CatalogNotFound(PathBuf),
    #[error("duplicate card `{0}`")]
    DuplicateCard(String),
    #[error("card `{card}` has unknown category `{category}`")]
    UnknownCategory { card: String, category: String },
    #[error("duplicate taxonomy entry `{0}`")]
    DuplicateCategory(String),
    #[error("invalid card `{card}`: {reason}")]
    InvalidCard { card: String, reason: String },
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleLength {
    Fixed(u64),
    Flexible(String),
}

impl Default for SampleLength {
    fn default() -> Self {
        SampleLength::Flexible("flexible".into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputConstraints {
    pub min_channels: u32,
    pub max_channels: u32,
    #[serde(default)]
    pub sample_length: SampleLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub name: String,
    pub category: String,
    pub summary: String,
    pub input_constraints: InputConstraints,
    pub param_estimate: u64,
    #[serde(default)]
    pub suitable_tasks: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct Manifest {
    version: String,
    taxonomy: Vec<String>,
    #[serde(default)]
    cards: Vec<ModelCard>,
}

/// An immutable, validated set of cards.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub version: String,
    pub taxonomy: Vec<String>,
    pub cards: Vec<ModelCard>,
}

const BUNDLED: &[(&str, &str)] = &[
    ("shallow_fbcsp_net.toml", include_str!("../catalog/shallow_fbcsp_net.toml")),
    ("eegnet.toml", include_str!("../catalog/eegnet.toml")),
    ("sleep_stager_chambers.toml", include_str!("../catalog/sleep_stager_chambers.toml")),
    ("eeg_conformer.toml", include_str!("../catalog/eeg_conformer.toml")),
    ("attn_sleep.toml", include_str!("../catalog/attn_sleep.toml")),
    ("biot.toml", include_str!("../catalog/biot.toml")),
    ("deep_sleep_net.toml", include_str!("../catalog/deep_sleep_net.toml")),
    ("gru_sequence_classifier.toml", include_str!("../catalog/gru_sequence_classifier.toml")),
];
const BUNDLED_MANIFEST: &str = include_str!("../catalog/catalog.toml");

fn parse<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, CatalogError> {
    toml::from_str(text).map_err(|e| CatalogError::Parse { path: path.to_path_buf(), message: e.to_string() })
}

impl Catalog {
    /// The catalog shipped with this crate.
    pub fn bundled() -> Catalog {
        let manifest: Manifest = parse(Path::new(MANIFEST_FILE), BUNDLED_MANIFEST).expect("bundled manifest");
        let cards = BUNDLED
            .iter()
            .map(|(name, text)| parse(Path::new(name), text).expect("bundled card"))
            .collect();
        Catalog::new(manifest.version, manifest.taxonomy, cards).expect("bundled catalog is valid")
    }

    /// Validates cards against the taxonomy.
    pub fn new(version: String, taxonomy: Vec<String>, cards: Vec<ModelCard>) -> Result<Catalog, CatalogError> {
        let mut seen = BTreeSet::new();
        for c in &taxonomy {
            if !seen.insert(c.as_str()) {
                return Err(CatalogError::DuplicateCategory(c.clone()));
            }
        }
        let mut names = BTreeSet::new();
        for card in &cards {
            if !names.insert(card.name.as_str()) {
                return Err(CatalogError::DuplicateCard(card.name.clone()));
            }
            if !seen.contains(card.category.as_str()) {
                return Err(CatalogError::UnknownCategory { card: card.name.clone(), category: card.category.clone() });
            }
            let invalid = |reason: &str| CatalogError::InvalidCard { card: card.name.clone(), reason: reason.into() };
            if card.summary.trim().is_empty() {
                return Err(invalid("summary is empty"));
            }
            if card.summary.chars().count() > MAX_SUMMARY_CHARS {
                return Err(invalid("summary exceeds 1200 characters"));
            }
            if card.input_constraints.min_channels > card.input_constraints.max_channels {
                return Err(invalid("min_channels > max_channels"));
            }
        }
        Ok(Catalog { version, taxonomy, cards })
    }

    pub fn is_empty(&self) -> bool {
        self.cards.is_empty()
    }
}

/// Loads a catalog directory (manifest plus one document per card) or a
/// single catalog document with inline `[[cards]]`.
pub fn load_catalog(path: &Path) -> Result<Catalog, CatalogError> {
    let meta = fs::metadata(path).map_err(|_| CatalogError::CatalogNotFound(path.to_path_buf()))?;
    if meta.is_file() {
        let m: Manifest = parse(path, &fs::read_to_string(path)?)?;
        return Catalog::new(m.version, m.taxonomy, m.cards);
    }
    let manifest_path = path.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|_| CatalogError::CatalogNotFound(manifest_path.clone()))?;
    let m: Manifest = parse(&manifest_path, &text)?;
    let mut cards = m.cards;
    let mut files: Vec<PathBuf> = Vec::new();
    for dir in [path.to_path_buf(), path.join("cards")] {
        if !dir.is_dir() {
            continue;
        }
        for entry in fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.extension().is_some_and(|e| e == "toml") && p.file_name().is_some_and(|n| n != MANIFEST_FILE) {
                files.push(p);
            }
        }
    }
    files.sort();
    for f in files {
        cards.push(parse(&f, &fs::read_to_string(&f)?)?);
    }
    Catalog::new(m.version, m.taxonomy, cards)
}

/// Lower-cased alphanumeric tokens.
pub fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn overlap(card: &ModelCard, goal: &BTreeSet<String>) -> usize {
    let tags: BTreeSet<String> = card.suitable_tasks.iter().flat_map(|t| tokens(t)).collect();
    tags.intersection(goal).count()
}

/// One card per populated category, in taxonomy order. Within a category
/// the card whose task tags share the most tokens with the goal wins; ties
/// go to the lexicographically smallest name.
pub fn select_candidates<'a>(task_goal: &str, catalog: &'a Catalog) -> Result<Vec<&'a ModelCard>, CatalogError> {
    if catalog.is_empty() {
        return Err(CatalogError::EmptyCatalog);
    }
    let goal = tokens(task_goal);
    let mut best: BTreeMap<&str, (&ModelCard, usize)> = BTreeMap::new();
    for card in &catalog.cards {
        let score = overlap(card, &goal);
        let slot = best.entry(card.category.as_str()).or_insert((card, score));
        if score > slot.1 || (score == slot.1 && card.name < slot.0.name) {
            *slot = (card, score);
        }
    }
    Ok(catalog.taxonomy.iter().filter_map(|c| best.get(c.as_str()).map(|(card, _)| *card)).collect())
}

/// Condenses a card into prior text; implemented over a generative backend
/// by the LLM gateway.
pub trait Summarizer: Send + Sync {
    fn id(&self) -> String;
    fn condense(&self, card: &ModelCard) -> Result<String, String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorEntry {
    pub model: String,
    pub category: String,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorDigest {
    pub entries: Vec<PriorEntry>,
    pub catalog_version: String,
    /// Which summarization path produced the entries.
    pub provenance: String,
}

impl PriorDigest {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("### {} ({})\n{}\n\n", e.model, e.category, e.summary.trim()));
        }
        out.trim_end().to_string()
    }

    /// Fallback text for over-long prompts: names and categories only.
    pub fn render_brief(&self) -> String {
        self.entries.iter().map(|e| format!("- {} ({})", e.model, e.category)).collect::<Vec<_>>().join("\n")
    }
}

fn clip(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

/// Builds the prior digest. `None` copies card summaries verbatim; a failing
/// summarizer falls back to verbatim text and says so in the provenance.
pub fn summarize_priors(
    candidates: &[&ModelCard],
    catalog_version: &str,
    summarizer: Option<&dyn Summarizer>,
) -> Result<PriorDigest, CatalogError> {
    if candidates.is_empty() {
        return Err(CatalogError::EmptyCatalog);
    }
    let verbatim = || -> Vec<PriorEntry> {
        candidates
            .iter()
            .map(|c| PriorEntry { model: c.name.clone(), category: c.category.clone(), summary: clip(&c.summary, MAX_SUMMARY_CHARS) })
            .collect()
    };
    let Some(s) = summarizer else {
        return Ok(PriorDigest { entries: verbatim(), catalog_version: catalog_version.into(), provenance: "verbatim".into() });
    };
    let mut entries = Vec::with_capacity(candidates.len());
    for c in candidates {
        match s.condense(c) {
            Ok(text) if !text.trim().is_empty() => entries.push(PriorEntry {
                model: c.name.clone(),
                category: c.category.clone(),
                summary: clip(text.trim(), MAX_SUMMARY_CHARS),
            }),
            Ok(_) => {
                return Ok(PriorDigest {
                    entries: verbatim(),
                    catalog_version: catalog_version.into(),
                    provenance: format!("summarizer {} returned empty text for {}; verbatim fallback", s.id(), c.name),
                })
            }
            Err(e) => {
                return Ok(PriorDigest {
                    entries: verbatim(),
                    catalog_version: catalog_version.into(),
                    provenance: format!("summarizer {} failed ({e}); verbatim fallback", s.id()),
                })
            }
        }
    }
    Ok(PriorDigest { entries, catalog_version: catalog_version.into(), provenance: format!("summarizer {}", s.id()) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn card(name: &str, category: &str, tags: &[&str]) -> ModelCard {
        ModelCard {
            name: name.into(),
            category: category.into(),
            summary: format!("{name} summary"),
            input_constraints: InputConstraints { min_channels: 1, max_channels: 64, sample_length: SampleLength::default() },
            param_estimate: 1000,
            suitable_tasks: tags.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn taxonomy() -> Vec<String> {
        vec!["Convolution".into(), "Attention".into(), "Recurrent".into()]
    }

    #[test]
    fn bundled_catalog_covers_taxonomy() {
        let cat = Catalog::bundled();
        assert_eq!(cat.taxonomy.len(), 3);
        let picks = select_candidates("sleep staging on polysomnography", &cat).unwrap();
        assert_eq!(picks.len(), 3);
        assert_eq!(picks[0].category, "Convolution");
        assert_eq!(picks[0].name, "SleepStagerChambers2018");
    }

    #[test]
    fn duplicate_and_unknown() {
        let dup = vec![card("ShallowNet", "Convolution", &[]), card("ShallowNet", "Attention", &[])];
        assert!(matches!(Catalog::new("v".into(), taxonomy(), dup), Err(CatalogError::DuplicateCard(n)) if n == "ShallowNet"));
        let unk = vec![card("GNN", "Graph", &[])];
        assert!(matches!(Catalog::new("v".into(), taxonomy(), unk), Err(CatalogError::UnknownCategory { .. })));
    }

    #[test]
    fn tag_overlap_selects() {
        let cat = Catalog::new(
            "v".into(),
            taxonomy(),
            vec![card("AlphaConv", "Convolution", &["motor-imagery"]), card("ZetaConv", "Convolution", &["sleep-staging"])],
        )
        .unwrap();
        // goal tokens {sleep, staging, on, polysomnography}: ZetaConv shares 2, AlphaConv 0.
        let picks = select_candidates("sleep staging on polysomnography", &cat).unwrap();
        assert_eq!(picks.len(), 1);
        assert_eq!(picks[0].name, "ZetaConv");
    }

    #[test]
    fn ties_break_by_name() {
        let cat = Catalog::new(
            "v".into(),
            taxonomy(),
            vec![card("Beta", "Convolution", &["x"]), card("Alpha", "Convolution", &["x"])],
        )
        .unwrap();
        assert_eq!(select_candidates("x", &cat).unwrap()[0].name, "Alpha");
    }

    #[test]
    fn empty_catalog() {
        let cat = Catalog::new("v".into(), taxonomy(), vec![]).unwrap();
        assert!(matches!(select_candidates("x", &cat), Err(CatalogError::EmptyCatalog)));
    }

    struct Upper;
    impl Summarizer for Upper {
        fn id(&self) -> String {
            "upper".into()
        }
        fn condense(&self, card: &ModelCard) -> Result<String, String> {
            Ok(card.summary.to_uppercase())
        }
    }

    struct Broken;
    impl Summarizer for Broken {
        fn id(&self) -> String {
            "broken".into()
        }
        fn condense(&self, _: &ModelCard) -> Result<String, String> {
            Err("backend down".into())
        }
    }

    #[test]
    fn digest_paths() {
        let cards = [card("A", "Convolution", &[]), card("B", "Attention", &[]), card("C", "Recurrent", &[])];
        let refs: Vec<&ModelCard> = cards.iter().collect();
        let plain = summarize_priors(&refs, "v1", None).unwrap();
        assert_eq!(plain.entries.len(), 3);
        assert_eq!(plain.entries[1].summary, "B summary");
        assert_eq!(plain.provenance, "verbatim");

        let upper = summarize_priors(&refs, "v1", Some(&Upper)).unwrap();
        assert_eq!(upper.entries[0].summary, "A SUMMARY");

        let fallback = summarize_priors(&refs, "v1", Some(&Broken)).unwrap();
        assert_eq!(fallback.entries, plain.entries);
        assert!(fallback.provenance.contains("fallback"));
    }

    #[test]
    fn load_directory_and_single_document() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), "version = \"t1\"\ntaxonomy = [\"Convolution\", \"Attention\", \"Recurrent\"]\n").unwrap();
        for (file, name, cat) in [("a.toml", "A", "Convolution"), ("b.toml", "B", "Attention"), ("c.toml", "C", "Recurrent")] {
            fs::write(
                dir.path().join(file),
                format!("name = \"{name}\"\ncategory = \"{cat}\"\nsummary = \"s\"\nparam_estimate = 10\n[input_constraints]\nmin_channels = 1\nmax_channels = 4\n"),
            )
            .unwrap();
        }
        let cat = load_catalog(dir.path()).unwrap();
        assert_eq!(cat.cards.len(), 3);
        assert_eq!(cat.taxonomy.len(), 3);

        let single = dir.path().join("one.catalog");
        fs::write(
            &single,
            "version = \"t2\"\ntaxonomy = [\"Convolution\"]\n[[cards]]\nname = \"X\"\ncategory = \"Convolution\"\nsummary = \"s\"\nparam_estimate = 1\n[cards.input_constraints]\nmin_channels = 1\nmax_channels = 2\nsample_length = 3000\n",
        )
        .unwrap();
        let one = load_catalog(&single).unwrap();
        assert_eq!(one.cards[0].input_constraints.sample_length, SampleLength::Fixed(3000));
        assert!(matches!(load_catalog(&dir.path().join("nope")), Err(CatalogError::CatalogNotFound(_))));
    }
}
