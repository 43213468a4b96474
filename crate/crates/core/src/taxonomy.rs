//! Label normalization, class taxonomy with granularity tiers, and
//! prediction-vs-truth matching.
//!
//! Tiers describe who can reliably assign a label: tier 1 (`*`) anyone,
//! tier 2 (`**`) someone with passing knowledge, tier 3 (`***`) experts only.
//!
//! Taxonomies load from TOML:
//!
//! ```toml
//! [[label]]
//! name = "dog"
//! tier = 1
//!
//! [[label]]
//! name = "dachshund"
//! tier = 2
//! parent = "dog"
//!
//! [synonyms]
//! puppy = "dog"
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::labeling::ParsedLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Tier(u8);

impl Tier {
    pub const COMMON: Tier = Tier(1);
    pub const PASSING: Tier = Tier(2);
    pub const EXPERT: Tier = Tier(3);

    pub fn new(level: u8) -> Option<Tier> {
        (1..=3).contains(&level).then_some(Tier(level))
    }

    pub fn level(self) -> u8 {
        self.0
    }

    /// `*`, `**` or `***`.
    pub fn badge(self) -> &'static str {
        &"***"[..self.0 as usize]
    }
}

impl TryFrom<u8> for Tier {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Tier::new(v).ok_or_else(|| format!("tier must be 1, 2 or 3, got {v}"))
    }
}

impl From<Tier> for u8 {
    fn from(t: Tier) -> u8 {
        t.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalLabel {
    pub canonical: String,
    pub tier: Tier,
    pub parent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaxonomyError {
    #[error("label is blank")]
    EmptyLabel,
    #[error("`{0}` is not in the taxonomy")]
    NotInTaxonomy(String),
    #[error("invalid taxonomy: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Taxonomy {
    labels: BTreeMap<String, CanonicalLabel>,
    synonyms: BTreeMap<String, String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct TaxonomyDoc {
    #[serde(default, rename = "label")]
    labels: Vec<LabelEntry>,
    #[serde(default)]
    synonyms: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelEntry {
    name: String,
    tier: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent: Option<String>,
}

/// Casefold, trim, collapse whitespace and strip trailing `.,;:!?`.
fn clean(raw: &str) -> String {
    let mut s = raw.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
    loop {
        let stripped = s.trim_end_matches(['.', ',', ';', ':', '!', '?']).trim_end();
        if stripped.len() == s.len() {
            break;
        }
        s = stripped.to_string();
    }
    s
}

impl Taxonomy {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds and validates a taxonomy. Names are cleaned on the way in.
    pub fn new(
        labels: impl IntoIterator<Item = (String, Tier, Option<String>)>,
        synonyms: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, TaxonomyError> {
        let mut tax = Taxonomy::default();
        for (name, tier, parent) in labels {
            let canonical = clean(&name);
            if canonical.is_empty() {
                return Err(TaxonomyError::Invalid("blank label name".into()));
            }
            let parent = parent.map(|p| clean(&p));
            let entry = CanonicalLabel { canonical: canonical.clone(), tier, parent };
            if tax.labels.insert(canonical.clone(), entry).is_some() {
                return Err(TaxonomyError::Invalid(format!("duplicate label `{canonical}`")));
            }
        }
        for (alias, target) in synonyms {
            tax.synonyms.insert(clean(&alias), clean(&target));
        }
        tax.check()?;
        Ok(tax)
    }

    fn check(&self) -> Result<(), TaxonomyError> {
        for label in self.labels.values() {
            if let Some(parent) = &label.parent {
                let p = self.labels.get(parent).ok_or_else(|| {
                    TaxonomyError::Invalid(format!("parent `{parent}` of `{}` is not a label", label.canonical))
                })?;
                if p.tier > label.tier {
                    return Err(TaxonomyError::Invalid(format!(
                        "`{}` (tier {}) is finer than its child `{}` (tier {})",
                        p.canonical, p.tier.0, label.canonical, label.tier.0
                    )));
                }
            }
            let mut seen = HashSet::new();
            let mut cursor = Some(label);
            while let Some(l) = cursor {
                if !seen.insert(&l.canonical) {
                    return Err(TaxonomyError::Invalid(format!("parent cycle through `{}`", l.canonical)));
                }
                cursor = l.parent.as_ref().and_then(|p| self.labels.get(p));
            }
        }
        for (alias, target) in &self.synonyms {
            if alias.is_empty() {
                return Err(TaxonomyError::Invalid("blank synonym".into()));
            }
            if self.labels.contains_key(alias) {
                return Err(TaxonomyError::Invalid(format!("synonym `{alias}` shadows a label")));
            }
            if !self.labels.contains_key(target) {
                return Err(TaxonomyError::Invalid(format!("synonym target `{target}` is not a label")));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, TaxonomyError> {
        let doc: TaxonomyDoc = toml::from_str(text).map_err(|e| TaxonomyError::Invalid(e.to_string()))?;
        let mut labels = Vec::with_capacity(doc.labels.len());
        for entry in doc.labels {
            let tier = Tier::try_from(entry.tier).map_err(TaxonomyError::Invalid)?;
            labels.push((entry.name, tier, entry.parent));
        }
        Taxonomy::new(labels, doc.synonyms)
    }

    pub fn to_toml(&self) -> String {
        let doc = TaxonomyDoc {
            labels: self
                .labels
                .values()
                .map(|l| LabelEntry { name: l.canonical.clone(), tier: l.tier.0, parent: l.parent.clone() })
                .collect(),
            synonyms: self.synonyms.clone(),
        };
        toml::to_string(&doc).expect("taxonomy serializes")
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &CanonicalLabel> {
        self.labels.values()
    }

    pub fn get(&self, canonical: &str) -> Option<&CanonicalLabel> {
        self.labels.get(canonical)
    }

    /// Parent chain of a canonical label, nearest first.
    pub fn ancestors(&self, canonical: &str) -> Vec<&str> {
        let mut out = Vec::new();
        let mut cursor = self.labels.get(canonical).and_then(|l| l.parent.as_deref());
        while let Some(p) = cursor {
            out.push(p);
            cursor = self.labels.get(p).and_then(|l| l.parent.as_deref());
        }
        out
    }

    /// Cats and dogs with a handful of common breeds.
    pub fn asirra() -> Self {
        Self::from_toml(include_str!("../taxonomies/asirra.toml")).expect("shipped taxonomy is valid")
    }

    /// Zoo animals: storks, rhinoceroses, giraffes and cattle.
    pub fn zoo() -> Self {
        Self::from_toml(include_str!("../taxonomies/zoo.toml")).expect("shipped taxonomy is valid")
    }

    /// Looks up a shipped taxonomy by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "asirra" => Some(Self::asirra()),
            "zoo" => Some(Self::zoo()),
            "empty" => Some(Self::empty()),
            _ => None,
        }
    }
}

/// Normalizes free text into canonical form, mapping synonyms. Unknown
/// strings pass through cleaned but unmapped.
pub fn normalize(raw: &str, taxonomy: &Taxonomy) -> Result<String, TaxonomyError> {
    let cleaned = clean(raw);
    if cleaned.is_empty() {
        return Err(TaxonomyError::EmptyLabel);
    }
    Ok(taxonomy.synonyms.get(&cleaned).cloned().unwrap_or(cleaned))
}

pub fn assign_tier(canonical: &str, taxonomy: &Taxonomy) -> Result<Tier, TaxonomyError> {
    taxonomy.get(canonical).map(|l| l.tier).ok_or_else(|| TaxonomyError::NotInTaxonomy(canonical.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchPolicy {
    /// Normalized fine label must equal the truth.
    Exact,
    /// Base class (explicit or via the taxonomy) must equal the truth.
    #[default]
    BaseClass,
    /// Truth may be the fine label or any of its taxonomy ancestors.
    Hierarchical,
}

impl MatchPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            MatchPolicy::Exact => "exact",
            MatchPolicy::BaseClass => "base",
            MatchPolicy::Hierarchical => "hier",
        }
    }
}

impl fmt::Display for MatchPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MatchPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(MatchPolicy::Exact),
            "base" | "base_class" | "baseclass" => Ok(MatchPolicy::BaseClass),
            "hier" | "hierarchical" => Ok(MatchPolicy::Hierarchical),
            other => Err(format!("unknown match policy `{other}` (expected exact, base or hier)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchedOn {
    Fine,
    Base,
    Ancestor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchResult {
    pub matched: bool,
    pub matched_on: Option<MatchedOn>,
}

impl MatchResult {
    pub const MISS: MatchResult = MatchResult { matched: false, matched_on: None };

    fn hit(on: MatchedOn) -> Self {
        MatchResult { matched: true, matched_on: Some(on) }
    }
}

/// Compares a parsed prediction with a ground-truth class under `policy`.
pub fn match_label(
    pred: &ParsedLabel,
    truth: &str,
    policy: MatchPolicy,
    taxonomy: &Taxonomy,
) -> Result<MatchResult, TaxonomyError> {
    let truth = normalize(truth, taxonomy)?;
    let fine = normalize(&pred.fine, taxonomy)?;
    let result = match policy {
        MatchPolicy::Exact => {
            if fine == truth {
                MatchResult::hit(MatchedOn::Fine)
            } else {
                MatchResult::MISS
            }
        }
        MatchPolicy::BaseClass => {
            let base = pred.base.as_deref().map(|b| normalize(b, taxonomy)).transpose()?;
            if base.as_deref() == Some(truth.as_str()) {
                MatchResult::hit(MatchedOn::Base)
            } else if taxonomy.ancestors(&fine).contains(&truth.as_str()) {
                MatchResult::hit(MatchedOn::Ancestor)
            } else if fine == truth {
                MatchResult::hit(MatchedOn::Fine)
            } else {
                MatchResult::MISS
            }
        }
        MatchPolicy::Hierarchical => {
            if fine == truth {
                MatchResult::hit(MatchedOn::Fine)
            } else if taxonomy.ancestors(&fine).contains(&truth.as_str()) {
                MatchResult::hit(MatchedOn::Ancestor)
            } else {
                MatchResult::MISS
            }
        }
    };
    Ok(result)
}

/// The class a prediction names at the level a policy scores:
/// the fine label for `Exact`, otherwise the base class (explicit base,
/// else the taxonomy root of the fine label, else the fine label itself).
pub fn predicted_class(pred: &ParsedLabel, policy: MatchPolicy, taxonomy: &Taxonomy) -> Result<String, TaxonomyError> {
    let fine = normalize(&pred.fine, taxonomy)?;
    if policy == MatchPolicy::Exact {
        return Ok(fine);
    }
    if let Some(base) = &pred.base {
        return normalize(base, taxonomy);
    }
    Ok(taxonomy.ancestors(&fine).last().map(|s| s.to_string()).unwrap_or(fine))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::parse_label_text;
    use proptest::prelude::*;

    fn three_tier() -> Taxonomy {
        Taxonomy::new(
            [
                ("bird".to_string(), Tier::COMMON, None),
                ("stork".to_string(), Tier::PASSING, Some("bird".to_string())),
                ("saddle-billed stork".to_string(), Tier::EXPERT, Some("stork".to_string())),
                ("dog".to_string(), Tier::COMMON, None),
                ("dachshund".to_string(), Tier::PASSING, Some("dog".to_string())),
            ],
            [],
        )
        .unwrap()
    }

    fn p(s: &str) -> ParsedLabel {
        parse_label_text(s).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let empty = Taxonomy::empty();
        assert_eq!(normalize("  DOG.", &empty).unwrap(), "dog");
        assert_eq!(normalize("Saddle-Billed   Stork!?", &empty).unwrap(), "saddle-billed stork");
        assert_eq!(normalize(" .. ", &empty), Err(TaxonomyError::EmptyLabel));

        let tax = Taxonomy::new(
            [("siamese".to_string(), Tier::PASSING, None)],
            [("siamese cat".to_string(), "siamese".to_string())],
        )
        .unwrap();
        assert_eq!(normalize("Siamese cat", &tax).unwrap(), "siamese");
    }

    #[test]
    fn tier_examples() {
        let tax = three_tier();
        assert_eq!(assign_tier("saddle-billed stork", &tax), Ok(Tier::EXPERT));
        assert_eq!(assign_tier("bird", &tax), Ok(Tier::COMMON));
        assert_eq!(assign_tier("unicorn", &tax), Err(TaxonomyError::NotInTaxonomy("unicorn".into())));
        assert_eq!(Tier::EXPERT.badge(), "***");
        assert_eq!(Tier::COMMON.badge(), "*");
    }

    #[test]
    fn match_examples() {
        let tax = three_tier();
        assert_eq!(
            match_label(&p("Dachshund (Dog)"), "dog", MatchPolicy::BaseClass, &tax).unwrap(),
            MatchResult { matched: true, matched_on: Some(MatchedOn::Base) }
        );
        assert_eq!(
            match_label(&p("Dachshund (Dog)"), "dachshund", MatchPolicy::Exact, &tax).unwrap(),
            MatchResult { matched: true, matched_on: Some(MatchedOn::Fine) }
        );
        for policy in [MatchPolicy::Exact, MatchPolicy::BaseClass, MatchPolicy::Hierarchical] {
            assert_eq!(match_label(&p("Giraffe"), "dog", policy, &tax).unwrap(), MatchResult::MISS);
        }
        assert_eq!(
            match_label(&p("Saddle-Billed Stork"), "bird", MatchPolicy::Hierarchical, &tax).unwrap().matched_on,
            Some(MatchedOn::Ancestor)
        );
        assert_eq!(
            match_label(&p("Dachshund"), "dog", MatchPolicy::BaseClass, &tax).unwrap().matched_on,
            Some(MatchedOn::Ancestor)
        );
        assert_eq!(match_label(&p("Dog"), "  ", MatchPolicy::Exact, &tax), Err(TaxonomyError::EmptyLabel));
    }

    #[test]
    fn predicted_class_levels() {
        let tax = three_tier();
        assert_eq!(predicted_class(&p("Dachshund (Dog)"), MatchPolicy::Exact, &tax).unwrap(), "dachshund");
        assert_eq!(predicted_class(&p("Dachshund (Dog)"), MatchPolicy::BaseClass, &tax).unwrap(), "dog");
        assert_eq!(predicted_class(&p("Saddle-billed stork"), MatchPolicy::BaseClass, &tax).unwrap(), "bird");
        assert_eq!(predicted_class(&p("Fox"), MatchPolicy::BaseClass, &tax).unwrap(), "fox");
    }

    #[test]
    fn invalid_taxonomies() {
        let bad_parent = Taxonomy::new([("a".to_string(), Tier::COMMON, Some("missing".to_string()))], []);
        assert!(matches!(bad_parent, Err(TaxonomyError::Invalid(_))));
        let inverted = Taxonomy::new(
            [("a".to_string(), Tier::EXPERT, None), ("b".to_string(), Tier::COMMON, Some("a".to_string()))],
            [],
        );
        assert!(inverted.is_err());
        let cycle = Taxonomy::new(
            [
                ("a".to_string(), Tier::COMMON, Some("b".to_string())),
                ("b".to_string(), Tier::COMMON, Some("a".to_string())),
            ],
            [],
        );
        assert!(cycle.is_err());
        let dangling_synonym = Taxonomy::new([("a".to_string(), Tier::COMMON, None)], [("x".into(), "y".into())]);
        assert!(dangling_synonym.is_err());
        assert!(Taxonomy::from_toml("[[label]]\nname = \"a\"\ntier = 4\n").is_err());
    }

    #[test]
    fn toml_round_trip_and_builtins() {
        for tax in [Taxonomy::asirra(), Taxonomy::zoo(), three_tier()] {
            assert_eq!(Taxonomy::from_toml(&tax.to_toml()).unwrap(), tax);
        }
        let asirra = Taxonomy::asirra();
        assert_eq!(assign_tier("cat", &asirra), Ok(Tier::COMMON));
        assert_eq!(asirra.ancestors("siamese cat"), vec!["cat"]);
        let zoo = Taxonomy::zoo();
        assert_eq!(assign_tier("saddle-billed stork", &zoo), Ok(Tier::EXPERT));
        assert_eq!(Taxonomy::builtin("nope"), None);
    }

    const FIXTURES: [&str; 8] = [
        "  DOG.",
        "Siamese cat (Cat)",
        "Saddle-Billed Stork",
        "Elephant   Rhinoceros!",
        "kitten",
        "German Shepherd",
        "Ankole-Watusi;",
        "puppy ?",
    ];

    #[test]
    fn normalize_is_idempotent_on_fixtures() {
        let tax = Taxonomy::asirra();
        for raw in FIXTURES {
            let once = normalize(raw, &tax).unwrap();
            assert_eq!(normalize(&once, &tax).unwrap(), once, "{raw}");
        }
    }

    proptest! {
        #[test]
        fn normalize_idempotent(raw in "[ A-Za-z.,;:!?\\-]{1,30}") {
            let tax = Taxonomy::asirra();
            if let Ok(once) = normalize(&raw, &tax) {
                prop_assert_eq!(normalize(&once, &tax).unwrap(), once);
            }
        }

        #[test]
        fn matching_ignores_case_and_padding(
            idx in 0usize..4,
            truth_idx in 0usize..4,
            pad_l in " {0,3}", pad_r in " {0,3}", upper in any::<bool>(),
            policy in prop::sample::select(vec![MatchPolicy::Exact, MatchPolicy::BaseClass, MatchPolicy::Hierarchical]),
        ) {
            let tax = Taxonomy::asirra();
            let preds = ["Dachshund (Dog)", "Siamese cat (Cat)", "Giraffe", "German Shepherd"];
            let truths = ["dog", "cat", "dachshund", "siamese cat"];
            let vary = |s: &str| {
                let s = if upper { s.to_uppercase() } else { s.to_lowercase() };
                format!("{pad_l}{s}{pad_r}")
            };
            let plain = match_label(&p(preds[idx]), truths[truth_idx], policy, &tax).unwrap();
            let varied = match_label(&p(&vary(preds[idx])), &vary(truths[truth_idx]), policy, &tax).unwrap();
            prop_assert_eq!(plain, varied);
        }

        #[test]
        fn base_class_at_least_as_permissive_when_parent_is_truth(idx in 0usize..4) {
            let tax = Taxonomy::asirra();
            let preds = ["Dachshund", "Siamese cat (Cat)", "Beagle (Dog)", "dog"];
            for truth in ["dog", "cat", "dachshund", "siamese cat", "beagle"] {
                let exact = match_label(&p(preds[idx]), truth, MatchPolicy::Exact, &tax).unwrap();
                let base = match_label(&p(preds[idx]), truth, MatchPolicy::BaseClass, &tax).unwrap();
                if exact.matched {
                    prop_assert!(base.matched);
                }
            }
        }

        #[test]
        fn tiers_in_range(level in 0u8..10) {
            match Tier::new(level) {
                Some(t) => prop_assert!((1..=3).contains(&t.level())),
                None => prop_assert!(level == 0 || level > 3),
            }
        }
    }
}
