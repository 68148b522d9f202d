use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Flavor, Formulation, FormulationError};
use crate::graph::RelationLabel;

/// Per-template settings stored in the `labels.json` sidecar.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateMeta {
    pub flavor: Flavor,
    /// Pairwise: canonical label to answer word.
    pub labels: BTreeMap<RelationLabel, String>,
    /// Pairwise: option descriptions rendered into `{choices}`.
    pub choices: BTreeMap<RelationLabel, String>,
    /// NLI: gold answer words.
    pub answers: NliAnswers,
    /// NLI: extra words read as entailment / non-entailment.
    pub affirmative: Vec<String>,
    pub negative: Vec<String>,
    /// NLI: statement patterns over `{x}` and `{y}`.
    pub hypothesis: BTreeMap<RelationLabel, String>,
    /// MRC: question patterns over `{event}`.
    pub questions: BTreeMap<RelationLabel, String>,
    /// MRC: answer text for an empty answer set.
    pub empty_answer: Option<String>,
    /// MRC: prefix before the answer list.
    pub answer_prefix: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliAnswers {
    pub yes: String,
    pub no: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub formulation: Formulation,
    pub body: String,
    pub meta: TemplateMeta,
}

/// Slot names a template body may use.
pub const KNOWN_SLOTS: &[&str] = &[
    "context",
    "premise",
    "hypothesis",
    "arg1",
    "arg2",
    "choices",
    "question",
    "events",
    "marker",
    "cot",
    "target",
];

/// Byte ranges and names of `{slot}` placeholders in `body`.
pub(crate) fn placeholders(body: &str) -> Vec<(usize, usize, &str)> {
    let bytes = body.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let rest = &body[i + 1..];
            let len = rest
                .bytes()
                .take_while(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'_')
                .count();
            if len > 0 && rest.as_bytes().get(len) == Some(&b'}') {
                out.push((i, i + len + 2, &rest[..len]));
                i += len + 2;
                continue;
            }
        }
        i += 1;
    }
    out
}

impl PromptTemplate {
    pub fn flavor(&self) -> Flavor {
        self.meta.flavor
    }

    pub fn slots(&self) -> BTreeSet<&str> {
        placeholders(&self.body)
            .into_iter()
            .map(|(_, _, s)| s)
            .collect()
    }

    /// Answer word for a canonical pairwise label.
    pub fn surface(&self, label: RelationLabel) -> &str {
        self.meta
            .labels
            .get(&label)
            .map(String::as_str)
            .unwrap_or_else(|| label.as_str())
    }

    /// Answer words and their canonical labels. When two labels share a word
    /// the earlier label in BEFORE, AFTER, COEX, NONE order owns it.
    pub fn label_vocabulary(&self) -> Vec<(String, RelationLabel)> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for label in RelationLabel::ALL {
            let word = self.surface(label).to_string();
            if seen.insert(word.to_lowercase()) {
                out.push((word, label));
            }
        }
        out
    }

    /// NLI answer vocabulary: `(word, entails)`.
    pub fn nli_vocabulary(&self) -> Vec<(String, bool)> {
        let mut out = Vec::new();
        let m = &self.meta;
        for w in std::iter::once(&m.answers.yes).chain(&m.affirmative) {
            if !w.is_empty() {
                out.push((w.clone(), true));
            }
        }
        for w in std::iter::once(&m.answers.no).chain(&m.negative) {
            if !w.is_empty() {
                out.push((w.clone(), false));
            }
        }
        out
    }

    fn validate(&self) -> Result<(), FormulationError> {
        let bad = |msg: String| {
            FormulationError::Template(format!("{}/{}: {msg}", self.formulation, self.id))
        };
        for (_, _, slot) in placeholders(&self.body) {
            if !KNOWN_SLOTS.contains(&slot) {
                return Err(bad(format!("unknown slot `{{{slot}}}`")));
            }
        }
        if !self.slots().contains("target") {
            return Err(bad("missing `{target}` slot".into()));
        }
        match (self.formulation, self.meta.flavor) {
            (_, Flavor::Plain) | (Formulation::Mrc | Formulation::Timeline, Flavor::Cot) => {}
            (Formulation::Timeline, Flavor::Code) => {}
            (f, fl) => return Err(bad(format!("flavor {fl} is not available for {f}"))),
        }
        let relations = [
            RelationLabel::Before,
            RelationLabel::After,
            RelationLabel::Coex,
        ];
        match self.formulation {
            Formulation::Nli => {
                if self.meta.answers.yes.is_empty() || self.meta.answers.no.is_empty() {
                    return Err(bad("NLI template needs yes/no answers".into()));
                }
                if let Some(r) = relations
                    .iter()
                    .find(|r| !self.meta.hypothesis.contains_key(r))
                {
                    return Err(bad(format!("no hypothesis pattern for {r}")));
                }
            }
            Formulation::Pairwise => {
                if let Some(r) = RelationLabel::ALL
                    .iter()
                    .find(|r| !self.meta.labels.contains_key(r))
                {
                    return Err(bad(format!("no answer word for {r}")));
                }
            }
            Formulation::Mrc => {
                if let Some(r) = relations
                    .iter()
                    .find(|r| !self.meta.questions.contains_key(r))
                {
                    return Err(bad(format!("no question pattern for {r}")));
                }
            }
            Formulation::Timeline => {}
        }
        Ok(())
    }
}

/// All templates, keyed by formulation and id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<(Formulation, String), PromptTemplate>,
}

macro_rules! builtin_dir {
    ($dir:literal, [$($id:literal),* $(,)?]) => {
        (
            $dir,
            include_str!(concat!("../../templates/", $dir, "/labels.json")),
            &[$(($id, include_str!(concat!("../../templates/", $dir, "/", $id, ".txt")))),*],
        )
    };
}

type BuiltinDir = (
    &'static str,
    &'static str,
    &'static [(&'static str, &'static str)],
);

const BUILTIN: &[BuiltinDir] = &[
    builtin_dir!(
        "nli",
        ["01", "02", "03", "04", "05", "06", "07", "08", "09", "10"]
    ),
    builtin_dir!(
        "pairwise",
        ["01", "02", "03", "04", "05", "06", "07", "08", "09", "10"]
    ),
    builtin_dir!(
        "mrc",
        ["01", "02", "03", "04", "05", "06", "07", "08", "09", "10", "cot-01", "cot-02"]
    ),
    builtin_dir!(
        "timeline",
        [
            "01", "02", "03", "04", "05", "06", "07", "08", "09", "10", "cot-01", "cot-02",
            "code-01", "code-02"
        ]
    ),
];

impl TemplateSet {
    /// The template assets compiled into the crate.
    pub fn builtin() -> Self {
        let mut set = TemplateSet::default();
        for (dir, labels, files) in BUILTIN {
            let formulation: Formulation = dir.parse().expect("builtin dir name");
            let metas: BTreeMap<String, TemplateMeta> =
                serde_json::from_str(labels).expect("builtin labels.json");
            for (id, body) in files.iter() {
                let meta = metas.get(*id).cloned().unwrap_or_default();
                set.insert(PromptTemplate {
                    id: id.to_string(),
                    formulation,
                    body: body.to_string(),
                    meta,
                })
                .expect("builtin template is valid");
            }
        }
        set
    }

    /// Loads `<root>/<formulation>/<id>.txt` plus each directory's `labels.json`.
    pub fn load(root: &Path) -> Result<Self, FormulationError> {
        let mut set = TemplateSet::default();
        for formulation in Formulation::ALL {
            let dir = root.join(formulation.as_str());
            if !dir.is_dir() {
                continue;
            }
            let labels_path = dir.join("labels.json");
            let metas: BTreeMap<String, TemplateMeta> = if labels_path.exists() {
                let raw = fs::read_to_string(&labels_path)?;
                serde_json::from_str(&raw).map_err(|e| {
                    FormulationError::Template(format!("{}: {e}", labels_path.display()))
                })?
            } else {
                BTreeMap::new()
            };
            let mut files: Vec<_> = fs::read_dir(&dir)?
                .flatten()
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "txt"))
                .collect();
            files.sort();
            for path in files {
                let id = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let body = fs::read_to_string(&path)?;
                let meta = metas.get(&id).cloned().unwrap_or_default();
                set.insert(PromptTemplate {
                    id,
                    formulation,
                    body,
                    meta,
                })?;
            }
        }
        Ok(set)
    }

    pub fn insert(&mut self, template: PromptTemplate) -> Result<(), FormulationError> {
        template.validate()?;
        self.templates
            .insert((template.formulation, template.id.clone()), template);
        Ok(())
    }

    pub fn get(&self, formulation: Formulation, id: &str) -> Option<&PromptTemplate> {
        self.templates.get(&(formulation, id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }

    /// Templates of one formulation and flavor, in id order.
    pub fn select(&self, formulation: Formulation, flavor: Flavor) -> Vec<&PromptTemplate> {
        self.templates
            .values()
            .filter(|t| t.formulation == formulation && t.meta.flavor == flavor)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_ten_plain_templates_each() {
        let set = TemplateSet::builtin();
        for f in Formulation::ALL {
            assert_eq!(set.select(f, Flavor::Plain).len(), 10, "{f}");
        }
    }

    #[test]
    fn flavors_restricted_by_formulation() {
        let set = TemplateSet::builtin();
        assert!(set.select(Formulation::Nli, Flavor::Cot).is_empty());
        assert!(set.select(Formulation::Pairwise, Flavor::Cot).is_empty());
        assert!(!set.select(Formulation::Mrc, Flavor::Cot).is_empty());
        assert!(!set.select(Formulation::Timeline, Flavor::Cot).is_empty());
        assert!(!set.select(Formulation::Timeline, Flavor::Code).is_empty());
        assert!(set.select(Formulation::Mrc, Flavor::Code).is_empty());

        let mut t = set.get(Formulation::Nli, "01").unwrap().clone();
        t.meta.flavor = Flavor::Cot;
        assert!(matches!(
            TemplateSet::default().insert(t),
            Err(FormulationError::Template(_))
        ));
    }

    #[test]
    fn placeholder_scan_ignores_other_braces() {
        let ph = placeholders("a {context} {Not} {} x{target}");
        let names: Vec<_> = ph.iter().map(|p| p.2).collect();
        assert_eq!(names, vec!["context", "target"]);
    }

    #[test]
    fn shared_answer_word_goes_to_first_label() {
        let mut t = TemplateSet::builtin()
            .get(Formulation::Pairwise, "01")
            .unwrap()
            .clone();
        t.meta.labels.insert(RelationLabel::None, "VAGUE".into());
        let vocab = t.label_vocabulary();
        assert_eq!(vocab.len(), 3);
        assert!(vocab.contains(&("VAGUE".to_string(), RelationLabel::Coex)));
    }

    #[test]
    fn load_matches_builtin() {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("templates");
        assert_eq!(TemplateSet::load(&root).unwrap(), TemplateSet::builtin());
    }
}
