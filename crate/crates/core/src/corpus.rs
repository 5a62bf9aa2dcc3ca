//! Prompt corpora and the rule templates that derive gendered variants.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{keys, Tags};

pub const BUILTIN_PREFIX: &str = "builtin:";

const BUILTINS: &[(&str, &str)] = &[
    ("professions", include_str!("../fixtures/corpus/professions.txt")),
    (
        "facial_structure",
        include_str!("../fixtures/corpus/facial_structure.txt"),
    ),
    ("hair", include_str!("../fixtures/corpus/hair.txt")),
    ("eyes", include_str!("../fixtures/corpus/eyes.txt")),
    ("eyebrows", include_str!("../fixtures/corpus/eyebrows.txt")),
    ("nose", include_str!("../fixtures/corpus/nose.txt")),
    ("mouth", include_str!("../fixtures/corpus/mouth.txt")),
    ("skin_features", include_str!("../fixtures/corpus/skin_features.txt")),
    ("facial_hair", include_str!("../fixtures/corpus/facial_hair.txt")),
    ("forehead", include_str!("../fixtures/corpus/forehead.txt")),
    ("chin", include_str!("../fixtures/corpus/chin.txt")),
    ("expression", include_str!("../fixtures/corpus/expression.txt")),
    ("ears", include_str!("../fixtures/corpus/ears.txt")),
    ("surnames", include_str!("../fixtures/corpus/surnames.txt")),
];

/// Professions recognised at the start of a profession prompt.
pub const PROFESSIONS: &[&str] = &[
    "doctor",
    "engineer",
    "teacher",
    "lawyer",
    "chef",
    "scientist",
    "police officer",
    "construction worker",
    "pilot",
    "farmer",
];

pub const DESCRIPTOR_TEMPLATE: &str = "A photo portrait of a person with {}.";
pub const GENDER_CONCEPTS: [&str; 2] = ["a photo portrait of a woman", "a photo portrait of a man"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub prompts: Vec<String>,
    /// Blank lines dropped while loading.
    pub skipped_blank: usize,
}

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

/// Splits `text` into one prompt per non-blank line.
pub fn parse_corpus(name: &str, text: &str) -> Corpus {
    let mut prompts = Vec::new();
    let mut skipped_blank = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            // A trailing newline does not produce a line, so this is a real gap.
            log::warn!("{name}:{}: blank line skipped", i + 1);
            skipped_blank += 1;
        } else {
            prompts.push(line.to_string());
        }
    }
    Corpus {
        name: name.to_string(),
        prompts,
        skipped_blank,
    }
}

/// Loads `builtin:<name>` or a text file with one prompt per line.
pub fn load_corpus(source: &str) -> Result<Corpus> {
    if let Some(name) = source.strip_prefix(BUILTIN_PREFIX) {
        let (_, text) = BUILTINS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown builtin corpus `{name}` (known: {})",
                builtin_names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        return Ok(parse_corpus(name, text));
    }
    let path = Path::new(source);
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus");
    Ok(parse_corpus(name, &text))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }
}

/// Phrasings of a gender marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenderVariant {
    /// "a female doctor"
    FemaleMale,
    /// "a woman doctor"
    WomanMan,
    /// "a doctor who is a woman"
    RelativeClause,
    /// "she is a doctor"
    Pronoun,
    /// "Sarah, a doctor"
    FirstName,
    /// "Ms. Smith, a doctor"
    Honorific,
}

impl GenderVariant {
    pub const ALL: [GenderVariant; 6] = [
        GenderVariant::FemaleMale,
        GenderVariant::WomanMan,
        GenderVariant::RelativeClause,
        GenderVariant::Pronoun,
        GenderVariant::FirstName,
        GenderVariant::Honorific,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GenderVariant::FemaleMale => "female_male",
            GenderVariant::WomanMan => "woman_man",
            GenderVariant::RelativeClause => "relative_clause",
            GenderVariant::Pronoun => "pronoun",
            GenderVariant::FirstName => "first_name",
            GenderVariant::Honorific => "honorific",
        }
    }
}

impl std::str::FromStr for GenderVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GenderVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown gender variant `{s}`")))
    }
}

impl std::fmt::Display for GenderVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A neutral profession prompt split around its profession noun.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfessionPrompt<'a> {
    pub profession: &'static str,
    /// Everything after the profession noun, e.g. " in a white coat, ...".
    pub rest: &'a str,
}

/// Recognises prompts of the form `A|An <profession><rest>`.
pub fn parse_profession(prompt: &str) -> Result<ProfessionPrompt<'_>> {
    let lower = prompt.to_lowercase();
    let body = ["a ", "an "]
        .iter()
        .find(|a| lower.starts_with(*a))
        .map(|a| a.len())
        .ok_or_else(|| Error::InvalidPrompt(format!("`{prompt}` does not start with an article")))?;
    PROFESSIONS
        .iter()
        .filter(|p| {
            lower[body..].starts_with(*p)
                && lower[body + p.len()..]
                    .chars()
                    .next()
                    .is_none_or(|c| !c.is_alphanumeric())
        })
        .max_by_key(|p| p.len())
        .map(|p| ProfessionPrompt {
            profession: p,
            rest: &prompt[body + p.len()..],
        })
        .ok_or_else(|| Error::InvalidPrompt(format!("`{prompt}` names no known profession")))
}

fn lower_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_lowercase().chain(c).collect(),
        None => String::new(),
    }
}

fn article(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "An",
        _ => "A",
    }
}

/// Gendered rewrite of a neutral profession prompt.
///
/// `surname` is only used by [`GenderVariant::Honorific`].
pub fn gendered_prompt(neutral: &str, variant: GenderVariant, gender: Gender, surname: &str) -> Result<String> {
    let p = parse_profession(neutral)?;
    let f = gender == Gender::Female;
    let pick = |a: &'static str, b: &'static str| if f { a } else { b };
    let lowered = lower_first(neutral);
    Ok(match variant {
        GenderVariant::FemaleMale => {
            let adj = pick("female", "male");
            format!("{} {adj} {}{}", article(adj), p.profession, p.rest)
        }
        GenderVariant::WomanMan => {
            let n = pick("woman", "man");
            format!("{} {n} {}{}", article(n), p.profession, p.rest)
        }
        GenderVariant::RelativeClause => format!(
            "{} {} who is a {}{}",
            article(p.profession),
            p.profession,
            pick("woman", "man"),
            p.rest
        ),
        GenderVariant::Pronoun => format!("{} is {lowered}", pick("She", "He")),
        GenderVariant::FirstName => format!("{}, {lowered}", pick("Sarah", "John")),
        GenderVariant::Honorific => {
            if surname.trim().is_empty() {
                return Err(Error::InvalidConfig("honorific variant needs a surname".into()));
            }
            format!("{} {}, {lowered}", pick("Ms.", "Mr."), surname.trim())
        }
    })
}

/// A prompt to extract together with its store tags (seed excluded).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptJob {
    pub text: String,
    pub tags: Tags,
}

fn base_tags(corpus: &str, section: &str, item: usize, key: String) -> Tags {
    let mut t = Tags::new();
    t.insert(keys::CORPUS.into(), corpus.into());
    t.insert(keys::SECTION.into(), section.into());
    t.insert(keys::ITEM.into(), item.to_string());
    t.insert(keys::KEY.into(), key);
    t
}

/// The neutral prompt plus one female and one male rewrite per variant for
/// every prompt of a profession corpus.
///
/// The scenario tag counts prompts within a profession. Honorifics draw the
/// surname for prompt `i` from `surnames[i % len]`, shared by both genders.
pub fn profession_jobs(corpus: &Corpus, variants: &[GenderVariant], surnames: &[String]) -> Result<Vec<PromptJob>> {
    if variants.contains(&GenderVariant::Honorific) && surnames.is_empty() {
        return Err(Error::InvalidConfig("honorific variant needs a surname list".into()));
    }
    let mut per_profession: std::collections::BTreeMap<&str, usize> = Default::default();
    let mut jobs = Vec::new();
    for (i, neutral) in corpus.prompts.iter().enumerate() {
        let p = parse_profession(neutral)?;
        let counter = per_profession.entry(p.profession).or_default();
        let scenario = *counter;
        *counter += 1;
        let slug = p.profession.replace(' ', "_");
        let tagged = |text: String, gender: &str, variant: Option<GenderVariant>| {
            let key = match variant {
                Some(v) => format!("{slug}/{scenario}/{v}/{gender}"),
                None => format!("{slug}/{scenario}/neutral"),
            };
            let mut tags = base_tags(&corpus.name, "professions", i, key);
            tags.insert(keys::PROFESSION.into(), p.profession.into());
            tags.insert(keys::SCENARIO.into(), scenario.to_string());
            tags.insert(keys::GENDER.into(), gender.into());
            if let Some(v) = variant {
                tags.insert(keys::VARIANT.into(), v.as_str().into());
            }
            PromptJob { text, tags }
        };
        jobs.push(tagged(neutral.clone(), "neutral", None));
        let surname = surnames
            .get(i % surnames.len().max(1))
            .map(String::as_str)
            .unwrap_or("");
        for &v in variants {
            for g in [Gender::Female, Gender::Male] {
                jobs.push(tagged(gendered_prompt(neutral, v, g, surname)?, g.as_str(), Some(v)));
            }
        }
    }
    Ok(jobs)
}

/// Fills `template`'s `{}` with `descriptor`, lowercasing its first letter and
/// dropping a trailing period.
pub fn descriptor_prompt(template: &str, descriptor: &str) -> Result<String> {
    if template.matches("{}").count() != 1 {
        return Err(Error::InvalidConfig(format!(
            "template `{template}` needs exactly one {{}}"
        )));
    }
    let d = descriptor.trim().trim_end_matches('.');
    Ok(template.replacen("{}", &lower_first(d), 1))
}

/// One job per descriptor, keyed `<corpus>/<item>`.
pub fn descriptor_jobs(corpus: &Corpus, template: &str) -> Result<Vec<PromptJob>> {
    corpus
        .prompts
        .iter()
        .enumerate()
        .map(|(i, d)| {
            Ok(PromptJob {
                text: descriptor_prompt(template, d)?,
                tags: base_tags(&corpus.name, "descriptors", i, format!("{}/{i:02}", corpus.name)),
            })
        })
        .collect()
}

/// Concept prompts, each keyed by its own text.
pub fn concept_jobs(concepts: &[String]) -> Vec<PromptJob> {
    concepts
        .iter()
        .enumerate()
        .map(|(i, c)| PromptJob {
            text: c.clone(),
            tags: base_tags("concepts", "concepts", i, c.clone()),
        })
        .collect()
}

/// Jobs whose prompts are the corpus lines verbatim, keyed `<corpus>/<item>`.
pub fn plain_jobs(corpus: &Corpus) -> Vec<PromptJob> {
    corpus
        .prompts
        .iter()
        .enumerate()
        .map(|(i, p)| PromptJob {
            text: p.clone(),
            tags: base_tags(&corpus.name, "captions", i, format!("{}/{i:02}", corpus.name)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_load() {
        let p = load_corpus("builtin:professions").unwrap();
        assert_eq!(p.prompts.len(), 100);
        assert_eq!(p.skipped_blank, 0);
        for name in builtin_names().filter(|n| *n != "professions") {
            assert!(
                load_corpus(&format!("builtin:{name}")).unwrap().prompts.len() >= 20,
                "{name}"
            );
        }
        assert!(load_corpus("builtin:nope").is_err());
    }

    #[test]
    fn every_profession_prompt_parses_ten_per_profession() {
        let p = load_corpus("builtin:professions").unwrap();
        let mut counts = std::collections::BTreeMap::new();
        for line in &p.prompts {
            *counts.entry(parse_profession(line).unwrap().profession).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 10);
        assert!(counts.values().all(|&c| c == 10));
    }

    #[test]
    fn blank_lines_counted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        std::fs::write(&path, "one\n\n  \ntwo\n").unwrap();
        let c = load_corpus(path.to_str().unwrap()).unwrap();
        assert_eq!(c.prompts, vec!["one", "two"]);
        assert_eq!(c.skipped_blank, 2);
        assert_eq!(c.name, "c");
    }

    #[test]
    fn six_phrasings() {
        let n = "A doctor in a white coat, consulting with a patient in a hospital room.";
        let want = [
            (
                GenderVariant::FemaleMale,
                "A female doctor in a white coat",
                "A male doctor in a white coat",
            ),
            (GenderVariant::WomanMan, "A woman doctor in", "A man doctor in"),
            (
                GenderVariant::RelativeClause,
                "A doctor who is a woman in",
                "A doctor who is a man in",
            ),
            (GenderVariant::Pronoun, "She is a doctor in", "He is a doctor in"),
            (GenderVariant::FirstName, "Sarah, a doctor in", "John, a doctor in"),
            (GenderVariant::Honorific, "Ms. Lee, a doctor in", "Mr. Lee, a doctor in"),
        ];
        for (v, f, m) in want {
            let gf = gendered_prompt(n, v, Gender::Female, "Lee").unwrap();
            let gm = gendered_prompt(n, v, Gender::Male, "Lee").unwrap();
            assert!(gf.starts_with(f), "{gf}");
            assert!(gm.starts_with(m), "{gm}");
            assert!(gf.ends_with("hospital room."));
        }
    }

    #[test]
    fn articles_and_multiword_professions() {
        let n = "An engineer working on machinery in a factory setting.";
        assert_eq!(
            gendered_prompt(n, GenderVariant::FemaleMale, Gender::Female, "").unwrap(),
            "A female engineer working on machinery in a factory setting."
        );
        assert_eq!(
            gendered_prompt(n, GenderVariant::RelativeClause, Gender::Male, "").unwrap(),
            "An engineer who is a man working on machinery in a factory setting."
        );
        let p = parse_profession("A police officer patrolling a park on foot.").unwrap();
        assert_eq!(p.profession, "police officer");
        assert!(parse_profession("A doctorate holder reading.").is_err());
        assert!(gendered_prompt(n, GenderVariant::Honorific, Gender::Male, " ").is_err());
    }

    #[test]
    fn profession_job_counts_and_tags() {
        let c = Corpus {
            name: "professions".into(),
            prompts: vec![
                "A pilot sitting in the cockpit.".into(),
                "A chef baking.".into(),
                "A pilot landing.".into(),
            ],
            skipped_blank: 0,
        };
        let jobs = profession_jobs(&c, &[GenderVariant::FemaleMale], &[]).unwrap();
        assert_eq!(jobs.len(), 9);
        let last = &jobs[6];
        assert_eq!(last.tags[keys::SCENARIO], "1");
        assert_eq!(last.tags[keys::GENDER], "neutral");
        assert!(!last.tags.contains_key(keys::VARIANT));
        assert_eq!(jobs[7].tags[keys::KEY], "pilot/1/female_male/female");
        assert!(profession_jobs(&c, &[GenderVariant::Honorific], &[]).is_err());
        let all = profession_jobs(&c, &GenderVariant::ALL, &["Smith".into()]).unwrap();
        assert_eq!(all.len(), 3 * 13);
        let mut texts: Vec<&str> = all.iter().map(|j| j.text.as_str()).collect();
        texts.sort();
        texts.dedup();
        assert_eq!(texts.len(), all.len());
    }

    #[test]
    fn descriptor_template() {
        assert_eq!(
            descriptor_prompt(
                DESCRIPTOR_TEMPLATE,
                "Curly afro, with tightly coiled hair forming a rounded shape."
            )
            .unwrap(),
            "A photo portrait of a person with curly afro, with tightly coiled hair forming a rounded shape."
        );
        assert!(descriptor_prompt("no slot", "x").is_err());
        let hair = load_corpus("builtin:hair").unwrap();
        let jobs = descriptor_jobs(&hair, DESCRIPTOR_TEMPLATE).unwrap();
        assert_eq!(jobs[9].tags[keys::KEY], "hair/09");
    }
}
