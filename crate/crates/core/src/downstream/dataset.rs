//! Intent/slot datasets: the tab-separated file format and the bundled
//! template-generated toy set.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seeded_rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsingExample {
    pub tokens: Vec<String>,
    pub intent: usize,
    pub slots: Vec<usize>,
    /// Positions whose slot prediction counts toward loss and metrics.
    pub slot_mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsingDataset {
    pub intents: Vec<String>,
    pub slot_labels: Vec<String>,
    pub examples: Vec<ParsingExample>,
}

/// Label vocabularies shared by splits of one corpus.
#[derive(Debug, Clone, Default)]
pub struct LabelSet {
    pub intents: Vec<String>,
    pub slot_labels: Vec<String>,
    intent_ids: HashMap<String, usize>,
    slot_ids: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new(intents: Vec<String>, slot_labels: Vec<String>) -> Self {
        let intent_ids = intents.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let slot_ids = slot_labels.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self {
            intents,
            slot_labels,
            intent_ids,
            slot_ids,
        }
    }

    fn intent(&mut self, name: &str, grow: bool) -> Option<usize> {
        if let Some(&i) = self.intent_ids.get(name) {
            return Some(i);
        }
        if !grow {
            return None;
        }
        self.intents.push(name.to_string());
        self.intent_ids.insert(name.to_string(), self.intents.len() - 1);
        Some(self.intents.len() - 1)
    }

    fn slot(&mut self, name: &str, grow: bool) -> Option<usize> {
        if let Some(&i) = self.slot_ids.get(name) {
            return Some(i);
        }
        if !grow {
            return None;
        }
        self.slot_labels.push(name.to_string());
        self.slot_ids.insert(name.to_string(), self.slot_labels.len() - 1);
        Some(self.slot_labels.len() - 1)
    }
}

fn valid_bio(tag: &str) -> bool {
    tag == "O" || tag.strip_prefix("B-").or_else(|| tag.strip_prefix("I-")).is_some_and(|t| !t.is_empty())
}

impl ParsingDataset {
    /// Parses `intent<TAB>tokens<TAB>slots` lines; `#` lines are comments.
    ///
    /// With `labels = None` the label vocabularies are built in order of first
    /// appearance; otherwise unseen labels are rejected.
    pub fn parse(text: &str, labels: Option<&LabelSet>) -> Result<Self> {
        let grow = labels.is_none();
        let mut set = labels.cloned().unwrap_or_default();
        let mut examples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let at = || format!("line {lineno}");
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::format(
                    at(),
                    format!("expected 3 tab-separated fields, found {}", fields.len()),
                ));
            }
            let intent = fields[0].trim();
            if intent.is_empty() {
                return Err(Error::format(at(), "empty intent"));
            }
            if intent.contains('#') || intent.contains('+') {
                return Err(Error::format(at(), format!("multi-intent label `{intent}` is not supported")));
            }
            let tokens: Vec<String> = fields[1].split_whitespace().map(str::to_string).collect();
            let tags: Vec<&str> = fields[2].split_whitespace().collect();
            if tokens.is_empty() {
                return Err(Error::format(at(), "query has no tokens"));
            }
            if tokens.len() != tags.len() {
                return Err(Error::format(
                    at(),
                    format!("{} tokens but {} slot tags", tokens.len(), tags.len()),
                ));
            }
            if let Some(bad) = tags.iter().find(|t| !valid_bio(t)) {
                return Err(Error::format(at(), format!("slot tag `{bad}` is not in BIO form")));
            }
            let intent_id = set
                .intent(intent, grow)
                .ok_or_else(|| Error::format(at(), format!("unknown intent `{intent}`")))?;
            let slots = tags
                .iter()
                .map(|t| {
                    set.slot(t, grow)
                        .ok_or_else(|| Error::format(at(), format!("unknown slot tag `{t}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            examples.push(ParsingExample {
                slot_mask: vec![true; tokens.len()],
                tokens,
                intent: intent_id,
                slots,
            });
        }
        if examples.is_empty() {
            return Err(Error::format("end of file", "dataset has no examples"));
        }
        Ok(Self {
            intents: set.intents,
            slot_labels: set.slot_labels,
            examples,
        })
    }

    pub fn load(path: &Path, labels: Option<&LabelSet>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text, labels).map_err(|e| match e {
            Error::Format { location, reason } => Error::Format {
                location: format!("{}: {location}", path.display()),
                reason,
            },
            other => other,
        })
    }

    pub fn labels(&self) -> LabelSet {
        LabelSet::new(self.intents.clone(), self.slot_labels.clone())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for ex in &self.examples {
            let slots: Vec<&str> = ex.slots.iter().map(|&s| self.slot_labels[s].as_str()).collect();
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                self.intents[ex.intent],
                ex.tokens.join(" "),
                slots.join(" ")
            ));
        }
        out
    }

    /// Every distinct token, in order of first appearance.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for ex in &self.examples {
            for t in &ex.tokens {
                if seen.insert(t.as_str()) {
                    out.push(t.clone());
                }
            }
        }
        out
    }

    /// Deterministic split: every `every`-th example (1-based) goes to the
    /// second part.
    pub fn split_every(&self, every: usize) -> (Self, Self) {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (i, ex) in self.examples.iter().enumerate() {
            if every > 0 && (i + 1) % every == 0 {
                b.push(ex.clone());
            } else {
                a.push(ex.clone());
            }
        }
        let wrap = |examples| Self {
            intents: self.intents.clone(),
            slot_labels: self.slot_labels.clone(),
            examples,
        };
        (wrap(a), wrap(b))
    }
}

// Slot fillers; each token carries a single slot tag across the whole corpus.
const ARTISTS: &[&str] = &["coldplay", "adele", "beatles", "daft punk", "miles davis"];
const CITIES: &[&str] = &["boston", "paris", "new york", "san francisco", "tokyo"];
const TIMES: &[&str] = &["tomorrow", "tonight", "seven am", "noon", "this weekend"];
const ROOMS: &[&str] = &["bedroom", "kitchen", "living room", "garage", "office"];

/// (intent, template). `{artist}`, `{city}`, `{time}` and `{room}` are slots.
const TEMPLATES: &[(&str, &str)] = &[
    ("PlayMusic", "play some songs by {artist}"),
    ("PlayMusic", "put on music by {artist}"),
    ("PlayMusic", "i want to hear {artist}"),
    ("GetWeather", "what is the weather in {city}"),
    ("GetWeather", "will it rain in {city} {time}"),
    ("GetWeather", "weather forecast for {city}"),
    ("BookRestaurant", "book a table in {city} for {time}"),
    ("BookRestaurant", "reserve a restaurant in {city}"),
    ("BookRestaurant", "find me a table for {time}"),
    ("SetAlarm", "set an alarm for {time}"),
    ("SetAlarm", "wake me up {time}"),
    ("SetAlarm", "alarm at {time} please"),
    ("TurnOnLight", "turn on the {room} light"),
    ("TurnOnLight", "switch on lights in the {room}"),
    ("TurnOnLight", "lights on in the {room} please"),
];

pub const TOY_SEED: u64 = 2020;
pub const TOY_SIZE: usize = 200;

/// 200 queries over 5 intents and 9 BIO slot labels, generated from fixed
/// templates with a fixed seed.
pub fn toy_dataset() -> ParsingDataset {
    let mut rng = seeded_rng(TOY_SEED);
    let mut lines = Vec::with_capacity(TOY_SIZE);
    let intents = ["PlayMusic", "GetWeather", "BookRestaurant", "SetAlarm", "TurnOnLight"];
    for n in 0..TOY_SIZE {
        // Round-robin over intents keeps the classes balanced; the final
        // shuffle mixes them so index-based splits see every intent.
        let intent = intents[n % intents.len()];
        let choices: Vec<&(&str, &str)> = TEMPLATES.iter().filter(|(i, _)| *i == intent).collect();
        let (_, template) = **choices.choose(&mut rng).unwrap();
        let mut tokens = Vec::new();
        let mut tags = Vec::new();
        for word in template.split_whitespace() {
            let (pool, slot) = match word {
                "{artist}" => (ARTISTS, "artist"),
                "{city}" => (CITIES, "city"),
                "{time}" => (TIMES, "time"),
                "{room}" => (ROOMS, "room"),
                _ => {
                    tokens.push(word.to_string());
                    tags.push("O".to_string());
                    continue;
                }
            };
            let filler = pool[rng.random_range(0..pool.len())];
            for (j, piece) in filler.split_whitespace().enumerate() {
                tokens.push(piece.to_string());
                tags.push(format!("{}-{slot}", if j == 0 { "B" } else { "I" }));
            }
        }
        lines.push(format!("{intent}\t{}\t{}\n", tokens.join(" "), tags.join(" ")));
    }
    lines.shuffle(&mut rng);
    // Fix the label order so ids do not depend on sampling.
    let labels = LabelSet::new(
        intents.iter().map(|s| s.to_string()).collect(),
        ["O", "B-artist", "I-artist", "B-city", "I-city", "B-time", "I-time", "B-room", "I-room"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    ParsingDataset::parse(&lines.concat(), Some(&labels)).expect("templates produce valid lines")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_builds_labels() {
        let text = "# comment\nPlay\tplay adele\tO B-artist\n\nWeather\tweather in paris\tO O B-city\n";
        let d = ParsingDataset::parse(text, None).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.intents, vec!["Play", "Weather"]);
        assert_eq!(d.slot_labels, vec!["O", "B-artist", "B-city"]);
        assert_eq!(d.examples[1].slots, vec![0, 0, 2]);
        assert!(d.examples[0].slot_mask.iter().all(|&m| m));
        let again = ParsingDataset::parse(&d.to_tsv(), Some(&d.labels())).unwrap();
        assert_eq!(again, d);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = ParsingDataset::parse("A\ta b\tO\n", None).unwrap_err().to_string();
        assert!(e.contains("line 1") && e.contains("2 tokens but 1"), "{e}");
        let e = ParsingDataset::parse("A\ta\tO\nB\tb\n", None).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        let e = ParsingDataset::parse("A\ta\tX-city\n", None).unwrap_err().to_string();
        assert!(e.contains("BIO"), "{e}");
        let e = ParsingDataset::parse("a#b\tx\tO\n", None).unwrap_err().to_string();
        assert!(e.contains("multi-intent"), "{e}");
        let labels = LabelSet::new(vec!["A".into()], vec!["O".into()]);
        assert!(ParsingDataset::parse("B\tx\tO\n", Some(&labels)).is_err());
    }

    #[test]
    fn toy_set_shape() {
        let d = toy_dataset();
        assert_eq!(d.len(), 200);
        assert_eq!(d.intents.len(), 5);
        assert_eq!(d.slot_labels.len(), 9);
        assert_eq!(d, toy_dataset());
        for i in 0..5 {
            assert_eq!(d.examples.iter().filter(|e| e.intent == i).count(), 40);
        }
    }

    #[test]
    fn toy_tokens_have_one_slot_tag_each() {
        let d = toy_dataset();
        let mut tag_of: HashMap<&str, usize> = HashMap::new();
        for ex in &d.examples {
            for (t, &s) in ex.tokens.iter().zip(&ex.slots) {
                assert_eq!(*tag_of.entry(t).or_insert(s), s, "token {t}");
            }
        }
    }

    #[test]
    fn split_is_deterministic() {
        let d = toy_dataset();
        let (train, test) = d.split_every(5);
        assert_eq!(train.len(), 160);
        assert_eq!(test.len(), 40);
        assert_eq!(test.examples[0], d.examples[4]);
        for i in 0..5 {
            assert!(test.examples.iter().any(|e| e.intent == i));
        }
    }
}
