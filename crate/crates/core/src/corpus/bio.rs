use std::fmt;
use std::str::FromStr;

use super::{CorpusError, SemanticTriplet, TripletSet};

/// A BIO tag. Labels have the form `act-slot`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Outside,
    Begin(String),
    Inside(String),
}

impl Tag {
    pub fn begin(act: &str, slot: &str) -> Self {
        Tag::Begin(format!("{act}-{slot}"))
    }

    pub fn inside(act: &str, slot: &str) -> Self {
        Tag::Inside(format!("{act}-{slot}"))
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Begin(l) | Tag::Inside(l) => Some(l),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(l) => write!(f, "B-{l}"),
            Tag::Inside(l) => write!(f, "I-{l}"),
        }
    }
}

impl FromStr for Tag {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        let (prefix, label) = s.split_at(s.len().min(2));
        let valid_label = label.split_once('-').is_some_and(|(a, b)| !a.is_empty() && !b.is_empty());
        match prefix {
            "B-" if valid_label => Ok(Tag::Begin(label.to_string())),
            "I-" if valid_label => Ok(Tag::Inside(label.to_string())),
            _ => Err(CorpusError::InvalidTag(s.to_string())),
        }
    }
}

/// An `I-X` must follow `B-X` or `I-X`.
pub fn is_well_formed(tags: &[Tag]) -> bool {
    let mut prev: Option<&str> = None;
    for tag in tags {
        if let Tag::Inside(label) = tag {
            if prev != Some(label.as_str()) {
                return false;
            }
        }
        prev = tag.label();
    }
    true
}

/// Promotes every orphan `I-X` to `B-X`.
pub fn repair_tags(tags: &[Tag]) -> Vec<Tag> {
    let mut out: Vec<Tag> = Vec::with_capacity(tags.len());
    for tag in tags {
        let repaired = match tag {
            Tag::Inside(label) if out.last().and_then(Tag::label) != Some(label.as_str()) => {
                Tag::Begin(label.clone())
            }
            other => other.clone(),
        };
        out.push(repaired);
    }
    out
}

fn find_from(haystack: &[char], needle: &[char], start: usize) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    (start..=haystack.len() - needle.len()).find(|&i| &haystack[i..i + needle.len()] == needle)
}

/// Tags the leftmost free occurrence of every gold value.
///
/// Triplets are placed in `(act, slot, value)` order. A value whose every
/// occurrence collides with an already placed span is an overlap error.
pub fn derive_bio_tags(transcription: &[char], gold: &TripletSet) -> Result<Vec<Tag>, CorpusError> {
    let mut tags = vec![Tag::Outside; transcription.len()];
    let mut owners: Vec<Option<&SemanticTriplet>> = vec![None; transcription.len()];
    for triplet in gold {
        let value: Vec<char> = triplet.value.chars().collect();
        let mut start = 0;
        let mut first_conflict = None;
        let placed = loop {
            match find_from(transcription, &value, start) {
                None => break None,
                Some(pos) => {
                    if let Some(owner) = owners[pos..pos + value.len()].iter().flatten().next() {
                        first_conflict.get_or_insert(*owner);
                        start = pos + 1;
                    } else {
                        break Some(pos);
                    }
                }
            }
        };
        let pos = match (placed, first_conflict) {
            (Some(pos), _) => pos,
            (None, Some(owner)) => return Err(CorpusError::Overlap(owner.clone(), triplet.clone())),
            (None, None) => return Err(CorpusError::UnalignableValue(triplet.clone())),
        };
        tags[pos] = Tag::begin(&triplet.act, &triplet.slot);
        for tag in &mut tags[pos + 1..pos + value.len()] {
            *tag = Tag::inside(&triplet.act, &triplet.slot);
        }
        for owner in &mut owners[pos..pos + value.len()] {
            *owner = Some(triplet);
        }
    }
    Ok(tags)
}

/// Collects every maximal `B-X (I-X)*` run as `act(slot=chars)`.
/// Orphan `I-X` starts a new run.
pub fn tags_to_triplets(characters: &[char], tags: &[Tag]) -> TripletSet {
    let mut out = TripletSet::new();
    let mut current: Option<(&str, String)> = None;
    let mut flush = |current: &mut Option<(&str, String)>| {
        if let Some((label, value)) = current.take() {
            let (act, slot) = label.split_once('-').unwrap_or((label, ""));
            out.insert(SemanticTriplet::new(act, slot, value));
        }
    };
    for (ch, tag) in characters.iter().zip(tags) {
        match tag {
            Tag::Outside => flush(&mut current),
            Tag::Begin(label) => {
                flush(&mut current);
                current = Some((label, ch.to_string()));
            }
            Tag::Inside(label) => match &mut current {
                Some((open, value)) if *open == label.as_str() => value.push(*ch),
                _ => {
                    flush(&mut current);
                    current = Some((label, ch.to_string()));
                }
            },
        }
    }
    flush(&mut current);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    fn t(s: &str) -> Tag {
        s.parse().unwrap()
    }

    fn suzhou_not_shanghai_gold() -> TripletSet {
        [SemanticTriplet::new("inform", "dest", "苏州"), SemanticTriplet::new("deny", "dest", "上海")]
            .into_iter()
            .collect()
    }

    #[test]
    fn inform_and_deny_tags() {
        let tags = derive_bio_tags(&chars("我想去苏州不是上海"), &suzhou_not_shanghai_gold()).unwrap();
        let expected: Vec<Tag> = ["O", "O", "O", "B-inform-dest", "I-inform-dest", "O", "O", "B-deny-dest", "I-deny-dest"]
            .iter()
            .map(|s| t(s))
            .collect();
        assert_eq!(tags, expected);
        assert_eq!(tags_to_triplets(&chars("我想去苏州不是上海"), &tags), suzhou_not_shanghai_gold());
    }

    #[test]
    fn empty_gold_is_all_outside() {
        let tags = derive_bio_tags(&chars("hello"), &TripletSet::new()).unwrap();
        assert!(tags.iter().all(|t| *t == Tag::Outside));
        assert!(tags_to_triplets(&chars("hello"), &tags).is_empty());
    }

    #[test]
    fn repeated_value_tags_leftmost() {
        let gold: TripletSet = [SemanticTriplet::new("inform", "city", "ab")].into_iter().collect();
        let tags = derive_bio_tags(&chars("xabyab"), &gold).unwrap();
        assert_eq!(tags[1], Tag::begin("inform", "city"));
        assert_eq!(tags[4], Tag::Outside);
        assert_eq!(tags_to_triplets(&chars("xabyab"), &tags), gold);
    }

    #[test]
    fn missing_value_is_unalignable() {
        let gold: TripletSet = [SemanticTriplet::new("inform", "city", "zz")].into_iter().collect();
        assert!(matches!(derive_bio_tags(&chars("abc"), &gold), Err(CorpusError::UnalignableValue(_))));
        let empty: TripletSet = [SemanticTriplet::new("inform", "city", "")].into_iter().collect();
        assert!(matches!(derive_bio_tags(&chars("abc"), &empty), Err(CorpusError::UnalignableValue(_))));
    }

    #[test]
    fn overlapping_values_rejected() {
        let gold: TripletSet =
            [SemanticTriplet::new("inform", "a", "abc"), SemanticTriplet::new("inform", "b", "bcd")].into_iter().collect();
        assert!(matches!(derive_bio_tags(&chars("abcd"), &gold), Err(CorpusError::Overlap(_, _))));
    }

    #[test]
    fn orphan_inside_becomes_value() {
        let tags = vec![t("I-inform-dest"), t("I-inform-dest")];
        let set = tags_to_triplets(&chars("ab"), &tags);
        assert_eq!(set, [SemanticTriplet::new("inform", "dest", "ab")].into_iter().collect());
        assert_eq!(repair_tags(&tags), vec![t("B-inform-dest"), t("I-inform-dest")]);
    }

    #[test]
    fn inside_with_different_label_starts_new_span() {
        let tags = vec![t("B-inform-dest"), t("I-deny-dest")];
        assert!(!is_well_formed(&tags));
        assert_eq!(tags_to_triplets(&chars("ab"), &tags).len(), 2);
    }

    #[test]
    fn tag_syntax() {
        assert!("X-a-b".parse::<Tag>().is_err());
        assert!("B-nolabel".parse::<Tag>().is_err());
        assert_eq!(t("B-inform-route-pref").label(), Some("inform-route-pref"));
    }

    proptest! {
        #[test]
        fn derive_then_convert_round_trips(
            filler in proptest::collection::vec(0usize..4, 1..6),
            picks in proptest::collection::vec((0usize..2, 0usize..6), 0..4),
        ) {
            // values drawn from a prefix-free alphabet so spans never collide
            let values = ["QR", "ST", "UVW", "XY", "Z", "KLM"];
            let fill = ['a', 'b', 'c', 'd'];
            let mut text = String::new();
            let mut gold = TripletSet::new();
            let mut used = std::collections::HashSet::new();
            for (i, f) in filler.iter().enumerate() {
                text.push(fill[*f]);
                if let Some((act, v)) = picks.get(i) {
                    if used.insert(*v) {
                        text.push_str(values[*v]);
                        gold.insert(SemanticTriplet::new(["inform", "deny"][*act], "dest", values[*v]));
                    }
                }
            }
            let cs = chars(&text);
            let tags = derive_bio_tags(&cs, &gold).unwrap();
            prop_assert!(is_well_formed(&tags));
            prop_assert_eq!(tags_to_triplets(&cs, &tags), gold);
        }

        #[test]
        fn repair_yields_well_formed(raw in proptest::collection::vec(0usize..5, 0..12)) {
            let alphabet = [Tag::Outside, t("B-a-x"), t("I-a-x"), t("B-b-y"), t("I-b-y")];
            let tags: Vec<Tag> = raw.iter().map(|&i| alphabet[i].clone()).collect();
            let repaired = repair_tags(&tags);
            prop_assert!(is_well_formed(&repaired));
            let cs: Vec<char> = (0..tags.len()).map(|i| char::from(b'a' + i as u8)).collect();
            prop_assert_eq!(tags_to_triplets(&cs, &tags), tags_to_triplets(&cs, &repaired));
        }
    }
}
