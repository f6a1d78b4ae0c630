use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{CharVocab, TagSet, Tagger, TaggerConfig, TaggerError};
use crate::corpus::Tag;
use crate::nncore::{read_checkpoint, write_checkpoint};
use crate::ontology::Lexicon;

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: TaggerConfig,
    tags: Vec<String>,
    chars: String,
    lexicon: Option<Lexicon>,
    #[serde(default)]
    extra: serde_json::Value,
}

/// Writes parameters, optimizer state and a JSON record holding the config,
/// tagset, vocabulary, lexicon and `extra`.
pub fn save_tagger<W: Write>(writer: W, tagger: &Tagger, extra: &serde_json::Value) -> Result<(), TaggerError> {
    let meta = Metadata {
        config: tagger.config.clone(),
        tags: tagger.tagset.tags().iter().map(Tag::to_string).collect(),
        chars: tagger.vocab.chars().iter().collect(),
        lexicon: tagger.lexicon.clone(),
        extra: extra.clone(),
    };
    let json = serde_json::to_string(&meta).map_err(|e| TaggerError::Metadata(e.to_string()))?;
    write_checkpoint(writer, &tagger.store, &json)?;
    Ok(())
}

/// Inverse of [`save_tagger`]; returns the model and the `extra` value.
pub fn load_tagger<R: Read>(reader: R) -> Result<(Tagger, serde_json::Value), TaggerError> {
    let (store, json) = read_checkpoint(reader)?;
    let meta: Metadata = serde_json::from_str(&json).map_err(|e| TaggerError::Metadata(e.to_string()))?;
    let tags = meta
        .tags
        .iter()
        .map(|t| t.parse::<Tag>().map_err(|e| TaggerError::Metadata(format!("tag `{t}`: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let tagset = TagSet::from_tags(tags)?;
    let vocab = CharVocab::from_chars(meta.chars.chars().collect());
    let lexicon = meta.lexicon.map(|mut l| {
        l.rebuild();
        l
    });
    let tagger = Tagger::from_parts(meta.config, tagset, vocab, lexicon, store)?;
    Ok((tagger, meta.extra))
}
