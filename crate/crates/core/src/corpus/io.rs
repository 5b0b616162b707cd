//! Corpus and spec file formats.
//!
//! Corpora are plain text, one sentence per line, tokens separated by single
//! spaces. A bilingual corpus is two line-aligned files that differ only in
//! their `.a`/`.b` suffix. A synthetic language spec is a flat `key=value`
//! file.

use std::fs;
use std::path::Path;

use crate::corpus::{
    BilingualCorpus, LangTag, MonolingualCorpus, ReorderRule, SynthLangSpec, Vocabulary,
};
use crate::error::{Error, Result};

pub fn save_mono(
    corpus: &MonolingualCorpus,
    vocab: &Vocabulary,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = String::new();
    for s in &corpus.sentences {
        out.push_str(&vocab.decode(s)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_mono(
    vocab: &Vocabulary,
    path: impl AsRef<Path>,
    lang: LangTag,
) -> Result<MonolingualCorpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut sentences = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            return Err(Error::Format(format!(
                "{}:{}: empty sentence line",
                path.display(),
                lineno + 1
            )));
        }
        sentences.push(vocab.encode(line)?);
    }
    Ok(MonolingualCorpus { lang, sentences })
}

pub fn save_bilingual(
    corpus: &BilingualCorpus,
    vocab_a: &Vocabulary,
    vocab_b: &Vocabulary,
    path_a: impl AsRef<Path>,
    path_b: impl AsRef<Path>,
) -> Result<()> {
    let mut out_a = String::new();
    let mut out_b = String::new();
    for (a, b) in &corpus.pairs {
        out_a.push_str(&vocab_a.decode(a)?);
        out_a.push('\n');
        out_b.push_str(&vocab_b.decode(b)?);
        out_b.push('\n');
    }
    fs::write(path_a, out_a)?;
    fs::write(path_b, out_b)?;
    Ok(())
}

pub fn load_bilingual(
    vocab_a: &Vocabulary,
    vocab_b: &Vocabulary,
    path_a: impl AsRef<Path>,
    path_b: impl AsRef<Path>,
) -> Result<BilingualCorpus> {
    let a = load_mono(vocab_a, &path_a, LangTag::A)?;
    let b = load_mono(vocab_b, &path_b, LangTag::B)?;
    if a.sentences.len() != b.sentences.len() {
        return Err(Error::Format(format!(
            "bilingual files are not line-aligned: {} has {} lines, {} has {}",
            path_a.as_ref().display(),
            a.sentences.len(),
            path_b.as_ref().display(),
            b.sentences.len()
        )));
    }
    Ok(BilingualCorpus {
        pairs: a.sentences.into_iter().zip(b.sentences).collect(),
    })
}

const SPEC_KEYS: [&str; 13] = [
    "vocab_size",
    "bijection_seed",
    "reorder",
    "noise",
    "len_min",
    "len_max",
    "len_stop_p",
    "branching",
    "n_bilingual",
    "n_mono_a",
    "n_mono_b",
    "n_valid",
    "n_test",
];

pub fn save_synth_spec(spec: &SynthLangSpec, path: impl AsRef<Path>) -> Result<()> {
    let text = format!(
        "vocab_size={}\nbijection_seed={}\nreorder={}\nnoise={}\nlen_min={}\nlen_max={}\nlen_stop_p={}\nbranching={}\nn_bilingual={}\nn_mono_a={}\nn_mono_b={}\nn_valid={}\nn_test={}\n",
        spec.vocab_size,
        spec.bijection_seed,
        spec.reorder,
        spec.noise,
        spec.len_min,
        spec.len_max,
        spec.len_stop_p,
        spec.branching,
        spec.n_bilingual,
        spec.n_mono_a,
        spec.n_mono_b,
        spec.n_valid,
        spec.n_test,
    );
    fs::write(path, text)?;
    Ok(())
}

pub fn load_synth_spec(path: impl AsRef<Path>) -> Result<SynthLangSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut spec = SynthLangSpec::default();
    let mut seen = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Format(format!(
                "{}:{}: expected key=value, got {line:?}",
                path.display(),
                lineno + 1
            ))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| {
            Error::Format(format!(
                "{}:{}: bad {what} value {value:?}",
                path.display(),
                lineno + 1
            ))
        };
        match key {
            "vocab_size" => spec.vocab_size = value.parse().map_err(|_| bad(key))?,
            "bijection_seed" => spec.bijection_seed = value.parse().map_err(|_| bad(key))?,
            "reorder" => spec.reorder = value.parse::<ReorderRule>()?,
            "noise" => spec.noise = value.parse().map_err(|_| bad(key))?,
            "len_min" => spec.len_min = value.parse().map_err(|_| bad(key))?,
            "len_max" => spec.len_max = value.parse().map_err(|_| bad(key))?,
            "len_stop_p" => spec.len_stop_p = value.parse().map_err(|_| bad(key))?,
            "branching" => spec.branching = value.parse().map_err(|_| bad(key))?,
            "n_bilingual" => spec.n_bilingual = value.parse().map_err(|_| bad(key))?,
            "n_mono_a" => spec.n_mono_a = value.parse().map_err(|_| bad(key))?,
            "n_mono_b" => spec.n_mono_b = value.parse().map_err(|_| bad(key))?,
            "n_valid" => spec.n_valid = value.parse().map_err(|_| bad(key))?,
            "n_test" => spec.n_test = value.parse().map_err(|_| bad(key))?,
            other => {
                return Err(Error::Format(format!(
                    "{}:{}: unknown key {other:?} (known keys: {})",
                    path.display(),
                    lineno + 1,
                    SPEC_KEYS.join(", ")
                )))
            }
        }
        seen.push(key.to_string());
    }
    spec.validate()?;
    Ok(spec)
}
