//! Synthetic arxiv-style corpus for smoke runs.
//!
//! Every document has one topic. Its abstract sentences are built from the
//! topic's key words and also appear verbatim in the body; other body
//! sentences mix filler with the topic's or another topic's words. The
//! introduction opens with a statement in the abstract's style.

use exabs_core::document::{RawRecord, TextField};
use exabs_core::rng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

pub const TOPICS: usize = 10;
const TOPIC_WORDS: usize = 8;
/// Abstract sentences draw only from the first `KEY_WORDS` topic words.
const KEY_WORDS: usize = 5;

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ren", "sa", "tu", "vo", "bel", "dor", "fi", "gan", "hu", "jas", "ke", "lum", "nor", "pra", "qui",
    "ros", "sil", "tam", "ul", "ver", "zen",
];

const FILLER: [&str; 24] = [
    "the", "we", "this", "model", "method", "results", "show", "that", "our", "data", "approach", "of", "for", "with",
    "in", "a", "study", "new", "is", "on", "and", "analysis", "paper", "work",
];

const ABSTRACT_OPENERS: [&str; 4] = ["we propose", "we study", "this paper presents", "our results show"];
const SECTION_NAMES: [&str; 4] = ["introduction", "method", "experiments", "conclusion"];

fn topic_word(topic: usize, j: usize) -> String {
    let a = SYLLABLES[topic];
    let b = SYLLABLES[TOPICS + j];
    let c = SYLLABLES[(topic * 5 + j * 7) % SYLLABLES.len()];
    format!("{a}{b}{c}")
}

fn topic_words(topic: usize) -> Vec<String> {
    (0..TOPIC_WORDS).map(|j| topic_word(topic, j)).collect()
}

fn abstract_sentence(words: &[String], r: &mut rng::Rng) -> String {
    let opener = ABSTRACT_OPENERS.choose(r).unwrap();
    let picked: Vec<&String> = words[..KEY_WORDS].choose_multiple(r, 4).collect();
    format!("{opener} {} {} for {} {}.", picked[0], picked[1], picked[2], picked[3])
}

fn body_sentence(words: &[String], r: &mut rng::Rng) -> String {
    let len = r.random_range(6..10);
    let mut toks: Vec<String> = (0..len)
        .map(|i| {
            if i % 2 == 1 {
                words.choose(r).unwrap().clone()
            } else {
                (*FILLER.choose(r).unwrap()).to_owned()
            }
        })
        .collect();
    if r.random_bool(0.15) {
        toks.insert(len / 2, "$x_i$".into());
    }
    format!("{}.", toks.join(" "))
}

/// One raw record with sentence-listed sections, as in the arxiv dump.
pub fn toy_record(index: usize, seed: u64) -> RawRecord {
    let id = format!("toy-{index:04}");
    let mut r = rng::seeded(rng::derive_seed(seed, &id));
    let topic = r.random_range(0..TOPICS);
    let words = topic_words(topic);
    let other = |r: &mut rng::Rng| topic_words((topic + r.random_range(1..TOPICS)) % TOPICS);

    let n_abs = r.random_range(2..5);
    let abstract_sents: Vec<String> = (0..n_abs).map(|_| abstract_sentence(&words, &mut r)).collect();

    let keys: Vec<&String> = words[..KEY_WORDS].choose_multiple(&mut r, 4).collect();
    let intro_statement = format!("in this paper we study {} {} for {} {}.", keys[0], keys[1], keys[2], keys[3]);
    let mut intro = vec![intro_statement];
    intro.extend((0..3).map(|_| body_sentence(&words, &mut r)));

    let mut middle: Vec<String> = Vec::new();
    for _ in 0..12 {
        if r.random_bool(0.4) {
            let w = other(&mut r);
            middle.push(body_sentence(&w, &mut r));
        } else {
            middle.push(body_sentence(&words, &mut r));
        }
    }
    middle.extend(abstract_sents.iter().cloned());
    middle.shuffle(&mut r);
    let split = middle.len() / 2;
    let experiments = middle.split_off(split);
    let method = middle;

    let conclusion: Vec<String> = (0..3).map(|_| body_sentence(&words, &mut r)).collect();
    let sections = vec![intro, method, experiments, conclusion];
    let tagged = |s: &String| format!("<S> {s} </S>");
    RawRecord {
        article_id: id,
        abstract_text: TextField::Many(abstract_sents.iter().map(tagged).collect()),
        article_text: TextField::Many(sections.iter().flatten().cloned().collect()),
        section_names: SECTION_NAMES.iter().map(|s| (*s).to_owned()).collect(),
        sections,
    }
}

pub fn toy_corpus(docs: usize, seed: u64) -> Vec<RawRecord> {
    (0..docs).map(|i| toy_record(i, seed)).collect()
}
