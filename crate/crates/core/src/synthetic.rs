//! Seeded synthetic corpora with known topic structure.
//!
//! Used to exercise the trainer and the end-to-end pipeline without a real
//! review corpus: words of one topic share contexts, so a working trainer
//! must place them close together.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A set of topics, each with its own vocabulary, plus words shared by all
/// topics and filler words that preprocessing is expected to drop.
#[derive(Debug, Clone)]
pub struct TopicDomain {
    pub topics: Vec<(&'static str, Vec<&'static str>)>,
    pub shared: Vec<&'static str>,
    pub filler: Vec<&'static str>,
    /// Probability that a content word comes from the sentence's topic.
    pub topic_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl TopicDomain {
    /// Two topics with no shared words: {apple, pear, fruit} and {bolt, nut, wrench}.
    pub fn fruit_and_tools() -> Self {
        Self {
            topics: vec![
                ("fruit", vec!["apple", "pear", "fruit"]),
                ("tools", vec!["bolt", "nut", "wrench"]),
            ],
            shared: Vec::new(),
            filler: Vec::new(),
            topic_rate: 1.0,
            min_len: 5,
            max_len: 10,
        }
    }

    /// Three restaurant categories named after their reference words.
    pub fn restaurant() -> Self {
        Self {
            topics: vec![
                (
                    "food",
                    vec![
                        "food", "pizza", "pasta", "dish", "sauce", "dessert", "menu", "chicken",
                        "flavor", "cheese",
                    ],
                ),
                (
                    "staff",
                    vec![
                        "staff",
                        "waiter",
                        "waitress",
                        "server",
                        "manager",
                        "service",
                        "host",
                        "bartender",
                        "attentive",
                        "rude",
                    ],
                ),
                (
                    "ambience",
                    vec![
                        "ambience",
                        "decor",
                        "music",
                        "lighting",
                        "atmosphere",
                        "romantic",
                        "cozy",
                        "noisy",
                        "interior",
                        "patio",
                    ],
                ),
            ],
            shared: vec![
                "great", "place", "really", "good", "night", "went", "nice", "loved", "bad",
                "friends",
            ],
            filler: vec!["the", "was", "and", "a", "we", "it", "very", "of"],
            topic_rate: 0.75,
            min_len: 6,
            max_len: 10,
        }
    }

    pub fn categories(&self) -> Vec<String> {
        self.topics.iter().map(|(c, _)| (*c).to_owned()).collect()
    }

    fn sentence_words(&self, topic: usize, rng: &mut ChaCha8Rng) -> Vec<&'static str> {
        let len = rng.gen_range(self.min_len..=self.max_len);
        let words = &self.topics[topic].1;
        let mut out = Vec::with_capacity(len + 2);
        for _ in 0..len {
            let pool = if self.shared.is_empty() || rng.gen_bool(self.topic_rate) {
                words
            } else {
                &self.shared
            };
            out.push(*pool.choose(rng).expect("non-empty word pool"));
            if !self.filler.is_empty() && rng.gen_bool(0.2) {
                out.push(*self.filler.choose(rng).expect("non-empty filler"));
            }
        }
        out
    }

    /// `n` sentences cycling through the topics in order.
    pub fn sentences(&self, n: usize, seed: u64) -> Vec<(String, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let topic = i % self.topics.len();
                let words = self.sentence_words(topic, &mut rng);
                (words.join(" "), self.topics[topic].0.to_owned())
            })
            .collect()
    }

    /// Token lists for direct use by the trainer.
    pub fn token_corpus(&self, n: usize, seed: u64) -> Vec<Vec<String>> {
        self.sentences(n, seed)
            .into_iter()
            .map(|(text, _)| text.split(' ').map(str::to_owned).collect())
            .collect()
    }
}
