//! Seeded synthetic corpora with known structure: planted co-occurrence
//! blocks, a tagged caption corpus over the built-in taxonomy, and
//! planted-concept classification data.

use serde::{Deserialize, Serialize};

use crate::nncore::{Matrix, Rng};
use crate::taxonomy::{AttributeVector, ConceptTaxonomy, SourceRecord};

/// Multi-hot vectors made of contiguous co-occurrence blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockCorpusConfig {
    pub dim: usize,
    pub blocks: usize,
    pub records: usize,
    /// Each record activates between 1 and this many blocks.
    pub max_active_blocks: usize,
    /// Probability that a member of an active block is set.
    pub member_prob: f64,
    /// Probability that a set bit is moved to a random position outside the
    /// record's active blocks.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for BlockCorpusConfig {
    fn default() -> Self {
        Self {
            dim: 60,
            blocks: 10,
            records: 2000,
            max_active_blocks: 3,
            member_prob: 0.8,
            noise_rate: 0.05,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCorpus {
    pub vectors: Vec<AttributeVector>,
    /// Attribute indices of each planted block.
    pub blocks: Vec<Vec<usize>>,
    /// Active blocks per record.
    pub active: Vec<Vec<usize>>,
}

impl BlockCorpus {
    pub fn block_of(&self, attribute: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains(&attribute))
    }
}

pub fn block_corpus(config: &BlockCorpusConfig) -> BlockCorpus {
    assert!(config.blocks >= 1 && config.dim >= config.blocks, "need at least one attribute per block");
    let width = config.dim / config.blocks;
    let blocks: Vec<Vec<usize>> = (0..config.blocks)
        .map(|b| (b * width..(b + 1) * width).collect())
        .collect();
    let mut rng = Rng::new(config.seed);
    let mut vectors = Vec::with_capacity(config.records);
    let mut active = Vec::with_capacity(config.records);
    for _ in 0..config.records {
        let count = 1 + rng.below(config.max_active_blocks.clamp(1, config.blocks));
        let mut order: Vec<usize> = (0..config.blocks).collect();
        rng.shuffle(&mut order);
        let mut chosen = order[..count].to_vec();
        chosen.sort_unstable();

        let mut v = AttributeVector::zeros(config.dim);
        for &b in &chosen {
            let members = &blocks[b];
            let mut any = false;
            for &i in members {
                if rng.bernoulli(config.member_prob) {
                    v.set(i, true);
                    any = true;
                }
            }
            if !any {
                v.set(members[rng.below(members.len())], true);
            }
        }
        let outside: Vec<usize> = (0..config.dim)
            .filter(|i| !chosen.iter().any(|&b| blocks[b].contains(i)))
            .collect();
        if !outside.is_empty() {
            let set: Vec<usize> = v.ones_indices().collect();
            for i in set {
                if rng.bernoulli(config.noise_rate) {
                    v.set(i, false);
                    v.set(outside[rng.below(outside.len())], true);
                }
            }
        }
        vectors.push(v);
        active.push(chosen);
    }
    BlockCorpus {
        vectors,
        blocks,
        active,
    }
}

/// Taxonomy whose dimension order matches [`block_corpus`]: category
/// `block_NN` holds attributes `bNN_aM`.
pub fn block_taxonomy(config: &BlockCorpusConfig) -> ConceptTaxonomy {
    let width = config.dim / config.blocks;
    let cats: Vec<(String, Vec<String>)> = (0..config.blocks)
        .map(|b| {
            (
                format!("block_{b:02}"),
                (0..width).map(|a| format!("b{b:02}_a{a}")).collect(),
            )
        })
        .collect();
    ConceptTaxonomy::new(cats).expect("generated names are unique")
}

struct Archetype {
    genre: &'static [&'static str],
    instrument: &'static [&'static str],
    mood: &'static [&'static str],
    tempo: &'static [&'static str],
    extra: &'static [&'static str],
    noun: &'static str,
}

const ARCHETYPES: &[Archetype] = &[
    Archetype {
        genre: &["folk", "country", "bluegrass"],
        instrument: &["acoustic guitar", "banjo", "harmonica", "mandolin", "violin"],
        mood: &["warm", "nostalgic", "upbeat", "mellow"],
        tempo: &["medium tempo", "slow tempo"],
        extra: &["male vocal", "female vocal", "acoustic", "live recording"],
        noun: "song",
    },
    Archetype {
        genre: &["classical", "opera"],
        instrument: &["piano", "violin", "cello", "string section", "orchestra", "harp"],
        mood: &["calm", "emotional", "romantic", "serene"],
        tempo: &["slow tempo", "rubato"],
        extra: &["instrumental", "orchestral", "reverb", "3/4 time"],
        noun: "piece",
    },
    Archetype {
        genre: &["rock", "hard rock", "punk rock", "indie rock"],
        instrument: &["electric guitar", "bass guitar", "acoustic drums"],
        mood: &["energetic", "aggressive", "intense"],
        tempo: &["fast tempo", "driving rhythm"],
        extra: &["male vocal", "backing vocals", "distorted", "heavy"],
        noun: "track",
    },
    Archetype {
        genre: &["edm", "techno", "house", "trance"],
        instrument: &["synthesizer", "drum machine", "synth bass", "synth pad"],
        mood: &["energetic", "upbeat", "intense"],
        tempo: &["fast tempo", "four on the floor"],
        extra: &["sidechain", "instrumental", "wide stereo", "electric"],
        noun: "track",
    },
    Archetype {
        genre: &["jazz", "bossa nova", "soul"],
        instrument: &["saxophone", "piano", "double bass", "trumpet"],
        mood: &["mellow", "romantic", "relaxing"],
        tempo: &["medium tempo", "swing rhythm"],
        extra: &["smooth", "live recording", "instrumental"],
        noun: "tune",
    },
    Archetype {
        genre: &["hip hop", "trap"],
        instrument: &["drum machine", "synth bass", "keyboard"],
        mood: &["groovy", "dark", "chill"],
        tempo: &["medium tempo", "syncopated rhythm"],
        extra: &["rap vocals", "male vocal", "compressed", "autotune"],
        noun: "beat",
    },
    Archetype {
        genre: &["ambient", "new age"],
        instrument: &["synth pad", "piano", "flute"],
        mood: &["calm", "dreamy", "peaceful", "soothing"],
        tempo: &["very slow tempo", "slow tempo"],
        extra: &["atmospheric", "ethereal", "instrumental", "reverb"],
        noun: "soundscape",
    },
    Archetype {
        genre: &["reggae", "latin", "salsa"],
        instrument: &["congas", "bongos", "horns", "bass guitar"],
        mood: &["cheerful", "groovy", "joyful"],
        tempo: &["medium tempo", "syncopated rhythm"],
        extra: &["percussive", "male vocal", "backbeat"],
        noun: "groove",
    },
    Archetype {
        genre: &["pop", "dance pop", "synthpop", "indie pop"],
        instrument: &["keyboard", "synthesizer", "bass guitar"],
        mood: &["happy", "upbeat", "playful"],
        tempo: &["medium tempo", "fast tempo"],
        extra: &["female vocal", "studio recording", "bright"],
        noun: "song",
    },
    Archetype {
        genre: &["blues", "gospel"],
        instrument: &["electric guitar", "hammond organ", "piano"],
        mood: &["emotional", "passionate", "sad"],
        tempo: &["slow tempo", "shuffle rhythm"],
        extra: &["male vocal", "choir vocals", "vintage recording"],
        noun: "song",
    },
];

// Raw spellings a tagger might emit; each maps through the shipped synonym file.
const VARIANTS: &[(&str, &str)] = &[
    ("electric guitar", "E-Guitar"),
    ("acoustic drums", "drums"),
    ("bass guitar", "Bass"),
    ("synthesizer", "synth"),
    ("keyboard", "keys"),
    ("acoustic guitar", "Acoustic Guitar "),
    ("double bass", "upright bass"),
];

const UNMAPPED: &[&str] = &[
    "youtube",
    "traffic sounds",
    "background chatter",
    "zxqv",
    "crowd noise",
    "beginner",
    "ringtone",
];

const FILLERS: &[&str] = &[
    "The recording has a clear balance between the instruments.",
    "This could be played in a small venue or on the radio.",
    "The arrangement builds slowly and keeps the listener engaged throughout.",
    "There is a sense of space in the mix and the parts sit well together.",
    "The performance sounds confident and well rehearsed.",
];

/// Between `low` and `low + spread - 1` distinct items, in pool order.
fn pick<'a>(rng: &mut Rng, pool: &[&'a str], low: usize, spread: usize) -> Vec<&'a str> {
    let count = low + rng.below(spread);
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    rng.shuffle(&mut idx);
    idx.truncate(count.min(pool.len()));
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i]).collect()
}

fn join_list(items: &[&str]) -> String {
    match items {
        [] => String::new(),
        [one] => (*one).to_string(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

/// Noisy tagged caption corpus shaped like a crowd-annotated music set.
///
/// Roughly a third of the records are built to fail distillation (sparse tags,
/// short or garbled captions), so the retained share is of the same order as
/// a real curation pass.
pub fn tagged_corpus(records: usize, seed: u64) -> Vec<SourceRecord> {
    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(records);
    for n in 0..records {
        let arch = &ARCHETYPES[rng.below(ARCHETYPES.len())];
        let sparse = rng.bernoulli(0.5);
        let genres = pick(&mut rng, arch.genre, 1, 2);
        let instruments = pick(&mut rng, arch.instrument, 1, 3);
        let moods = pick(&mut rng, arch.mood, 1, 2);
        let tempo = pick(&mut rng, arch.tempo, 0, 2);
        let extra = pick(&mut rng, arch.extra, 0, 3);

        let mut tags: Vec<String> = Vec::new();
        if sparse {
            tags.push(genres[0].to_string());
            if rng.bernoulli(0.5) {
                tags.push(instruments[0].to_string());
            }
        } else {
            for t in genres.iter().chain(&instruments).chain(&moods).chain(&tempo).chain(&extra) {
                tags.push((*t).to_string());
            }
        }
        for t in tags.iter_mut() {
            if let Some((_, raw)) = VARIANTS.iter().find(|(c, _)| c == t) {
                if rng.bernoulli(0.3) {
                    *t = (*raw).to_string();
                }
            }
        }
        if rng.bernoulli(0.3) {
            tags.push(UNMAPPED[rng.below(UNMAPPED.len())].to_string());
        }

        let mood_text = join_list(&moods);
        let mut caption = format!(
            "A {mood_text} {} {} featuring {}.",
            genres[0],
            arch.noun,
            join_list(&instruments)
        );
        if let Some(t) = tempo.first() {
            caption.push_str(&format!(" The music has a {t} feel throughout."));
        }
        let style = rng.below(10);
        if style < 2 {
            // too short for the caption-length rule
            caption = format!("{} {}", genres[0], arch.noun);
        } else {
            for _ in 0..1 + rng.below(3) {
                caption.push(' ');
                caption.push_str(FILLERS[rng.below(FILLERS.len())]);
            }
            if style == 2 {
                // trailing fragment with no terminal punctuation
                caption.push_str(" and then the");
            }
        }
        out.push(SourceRecord {
            id: format!("src-{n:05}"),
            caption,
            tags,
        });
    }
    out
}

/// Classification data where class `k` is carried by input bit `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConceptData {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    /// Noise-free bits behind each input row.
    pub bits: Vec<AttributeVector>,
    pub classes: usize,
    /// Index of the distractor bit used as the unassociated concept.
    pub neutral_bit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConceptConfig {
    pub classes: usize,
    pub distractors: usize,
    pub per_class: usize,
    /// Standard deviation of Gaussian jitter added to every input.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for PlantedConceptConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            distractors: 12,
            per_class: 150,
            jitter: 0.2,
            seed: 11,
        }
    }
}

/// Inputs are `classes` concept bits (exactly one set, equal to the label)
/// followed by `distractors` fair-coin bits, all with Gaussian jitter.
pub fn planted_concept_data(config: &PlantedConceptConfig) -> PlantedConceptData {
    let dim = config.classes + config.distractors;
    let n = config.classes * config.per_class;
    let mut rng = Rng::new(config.seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i % config.classes).collect();
    rng.shuffle(&mut labels);
    let mut inputs = Matrix::zeros(n, dim);
    let mut bits = Vec::with_capacity(n);
    for (r, &label) in labels.iter().enumerate() {
        let mut b = AttributeVector::zeros(dim);
        b.set(label, true);
        for i in config.classes..dim {
            b.set(i, rng.bernoulli(0.5));
        }
        for (v, on) in inputs.row_mut(r).iter_mut().zip(b.bits()) {
            *v = f64::from(u8::from(*on)) + config.jitter * rng.standard_normal();
        }
        bits.push(b);
    }
    PlantedConceptData {
        inputs,
        labels,
        bits,
        classes: config.classes,
        neutral_bit: config.classes,
    }
}

impl PlantedConceptData {
    /// Rows with the concept bit on and off.
    pub fn split_on_bit(&self, bit: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.bits.len()).partition(|&r| self.bits[r].get(bit))
    }

    pub fn rows_of_class(&self, class: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&r| self.labels[r] == class).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{builtin_synonyms, builtin_taxonomy, canonicalize};

    #[test]
    fn block_corpus_is_seeded_and_shaped() {
        let cfg = BlockCorpusConfig::default();
        let a = block_corpus(&cfg);
        assert_eq!(a, block_corpus(&cfg));
        assert_eq!(a.vectors.len(), 2000);
        assert!(a.vectors.iter().all(|v| v.len() == 60 && v.popcount() >= 1));
        assert_eq!(a.blocks[3], (18..24).collect::<Vec<_>>());
        assert_eq!(a.block_of(19), Some(3));
    }

    #[test]
    fn noise_bits_are_rare() {
        let c = block_corpus(&BlockCorpusConfig::default());
        let (mut inside, mut outside) = (0usize, 0usize);
        for (v, act) in c.vectors.iter().zip(&c.active) {
            for i in v.ones_indices() {
                if act.iter().any(|&b| c.blocks[b].contains(&i)) {
                    inside += 1;
                } else {
                    outside += 1;
                }
            }
        }
        let share = outside as f64 / (inside + outside) as f64;
        assert!(share > 0.02 && share < 0.08, "{share}");
    }

    #[test]
    fn block_taxonomy_matches_indices() {
        let t = block_taxonomy(&BlockCorpusConfig::default());
        assert_eq!(t.dim(), 60);
        assert_eq!(t.attribute(7), "b01_a1");
        assert_eq!(t.category_of("b01_a1"), Some("block_01"));
    }

    #[test]
    fn archetype_names_live_in_the_builtin_taxonomy() {
        let tax = builtin_taxonomy();
        let syn = builtin_synonyms(&tax).unwrap();
        for a in ARCHETYPES {
            for t in a.genre.iter().chain(a.instrument).chain(a.mood).chain(a.tempo).chain(a.extra) {
                assert!(tax.contains(t), "{t}");
            }
        }
        for (canon, raw) in VARIANTS {
            assert_eq!(canonicalize(raw, &tax, &syn).as_deref(), Some(*canon));
        }
        for raw in UNMAPPED {
            assert_eq!(canonicalize(raw, &tax, &syn), None, "{raw}");
        }
    }

    #[test]
    fn planted_data_labels_match_concept_bits() {
        let d = planted_concept_data(&PlantedConceptConfig::default());
        assert_eq!(d.inputs.shape(), (600, 16));
        for k in 0..4 {
            let (on, _) = d.split_on_bit(k);
            assert_eq!(on, d.rows_of_class(k));
        }
    }
}
