//! Synthetic labeled tweets with a planted, known signal.
//!
//! Generation rules, for `n` documents and a seed:
//!
//! * `n/2` (rounded down) HUMAN documents, the rest BOT.
//! * Bots are split GPT2 / RNN / OTHERS = 40 / 30 / 30 % by largest remainder.
//! * HUMAN: 4 to 10 words drawn from a casual vocabulary, then three
//!   independent injections, each with probability 0.3: one word of length
//!   4 or more gets two adjacent letters swapped (a misspelling), an
//!   `@mention` is prepended, an emoticon or emoji is appended.
//! * GPT2: one fluent business-news sentence from fixed templates.
//! * RNN: a two- or three-word phrase from a small list repeated 2 to 4
//!   times, so word n-grams repeat inside the document.
//! * OTHERS: a promotional template with a `t.co` link and a hashtag.
//! * Bot documents never contain emoticons, mentions or misspellings. Every
//!   generated word is in the built-in lexicon.
//!
//! Documents are shuffled, then numbered `s00000`, `s00001`, ... All draws
//! come from one ChaCha8 stream seeded with `seed`, so output is a pure
//! function of `(n, seed)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{apportion, Corpus, CreatorCategory, Document};

/// Smallest corpus [`synth_corpus`] produces.
pub const MIN_SYNTH_DOCS: usize = 20;

/// Probability of each injection in human documents.
pub const INJECTION_RATE: f64 = 0.3;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("synthetic corpus needs at least {MIN_SYNTH_DOCS} documents, got {0}")]
    TooSmall(usize),
}

const HUMAN_WORDS: &[&str] = &[
    "lol", "coffee", "mom", "tired", "weekend", "love", "friends", "dog", "cat", "pizza", "sleep", "movie", "tonight",
    "funny", "weird", "miss", "you", "my", "so", "just", "really", "omg", "ok", "yes", "no", "haha", "sunday", "beach",
    "birthday", "party", "cake", "happy", "sad", "hate", "monday", "homework", "brother", "sister", "dad", "kids",
    "lunch", "dinner", "rain", "sun", "music", "song", "concert", "game", "crazy", "sweet", "why", "me", "too",
    "wait", "guys", "best", "day", "ever", "feel", "like", "i", "am", "we", "went", "got", "home", "late", "early",
];

const HUMAN_MENTIONS: &[&str] = &["@jess", "@mike_t", "@anna22", "@bestie", "@coach_k", "@sam"];

const EMOTICONS: &[&str] = &[":)", ":D", ";)", ":(", "<3", "xD", "\u{1F602}", "\u{1F60D}", "\u{1F62D}"];

const GPT2_TEMPLATES: &[&str] = &[
    "The {org} announced a new {thing} that analysts say will reshape the {field} market this year.",
    "Experts believe the latest {thing} from {org} could accelerate growth across the global {field} sector.",
    "According to the report, {org} expects strong demand for its {thing} as customers adopt digital solutions.",
    "In a statement, the {org} said the {thing} will help investors understand key trends in {field}.",
    "The {field} industry continues to evolve as {org} reveals its strategy for the next {thing}.",
];

const GPT2_ORGS: &[&str] = &["company", "platform", "team", "group", "board", "startup"];
const GPT2_THINGS: &[&str] = &["product", "platform", "model", "service", "program", "system", "partnership"];
const GPT2_FIELDS: &[&str] = &["technology", "energy", "health", "education", "finance", "travel"];

const RNN_PHRASES: &[&str] = &[
    "the best day",
    "love love you",
    "good night good",
    "in the world",
    "new video now",
    "the the game",
    "so happy today",
    "all the time",
];

const OTHERS_TEMPLATES: &[&str] = &[
    "Check out our latest {item} update at {url} {tag}",
    "New {item} deals today only! Shop now {url} {tag}",
    "Daily {item} report: prices update every hour {url} {tag}",
    "Free {item} giveaway, follow and share to win {url} {tag}",
];

const OTHERS_ITEMS: &[&str] = &["weather", "stock", "music", "sport", "tech", "travel", "coffee"];
const OTHERS_TAGS: &[&str] = &["#deal", "#news", "#update", "#free", "#daily"];

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty list")
}

fn misspell(word: &str, rng: &mut ChaCha8Rng) -> String {
    let chars: Vec<char> = word.chars().collect();
    let i = rng.gen_range(1..chars.len() - 1);
    let mut out = chars.clone();
    out.swap(i, i + 1);
    if out == chars {
        out.insert(i, chars[i]);
    }
    out.into_iter().collect()
}

fn human_text(rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(4..=10);
    let mut words: Vec<String> = (0..len).map(|_| pick(rng, HUMAN_WORDS).to_string()).collect();
    if rng.gen_bool(INJECTION_RATE) {
        let long: Vec<usize> = (0..words.len()).filter(|&i| words[i].chars().count() >= 4).collect();
        match long.choose(rng) {
            Some(&i) => words[i] = misspell(&words[i], rng),
            None => words.push(misspell("weekend", rng)),
        }
    }
    if rng.gen_bool(INJECTION_RATE) {
        words.insert(0, pick(rng, HUMAN_MENTIONS).to_string());
    }
    if rng.gen_bool(INJECTION_RATE) {
        words.push(pick(rng, EMOTICONS).to_string());
    }
    words.join(" ")
}

fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    slots
        .iter()
        .fold(template.to_string(), |t, (k, v)| t.replace(&format!("{{{k}}}"), v))
}

fn gpt2_text(rng: &mut ChaCha8Rng) -> String {
    let t = pick(rng, GPT2_TEMPLATES);
    let slots = [
        ("org", pick(rng, GPT2_ORGS)),
        ("thing", pick(rng, GPT2_THINGS)),
        ("field", pick(rng, GPT2_FIELDS)),
    ];
    fill(t, &slots)
}

fn rnn_text(rng: &mut ChaCha8Rng) -> String {
    let phrase = pick(rng, RNN_PHRASES);
    let reps = rng.gen_range(2..=4);
    vec![phrase; reps].join(" ")
}

fn others_text(rng: &mut ChaCha8Rng) -> String {
    let t = pick(rng, OTHERS_TEMPLATES);
    let code: String = (0..8)
        .map(|_| {
            let c = rng.gen_range(0..36u32);
            char::from_digit(c, 36).expect("base-36 digit")
        })
        .collect();
    let url = format!("https://t.co/{code}");
    let slots = [("item", pick(rng, OTHERS_ITEMS)), ("url", url.as_str()), ("tag", pick(rng, OTHERS_TAGS))];
    fill(t, &slots)
}

/// Generates the corpus described in the module docs.
pub fn synth_corpus(n: usize, seed: u64) -> Result<Corpus, SynthError> {
    if n < MIN_SYNTH_DOCS {
        return Err(SynthError::TooSmall(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_human = n / 2;
    let [n_gpt2, n_rnn, n_others] = apportion(n - n_human, &[0.4, 0.3, 0.3]);
    let mut drafts: Vec<(CreatorCategory, String, String)> = Vec::with_capacity(n);
    for _ in 0..n_human {
        let account = format!("user_{}", rng.gen_range(0..40));
        drafts.push((CreatorCategory::Human, human_text(&mut rng), account));
    }
    for (cat, count, prefix) in [
        (CreatorCategory::Gpt2, n_gpt2, "gpt2_bot"),
        (CreatorCategory::Rnn, n_rnn, "rnn_bot"),
        (CreatorCategory::Others, n_others, "feed_bot"),
    ] {
        for _ in 0..count {
            let text = match cat {
                CreatorCategory::Gpt2 => gpt2_text(&mut rng),
                CreatorCategory::Rnn => rnn_text(&mut rng),
                _ => others_text(&mut rng),
            };
            drafts.push((cat, text, format!("{prefix}_{}", rng.gen_range(0..5))));
        }
    }
    drafts.shuffle(&mut rng);
    let docs = drafts
        .into_iter()
        .enumerate()
        .map(|(i, (cat, text, account))| Document {
            doc_id: format!("s{i:05}"),
            text,
            label: cat.label(),
            creator_category: cat,
            account,
        })
        .collect();
    Ok(Corpus::new(docs, format!("synth(n={n}, seed={seed})")).expect("generated ids are unique"))
}

/// [`synth_corpus`] rendered in the canonical CSV format.
pub fn synth_csv(n: usize, seed: u64) -> Result<String, SynthError> {
    let corpus = synth_corpus(n, seed)?;
    let mut out = Vec::new();
    corpus.write_canonical(&mut out).expect("writing to memory");
    Ok(String::from_utf8(out).expect("utf-8 output"))
}
