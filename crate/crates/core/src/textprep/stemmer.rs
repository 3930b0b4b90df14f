//! Porter suffix-stripping stemmer.
//!
//! Steps 1 and 5 carry conditional logic and live in code; the plain suffix
//! rewrite tables of steps 2 to 4 are loaded from `data/porter_rules.txt`.

use std::sync::OnceLock;

const RULES: &str = include_str!("../../data/porter_rules.txt");

struct RuleTables {
    step2: Vec<(String, String)>,
    step3: Vec<(String, String)>,
    step4: Vec<(String, String)>,
}

fn tables() -> &'static RuleTables {
    static TABLES: OnceLock<RuleTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut t = RuleTables {
            step2: Vec::new(),
            step3: Vec::new(),
            step4: Vec::new(),
        };
        for line in RULES.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(step), Some(suffix), Some(repl)) = (parts.next(), parts.next(), parts.next())
            else {
                panic!("malformed porter rule line: {line}");
            };
            let repl = if repl == "-" { String::new() } else { repl.to_string() };
            let table = match step {
                "2" => &mut t.step2,
                "3" => &mut t.step3,
                "4" => &mut t.step4,
                other => panic!("unknown porter step {other}"),
            };
            table.push((suffix.to_string(), repl));
        }
        t
    })
}

/// Stems a lowercase word. Words of two letters or fewer, and words with
/// non-ASCII-letter characters, are returned unchanged.
pub fn stem(word: &str) -> String {
    if word.len() <= 2 || !word.bytes().all(|b| b.is_ascii_lowercase()) {
        return word.to_string();
    }
    let mut w: Vec<u8> = word.as_bytes().to_vec();
    step1a(&mut w);
    step1b(&mut w);
    step1c(&mut w);
    apply_table(&mut w, &tables().step2, |_, stem| measure(stem) > 0);
    apply_table(&mut w, &tables().step3, |_, stem| measure(stem) > 0);
    step4(&mut w);
    step5(&mut w);
    String::from_utf8(w).expect("ascii in, ascii out")
}

fn is_consonant(w: &[u8], i: usize) -> bool {
    match w[i] {
        b'a' | b'e' | b'i' | b'o' | b'u' => false,
        b'y' => i == 0 || !is_consonant(w, i - 1),
        _ => true,
    }
}

/// Number of vowel-consonant sequences in `w`.
fn measure(w: &[u8]) -> usize {
    let mut m = 0;
    let mut i = 0;
    let n = w.len();
    while i < n && is_consonant(w, i) {
        i += 1;
    }
    loop {
        while i < n && !is_consonant(w, i) {
            i += 1;
        }
        if i >= n {
            return m;
        }
        while i < n && is_consonant(w, i) {
            i += 1;
        }
        m += 1;
    }
}

fn has_vowel(w: &[u8]) -> bool {
    (0..w.len()).any(|i| !is_consonant(w, i))
}

fn ends_double_consonant(w: &[u8]) -> bool {
    let n = w.len();
    n >= 2 && w[n - 1] == w[n - 2] && is_consonant(w, n - 1)
}

/// consonant-vowel-consonant ending where the last consonant is not w, x or y.
fn ends_cvc(w: &[u8]) -> bool {
    let n = w.len();
    n >= 3
        && is_consonant(w, n - 3)
        && !is_consonant(w, n - 2)
        && is_consonant(w, n - 1)
        && !matches!(w[n - 1], b'w' | b'x' | b'y')
}

fn replace_suffix(w: &mut Vec<u8>, suffix_len: usize, repl: &[u8]) {
    w.truncate(w.len() - suffix_len);
    w.extend_from_slice(repl);
}

fn step1a(w: &mut Vec<u8>) {
    if w.ends_with(b"sses") || w.ends_with(b"ies") {
        w.truncate(w.len() - 2);
    } else if w.ends_with(b"ss") {
    } else if w.ends_with(b"s") {
        w.pop();
    }
}

fn step1b(w: &mut Vec<u8>) {
    if w.ends_with(b"eed") {
        if measure(&w[..w.len() - 3]) > 0 {
            w.pop();
        }
        return;
    }
    let stripped = if w.ends_with(b"ed") && has_vowel(&w[..w.len() - 2]) {
        w.truncate(w.len() - 2);
        true
    } else if w.ends_with(b"ing") && has_vowel(&w[..w.len() - 3]) {
        w.truncate(w.len() - 3);
        true
    } else {
        false
    };
    if !stripped {
        return;
    }
    if w.ends_with(b"at") || w.ends_with(b"bl") || w.ends_with(b"iz") {
        w.push(b'e');
    } else if ends_double_consonant(w) && !matches!(w[w.len() - 1], b'l' | b's' | b'z') {
        w.pop();
    } else if measure(w) == 1 && ends_cvc(w) {
        w.push(b'e');
    }
}

fn step1c(w: &mut [u8]) {
    let n = w.len();
    if n > 1 && w[n - 1] == b'y' && has_vowel(&w[..n - 1]) {
        w[n - 1] = b'i';
    }
}

fn apply_table(w: &mut Vec<u8>, table: &[(String, String)], cond: impl Fn(&str, &[u8]) -> bool) {
    if let Some((suffix, repl)) = table.iter().find(|(s, _)| w.ends_with(s.as_bytes())) {
        let stem_len = w.len() - suffix.len();
        if cond(suffix, &w[..stem_len]) {
            replace_suffix(w, suffix.len(), repl.as_bytes());
        }
    }
}

fn step4(w: &mut Vec<u8>) {
    apply_table(w, &tables().step4, |suffix, stem| {
        measure(stem) > 1 && (suffix != "ion" || matches!(stem.last(), Some(b's' | b't')))
    });
}

fn step5(w: &mut Vec<u8>) {
    if w.ends_with(b"e") {
        let stem = &w[..w.len() - 1];
        let m = measure(stem);
        if m > 1 || (m == 1 && !ends_cvc(stem)) {
            w.pop();
        }
    }
    if measure(w) > 1 && ends_double_consonant(w) && w.ends_with(b"l") {
        w.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_family() {
        assert_eq!(stem("running"), "run");
        assert_eq!(stem("runs"), "run");
        assert_eq!(stem("ran"), "ran");
    }

    #[test]
    fn classic_examples() {
        // step 1a
        for (w, s) in [("caresses", "caress"), ("ponies", "poni"), ("caress", "caress"), ("cats", "cat")] {
            assert_eq!(stem(w), s, "{w}");
        }
        // step 1b
        for (w, s) in [
            ("feed", "feed"),
            ("agreed", "agre"),
            ("plastered", "plaster"),
            ("bled", "bled"),
            ("motoring", "motor"),
            ("sing", "sing"),
            ("conflated", "conflat"),
            ("troubled", "troubl"),
            ("sized", "size"),
            ("hopping", "hop"),
            ("falling", "fall"),
            ("hissing", "hiss"),
            ("filing", "file"),
        ] {
            assert_eq!(stem(w), s, "{w}");
        }
        // later steps
        for (w, s) in [
            ("happy", "happi"),
            ("relational", "relat"),
            ("conditional", "condit"),
            ("generalization", "gener"),
            ("hopefulness", "hope"),
            ("triplicate", "triplic"),
            ("revival", "reviv"),
            ("adjustment", "adjust"),
            ("adoption", "adopt"),
            ("controlling", "control"),
            ("rolling", "roll"),
            ("probate", "probat"),
            ("rate", "rate"),
            ("cease", "ceas"),
        ] {
            assert_eq!(stem(w), s, "{w}");
        }
    }

    #[test]
    fn short_and_non_ascii_words_untouched() {
        assert_eq!(stem("is"), "is");
        assert_eq!(stem("café"), "café");
        assert_eq!(stem("don't"), "don't");
    }

    #[test]
    fn measure_examples() {
        for (w, m) in [("tr", 0), ("ee", 0), ("tree", 0), ("by", 0), ("trouble", 1), ("oats", 1), ("trees", 1), ("troubles", 2), ("private", 2), ("oaten", 2)] {
            assert_eq!(measure(w.as_bytes()), m, "{w}");
        }
    }
}
