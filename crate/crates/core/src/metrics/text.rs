use std::collections::HashMap;

/// Lowercase, punctuation replaced by spaces, split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_punctuation() || is_unicode_punct(c) { ' ' } else { c })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn is_unicode_punct(c: char) -> bool {
    matches!(
        c,
        '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{00A1}' | '\u{00AB}' | '\u{00BB}' | '\u{00BF}'
    )
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Corpus-free sentence BLEU.
///
/// Uses clipped n-gram precisions up to `min(max_n, |candidate|)`, their
/// geometric mean, and a brevity penalty against the closest reference length.
/// Orders above one with no matches are smoothed to `1 / (total + 1)`.
pub fn bleu<S: AsRef<str>>(candidate: &str, references: &[S], max_n: usize) -> f64 {
    let cand = tokenize(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r.as_ref())).collect();
    if cand.is_empty() || refs.is_empty() || max_n == 0 {
        return 0.0;
    }
    let orders = max_n.min(cand.len());
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let cand_counts = ngram_counts(&cand, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (gram, c) in ngram_counts(r, n) {
                let e = max_ref.entry(gram).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let clipped: usize = cand_counts
            .iter()
            .map(|(gram, &c)| c.min(max_ref.get(gram).copied().unwrap_or(0)))
            .sum();
        let total = cand.len() + 1 - n;
        let precision = if clipped > 0 {
            clipped as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (total as f64 + 1.0)
        };
        log_sum += precision.ln();
    }
    let c = cand.len();
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0);
    let brevity = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    brevity * (log_sum / orders as f64).exp()
}

/// Length of the longest common subsequence.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(curr[j]) };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

/// ROUGE-L from the token-level LCS.
pub fn rouge_l(candidate: &str, reference: &str) -> RougeScore {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() || refr.is_empty() {
        return RougeScore {
            precision: 0.0,
            recall: 0.0,
            f_score: 0.0,
        };
    }
    let l = lcs_length(&cand, &refr) as f64;
    let precision = l / cand.len() as f64;
    let recall = l / refr.len() as f64;
    let f_score = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    RougeScore {
        precision,
        recall,
        f_score,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenization_rules() {
        assert_eq!(tokenize("A Folk-song, played LIVE!"), ["a", "folk", "song", "played", "live"]);
    }

    #[test]
    fn bleu_identity_and_short_candidate() {
        let s = "a gentle acoustic guitar melody with soft vocals";
        assert_eq!(bleu(s, &[s], 4), 1.0);
        let v = bleu("the cat", &["the cat sat"], 4);
        assert!((v - (-0.5f64).exp()).abs() < 1e-9, "{v}");
    }

    #[test]
    fn bleu_disjoint_and_empty() {
        assert!(bleu("alpha beta gamma delta", &["one two three four"], 4) < 0.05);
        assert_eq!(bleu("", &["x"], 4), 0.0);
    }

    #[test]
    fn bleu_smooths_missing_higher_orders() {
        // unigrams all match, no bigram does: p1 = 1, p2 = 1/(2+1)
        let v = bleu("b a c", &["a b c"], 2);
        let expected = (1.0f64.ln() + (1.0f64 / 3.0).ln()) / 2.0;
        assert!((v - expected.exp()).abs() < 1e-12);
    }

    #[test]
    fn rouge_cases() {
        let r = rouge_l("a b c", "a x c");
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.f_score - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge_l("same words here", "same words here").f_score, 1.0);
        assert_eq!(rouge_l("a b", "c d").f_score, 0.0);
        assert_eq!(rouge_l("", "c d").f_score, 0.0);
    }

    #[test]
    fn case_does_not_matter() {
        let c = "Upbeat Folk with Acoustic Guitar";
        let r = "an upbeat folk tune with acoustic guitar";
        assert_eq!(bleu(c, &[r], 4), bleu(&c.to_lowercase(), &[r.to_uppercase()], 4));
        assert_eq!(rouge_l(c, r), rouge_l(&c.to_uppercase(), r));
    }
}
