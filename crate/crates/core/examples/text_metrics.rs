//! Vector and text metrics, collected into mergeable reports.

use conceptsynth::metrics::{bleu, diversity, hamming, jaccard, merge_reports, rouge_l, MetricReport};
use conceptsynth::taxonomy::AttributeVector;

pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let a = AttributeVector::from_indices(8, [0, 1, 2]);
    let b = AttributeVector::from_indices(8, [1, 2, 5]);
    let c = AttributeVector::from_indices(8, [6, 7]);
    println!("jaccard {:.4}  hamming {:.4}", jaccard(&a, &b)?, hamming(&a, &b)?);

    let reference = "a calm jazz piece with soft piano and brushed drums";
    let candidate = "a calm jazz track with piano and drums";
    let b4 = bleu(candidate, &[reference], 4);
    let rl = rouge_l(candidate, reference);
    println!("bleu {b4:.4}  rouge-l p {:.4} r {:.4} f {:.4}", rl.precision, rl.recall, rl.f_score);

    let mut first = MetricReport::new("beta-0.25");
    first.insert("jaccard", jaccard(&a, &b)?);
    first.insert("diversity", diversity(&[a.clone(), b.clone(), c.clone()])?);
    first.insert("bleu", b4);
    let mut second = MetricReport::new("beta-4");
    second.insert("jaccard", jaccard(&a, &c)?);
    second.insert("diversity", diversity(&[a.clone(), a.clone(), a])?);
    second.insert("rouge_l", rl.f_score);

    let table = merge_reports(&[first, second])?;
    let text = table.to_text();
    println!("{text}");
    Ok(text)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()?;
    Ok(())
}
