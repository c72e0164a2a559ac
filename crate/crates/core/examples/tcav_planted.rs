//! Concept attribution on a classifier with a known answer: class `k` is
//! decided by input bit `k`, the distractor bits carry no label signal.

use conceptsynth::synthetic::{planted_concept_data, PlantedConceptConfig};
use conceptsynth::tcav::{
    run_tcav, train_probe_classifier, ClassExamples, ConceptExample, ConceptPool, ProbeConfig, TcavConfig,
    TcavResult,
};

pub fn run_example(seed: u64) -> Result<Vec<TcavResult>, Box<dyn std::error::Error>> {
    let data = planted_concept_data(&PlantedConceptConfig { seed, ..Default::default() });
    let classes: Vec<String> = (0..data.classes).map(|k| format!("class_{k}")).collect();
    let (model, report) = train_probe_classifier(&data.inputs, &data.labels, &classes, &ProbeConfig { seed, ..Default::default() })?;
    println!("probe validation accuracy {:.3}", report.validation_accuracy);

    let example = |r: usize| ConceptExample {
        id: format!("x{r}"),
        vector: data.inputs.row(r).to_vec(),
    };
    let pool = |name: &str, bit: usize| {
        let (on, off) = data.split_on_bit(bit);
        ConceptPool {
            concept: name.to_string(),
            positives: on.into_iter().map(example).collect(),
            negatives: off.into_iter().map(example).collect(),
        }
    };
    let pools = vec![pool("concept_0", 0), pool("concept_2", 2), pool("distractor", data.neutral_bit)];
    let targets: Vec<ClassExamples> = [0, 2]
        .into_iter()
        .map(|k| ClassExamples {
            class: k,
            inputs: data.inputs.select_rows(&data.rows_of_class(k)),
        })
        .collect();

    let config = TcavConfig {
        layer: Some("hidden1".into()),
        seed,
        ..TcavConfig::default()
    };
    let results = run_tcav(&model, &pools, &targets, &config)?;
    for r in &results {
        println!(
            "{:<11} {:<8} score {:.3}  cav acc {:.3}  p {:.2e}{}",
            r.concept,
            r.class,
            r.score,
            r.cav_accuracy,
            r.p_value,
            if r.significant { "  *" } else { "" }
        );
    }
    Ok(results)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    run_example(seed)?;
    Ok(())
}
