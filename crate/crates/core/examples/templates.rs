//! Builds a deduplicated instruction set from a fixed candidate list and
//! fills one accepted template for a cell.

use std::collections::BTreeMap;

use cellkit::templates::{dedup_pipeline, fill_template, CannedSource, DedupConfig, Task, TemplateRecord};

fn record(instruction: &str, response: &str) -> TemplateRecord {
    TemplateRecord {
        task: Task::Cta,
        instruction: instruction.into(),
        response: response.into(),
        traits: None,
        has_options: false,
        split: None,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let candidates = vec![
        record("What cell type is this {species} profile from {tissue}? {input}", "This is a {output}."),
        // Near duplicate of the first: rewritten by the source, here the next entry.
        record("What cell type is this {species} profile from {tissue}? {input}", "It is a {output}."),
        record("Identify the population this expression profile belongs to: {input}", "{output}"),
        record("Here is a {sequencing_method} readout {input}. Which cell is it?", "Most likely a {output}."),
        record("Please name the cell type for {input}", "The cell is a {output}."),
    ];
    let mut source = CannedSource::new(candidates);
    let out = dedup_pipeline(&mut source, Task::Cta, 10, &DedupConfig::default())?;
    println!(
        "accepted {} (rewrites {}, discarded {}, source exhausted: {})",
        out.records.len(),
        out.stats.rewrites,
        out.stats.discarded,
        out.stats.exhausted
    );
    for r in &out.records {
        println!("  {}", r.instruction);
    }

    let attrs = BTreeMap::from([
        ("species".to_string(), "human".to_string()),
        ("output".to_string(), "B cell".to_string()),
    ]);
    let (q, a) = fill_template(&out.records[0], &attrs, "<cell>", &[], 0)?;
    println!("filled: {q} => {a}");
    Ok(())
}
