//! Train every ablation on the default MiniHouse config and print the table.
//!
//! `cargo run --release --example ablation_table`

use knowself::labeler::{label_counts, DataMode};
use knowself::pipeline::{ablate, eval_params, render_table, rpo, train_variant, PipelineConfig, World};
use knowself::policy::DecodeMode;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = PipelineConfig::house();
    let world = World::build(&cfg)?;
    let full = train_variant(&cfg, &world, DataMode::Full, true)?;
    println!(
        "knowledge base {} rules, D_self {} samples {:?}, {} pairs",
        world.kb.len(),
        full.data.len(),
        label_counts(&full.data),
        full.pairs.len()
    );
    let mut rows = Vec::new();
    let (r, _) = eval_params(&cfg, &world, &full.reference.params, DecodeMode::Free)?;
    rows.push(("sft only".to_string(), r));
    let dpo = rpo(&cfg, &full.reference.params, &full.pairs, DataMode::Full, 0.0)?;
    let (r, _) = eval_params(&cfg, &world, &dpo.params, DecodeMode::Free)?;
    rows.push(("dpo (alpha=0)".to_string(), r));
    rows.extend(ablate(&cfg, &world)?.into_iter().map(|row| (row.name, row.report)));
    println!("{}", render_table(cfg.env, &rows));
    Ok(())
}
