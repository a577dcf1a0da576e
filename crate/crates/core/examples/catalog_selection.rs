//! Picks one model card per category for a task goal and renders the priors.
//!
//! Run with `cargo run --example catalog_selection -- "<goal>" [catalog-path]`.

use std::path::Path;

use weave::knowledge::{load_catalog, select_candidates, summarize_priors, Catalog};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let goal = args.next().unwrap_or_else(|| "Sleep stage classification from single-night EEG".into());
    let catalog = match args.next() {
        Some(p) => load_catalog(Path::new(&p))?,
        None => Catalog::bundled(),
    };
    println!("catalog {} ({} cards)", catalog.version, catalog.cards.len());
    println!("goal: {goal}\n");
    let chosen = select_candidates(&goal, &catalog)?;
    for card in &chosen {
        println!("{:<24} {}", card.category, card.name);
    }
    let digest = summarize_priors(&chosen, &catalog.version, None)?;
    println!("\n{}", digest.render());
    Ok(())
}
