//! Writes a self-contained synthetic workspace (500 reviews, mock NLI table,
//! scripted LLM and annotators) that the `privmine` CLI can run offline.
//!
//!     cargo run -p privmine-core --example demo_workspace -- /tmp/demo
//!     privmine --config /tmp/demo/config.json extract

fn main() -> std::io::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "demo".into());
    let seed = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    std::fs::create_dir_all(&dir)?;
    let fx = privmine::synth::write_extraction_fixture(std::path::Path::new(&dir), seed)?;
    println!("{}", fx.config_path.display());
    println!("{}", serde_json::to_string_pretty(&fx.ledger)?);
    Ok(())
}
