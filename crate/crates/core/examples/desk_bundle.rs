//! Writes the planted-bias desk dataset into a directory.
//!
//! cargo run -p toxfair --example desk_bundle -- data/

use std::path::PathBuf;

use toxfair::planted::{write_desk_bundle, PlantedSpec};

fn main() -> std::io::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"));
    let bundle = write_desk_bundle(&dir, &PlantedSpec::default(), 400)?;
    println!("wrote {}", bundle.comments.parent().unwrap_or(&dir).display());
    Ok(())
}
