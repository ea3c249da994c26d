//! Regenerates the bundled price fixtures and sample configs.
//!
//! cargo run --example gen_fixtures -- [out_dir]

use std::fs;
use std::path::PathBuf;

use gbm_risk::fixtures::{crypto_like, equity_like, fixture_meta, generate_prices};
use gbm_risk::market_data::save_prices;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    fs::create_dir_all(&out)?;
    for spec in [crypto_like(), equity_like()] {
        let series = generate_prices(&spec)?;
        save_prices(&series, out.join(format!("{}.csv", spec.name)))?;
        let meta = serde_json::to_string_pretty(&fixture_meta(&spec, &series))?;
        fs::write(out.join(format!("{}.meta.json", spec.name)), meta + "\n")?;
        let config = format!(
            "price_csv = \"{}.csv\"\nn_paths = 10000\nhorizon_years = 1.0\nalpha = 0.05\n\
             initial_value = 100000.0\nseed = 42\nportfolio_mode = \"mvp\"\n",
            spec.name
        );
        fs::write(out.join(format!("{}.toml", spec.name)), config)?;
        println!("wrote {} ({} rows)", spec.name, series.n_dates());
    }
    Ok(())
}
