//! Text-text bias table, cosine ratios and ε-closeness on a planted prompt store.

use fairdiff::bias::{bias_ratio, bias_table_csv, epsilon_closeness, text_text_bias_table, SortOrder};
use fairdiff::synthetic::{planted_bias_store, PlantedBiasRow};

fn main() -> fairdiff::Result<()> {
    let rows = [
        PlantedBiasRow::new("engineer", 0.968, 0.931, 0.961),
        PlantedBiasRow::new("dancer", 0.944, 0.970, 0.972),
        PlantedBiasRow::new("pilot", 0.959, 0.941, 0.962),
    ];
    let store = planted_bias_store(&rows, ("male", "female"), 256, 1)?;
    let bases = ["engineer", "dancer", "pilot"];

    let table = text_text_bias_table(&store, &bases, ("male", "female"), SortOrder::Descending)?;
    print!("{}", bias_table_csv(&table, None));

    for b in bases {
        let ratio = bias_ratio(&store, b, ("male", "female"))?;
        let close = epsilon_closeness(&store, b, "male", 0.3)?;
        println!(
            "{b}: ratio {ratio:.4}, distance to \"male {b}\" {:.4} (0.3-close: {})",
            close.distance, close.is_close
        );
    }
    Ok(())
}
