//! Sweep orchestration: configs, presets, execution, and the CSV, SVG and
//! table artifacts a run leaves behind.

mod config;
mod plot;
mod presets;
mod results;
mod runner;
mod selftest;
mod snr;
mod table;

pub use config::{hidden_label, Cell, EvalMode, SweepConfig, SystemFamily, DEFAULT_HIDDEN};
pub use plot::{collect_series, emit_plot, render_svg, PlotSpec, Series};
pub use presets::{preset, PRESETS};
pub use results::{cell_rows, read_rows, write_rows, ResultRow, RESULT_COLUMNS};
pub use runner::{
    assemble_results, cell_datasets, cell_train_config, evaluate_cell_model, execute_cell, rerun_cells, results_path,
    run_cell, run_sweep, train_cell_model, CellRecord, CellSeeds, CellStatus, RunManifest, CELLS_DIR, CONFIG_FILE,
    MANIFEST_FILE, RESULTS_FILE, TOOL_VERSION,
};
pub use selftest::{run_selftest, CheckOutcome};
pub use snr::{snr_study, write_snr_csv, SnrRow};
pub use table::{
    data_table, format_table, read_table_csv, report_tables, table_row, write_table_csv, TableRow, DECAY_THRESHOLD,
    TABLE_DIM,
};
