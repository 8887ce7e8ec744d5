//! File formats: graph descriptions, run manifests, CSV outputs, and the
//! vascular-network converter.

mod csv_out;
mod graph_file;
mod manifest;
mod network;

pub use csv_out::{
    emit_bounce_csv, emit_crossing_report_csv, emit_density_csv, emit_exit_csv, emit_summary_csv, fmt_f64,
    read_density_csv, CsvError, DensityRow, DENSITY_HEADER,
};
pub use graph_file::{parse_graph_file, DriftEntry, GraphFile, GraphFileError, FORMAT_VERSION};
pub use manifest::{ManifestError, Mode, RunManifest};
pub use network::{network_to_graph_file, NetworkError};
