//! Synthetic domain families, CSV ingestion and the split protocols.

mod csv_io;
mod graph_gen;
mod group;
mod split;
mod synthetic;

pub use csv_io::{load_csv, write_csv, CsvLayout, CsvSchema};
pub use graph_gen::{gen_graph, GraphModel};
pub use group::{DomainGroup, DomainSeries, Provenance};
pub use split::{temporal_domain_split, window_and_split, window_starts, Splits, DEFAULT_RATIOS};
pub use synthetic::{
    affine_constants, correlation, gen_domains, mean_pairwise_correlation, private_field,
    shared_latent, SyntheticConfig, DIFFUSION_RATE,
};
