//! Datasets, synthetic task suites and feature-store files.

pub mod csv_io;
pub mod dataset;
pub mod split;
pub mod store_io;
pub mod synthetic;

pub use csv_io::{load_dataset_csv, write_dataset_csv, CsvSchema};
pub use dataset::{Split, SplitData, TaskDataset};
pub use split::split_dataset;
pub use store_io::{read_feature_store, write_feature_store};
pub use synthetic::{
    generate_synthetic_suite, load_suite, write_suite, ChildTaskSpec, SyntheticSuite, SyntheticSuiteSpec,
};
