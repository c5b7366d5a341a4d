//! Datasets: Iris ingestion, the constructed blob set, standardization
//! and batching.

pub mod batch;
pub mod constructed;
pub mod dataset;
pub mod iris;

pub use batch::batch_iter;
pub use constructed::{make_constructed, Blob, ConstructedSpec, Outlier};
pub use dataset::{Dataset, Sample, Standardization};
pub use iris::{load_iris, parse_iris, BUNDLED_IRIS};
