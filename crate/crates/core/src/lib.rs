//! Streaming approximate-nearest-neighbor engine over a tiered vector store.
//!
//! Modules: [`store`] (hot/main/disk tiers),
//! [`graph`] (versioned fixed-degree graph and its construction), [`cache`]
//! (workload-aware placement and baselines), [`search`] (co-processing beam
//! search), and [`update`] (insert, delete, repair, consolidation, sync).
//! [`StreamingIndex`] ties them together.
//!
//! ```
//! use tierann::store::Dataset;
//! use tierann::{IndexConfig, StreamingIndex};
//!
//! let data = Dataset::from_flat(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
//! let index = StreamingIndex::build(IndexConfig::new(2, 16), &data).unwrap();
//! let h = index.insert(&[1.0, 1.0]).unwrap();
//! let hits = index.search(&[0.9, 0.9], 1, 8, 7).unwrap();
//! assert_eq!(hits.ids, vec![h]);
//! index.delete(h).unwrap();
//! index.maintain().unwrap();
//! assert!(index.search(&[0.9, 0.9], 1, 8, 7).unwrap().ids != vec![h]);
//! ```

pub mod cache;
pub mod config;
pub mod distance;
mod error;
pub mod graph;
mod index;
pub mod search;
pub mod store;
pub mod update;

pub use error::{Error, Result};
pub use index::{IndexConfig, StreamingIndex, UpdateConfig};
