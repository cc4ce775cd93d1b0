//! Tabular data and a small tree-ensemble model to explain.

mod dataset;
mod forest;

pub use dataset::{holdout_split, load_csv, save_csv, CsvSchema, Dataset, Target, TargetKind, MAX_INTEGER_CLASSES};
pub use forest::{
    train_ensemble, EnsembleParams, Node, SplitRule, Task, Tree, TreeEnsemble, MIN_TRAINING_ROWS,
};
