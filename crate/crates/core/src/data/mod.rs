//! Images, labelled collections, pair sampling, splits and synthetic styles.

pub mod dataset;
pub mod image;
pub mod pairs;
pub mod split;
pub mod synth;

pub use self::dataset::{load_class_dir, load_dataset, write_dataset, Sample, SupportSet};
pub use self::image::{load_image, load_rgb, resize_rgb, ImageTensor, CHANNEL_MEAN, CHANNEL_STD};
pub use self::pairs::{all_pairs, sample_pairs, PairSample};
pub use self::split::{split_evaluation_sets, train_val_split, EvalSplit, SUBSAMPLE_SIZES};
pub use self::synth::{generate_style_dataset, StyleSpec};
