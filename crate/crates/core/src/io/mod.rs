//! File formats and persistence: images (PPM and the lossless CIAF1
//! carrier), prompt files and the bundled corpus, run configurations with
//! content-hashed ids, and the JSON/CSV report writer.

pub mod config;
pub mod image;
pub mod prompts;
pub mod report;

pub use config::{
    load_run_config, run_id, save_run_config, PromptFileEntry, RunConfig, TOOL_VERSION,
};
pub use image::{load_image_f32, load_image_ppm, save_image_f32, save_image_ppm};
pub use prompts::{
    bundled_prompts, load_prompts, split_bundled_corpus, CorpusSplit, EVAL_PER_CATEGORY,
    TRAIN_PER_CATEGORY,
};
pub use report::{read_report, write_report, LabeledAsr, LabeledCeProfile, ResultRecord};
