pub mod audio;
pub mod labels;
pub mod scoring;
