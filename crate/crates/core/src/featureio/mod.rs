//! Tensor files, waveforms, manifests and the synthetic corpus.

mod manifest;
mod synth;
mod tensor;
mod wav;

pub use manifest::{DatasetManifest, ManifestEntry};
pub use synth::{generate_synthetic_corpus, synthesize_clip, EnvelopeFamily, SyntheticSpec};
pub use tensor::{read_tensor, write_tensor, DType, TensorData, TensorFile};
pub use wav::{load_waveform, quantize_pcm16, wav_num_samples, write_waveform, Waveform, SAMPLE_RATE};
