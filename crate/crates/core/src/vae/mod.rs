//! Toy convolutional VAE, projection head, objectives and teachers.

mod config;
mod model;
mod objectives;
mod teacher;

pub use config::{EncoderConfig, ProjectionConfig, Resample, TeacherConfig, TeacherKind};
pub use model::{
    reparameterize, valid_frames, Decoder, DecoderCache, Encoder, EncoderCache, LatentPosterior, Projection,
    ProjectionCache, VaeModel, LOGVAR_MAX, LOGVAR_MIN,
};
pub(crate) use model::{reparameterize_with, standard_normal};
pub use objectives::{kl_loss, KlValue, ReconLoss, ReconValue, STFT_WINDOWS};
pub use teacher::{
    build_teacher, resample, resample_linear, resample_mean_pool, teacher_features, ClipInput, FileTeacher,
    FrozenRandomTeacher, Teacher,
};
