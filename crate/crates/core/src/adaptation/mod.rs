//! Unsupervised domain adaptation objectives computed on encoder features.
//!
//! Frames are assigned to characters by CTC argmax, grouped per character,
//! then compared across domains (MMD) or contrasted as centroids (NT-Xent).
//! The domain-adversarial and cross-domain contrastive baselines live here
//! too.

mod assign;
mod contrastive;
mod dat;
mod mmd;
mod objective;

pub use assign::{assign_frame_labels, gather_batch, gather_character_features, CharacterFeatureSets, FrameAssignment};
pub use contrastive::{
    cdcl_loss, centroid_values, compute_centroids, discrimination_loss, mean_pairwise_cosine_distance,
    nt_xent_centroids, CentroidSet, ContrastiveOutput, View,
};
pub use dat::{dat_loss, init_discriminator, DatOutput, DAT_PREFIX};
pub use mmd::{matching_loss, mmd_squared, KernelBank, MatchingOutput, DEFAULT_BANDWIDTH_FACTORS};
pub use objective::{total_loss, total_loss_var, AdaptationConfig, KernelPolicy, LossBreakdown, Method};
