//! Verification metrics (EER, minDCF) and the diarization error rate.

mod assignment;
mod der;
mod verification;

pub use assignment::max_weight_assignment;
pub use der::{compute_der, compute_der_with, DerBreakdown, DerConfig};
pub use verification::{
    compute_eer, compute_min_dcf, detection_curve, eer_from_scores, labeled_scores,
    min_dcf_from_scores, DcfParams, DetectionPoint, EerResult, MinDcfResult,
};
