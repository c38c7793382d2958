#include "nh/core/error.hpp"

namespace nh {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid_argument";
        case ErrorCode::UnknownPhoneme: return "unknown_phoneme";
        case ErrorCode::OverlappingPhonemes: return "overlapping_phonemes";
        case ErrorCode::DimensionMismatch: return "dimension_mismatch";
        case ErrorCode::VersionMismatch: return "version_mismatch";
        case ErrorCode::TruncatedFile: return "truncated_file";
        case ErrorCode::BadFormat: return "bad_format";
        case ErrorCode::IoError: return "io_error";
        case ErrorCode::ShapeMismatch: return "shape_mismatch";
        case ErrorCode::ContractViolation: return "contract_violation";
        case ErrorCode::TrainingDivergence: return "training_divergence";
        case ErrorCode::EmptyDataset: return "empty_dataset";
        case ErrorCode::BackendUnavailable: return "backend_unavailable";
        case ErrorCode::RegistrationDegenerate: return "registration_degenerate";
        case ErrorCode::NotFound: return "not_found";
        case ErrorCode::ModelNotLoaded: return "model_not_loaded";
    }
    return "unknown";
}

}  // namespace nh
