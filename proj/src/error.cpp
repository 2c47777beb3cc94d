#include "lrvq/error.hpp"

namespace lrvq {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::non_divisible: return "NonDivisible";
    case Errc::invalid_variance: return "InvalidVariance";
    case Errc::too_few_rows: return "TooFewRows";
    case Errc::not_symmetric: return "NotSymmetric";
    case Errc::bad_dim: return "BadDim";
    case Errc::dim_mismatch: return "DimMismatch";
    case Errc::index_out_of_range: return "IndexOutOfRange";
    case Errc::already_merged: return "AlreadyMerged";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::too_few_subvectors: return "TooFewSubvectors";
    case Errc::empty_list: return "EmptyList";
    case Errc::diverged_loss: return "DivergedLoss";
    case Errc::unmerged_layer: return "UnmergedLayer";
    case Errc::incompatible_regime: return "IncompatibleRegime";
    case Errc::grid_mismatch: return "GridMismatch";
    case Errc::missing_checkpoint: return "MissingCheckpoint";
    case Errc::unknown_arch: return "UnknownArch";
    case Errc::format_error: return "FormatError";
    case Errc::invalid_argument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

}  // namespace lrvq
