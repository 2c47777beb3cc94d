#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lrvq {

enum class Errc {
  non_divisible,
  invalid_variance,
  too_few_rows,
  not_symmetric,
  bad_dim,
  dim_mismatch,
  index_out_of_range,
  already_merged,
  shape_mismatch,
  too_few_subvectors,
  empty_list,
  diverged_loss,
  unmerged_layer,
  incompatible_regime,
  grid_mismatch,
  missing_checkpoint,
  unknown_arch,
  format_error,
  invalid_argument,
};

std::string_view errc_name(Errc code) noexcept;

/// Exception type used throughout the library; `code()` identifies the
/// failure class so callers (tests, CLI exit codes) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace lrvq
