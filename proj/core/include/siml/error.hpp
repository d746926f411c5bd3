#pragma once

#include <stdexcept>
#include <string>

namespace siml {

enum class Errc {
  zero_vector,
  dim_mismatch,
  out_of_bounds,
  invalid_config,
  source_too_small,
  image_too_small,
  degenerate_norm,
  empty_batch,
  index_out_of_range,
  uninitialized_slot,
  query_without_match,
  malformed_csv,
  io_failure,
  checkpoint_mismatch,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace siml
