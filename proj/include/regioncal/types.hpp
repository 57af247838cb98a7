#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace regioncal {

// Dense non-negative identifiers. Classes are global to a dataset; regions
// and superpixels are numbered per image.
using ClassId = std::uint32_t;
using RegionId = std::uint32_t;
using SuperpixelId = std::uint32_t;
using ImageId = std::uint32_t;

inline constexpr ClassId kInvalidClass = std::numeric_limits<ClassId>::max();
inline constexpr SuperpixelId kInvalidSuperpixel = std::numeric_limits<SuperpixelId>::max();

using FeatureVector = std::vector<double>;

/// Error with a machine-readable kind. The CLI renders these as single-line
/// JSON objects on stderr.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

[[noreturn]] inline void fail(const std::string& kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace regioncal
