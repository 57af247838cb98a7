#include "regioncal/parallel.hpp"

#include <cstdlib>
#include <string>
#include <thread>

namespace regioncal {

unsigned resolve_jobs(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("REGIONCAL_JOBS")) {
    try {
      const int parsed = std::stoi(env);
      if (parsed > 0) return static_cast<unsigned>(parsed);
    } catch (const std::exception&) {
      // Malformed values fall through to auto-detection.
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

}  // namespace regioncal
