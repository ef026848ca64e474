#ifndef NVNM_ERRORS_HPP
#define NVNM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace nvnm {

// Exit-code contract of the CLI: 0 success, 1 validation, 2 sampling, 3 I/O.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SamplingError : std::runtime_error {
  explicit SamplingError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace nvnm

#endif  // NVNM_ERRORS_HPP
