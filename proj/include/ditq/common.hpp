#ifndef DITQ_COMMON_HPP
#define DITQ_COMMON_HPP

#include <stdexcept>
#include <string>

namespace ditq {

inline constexpr const char* kVersion = "1.0.0";

// File/format problems (bad magic, truncation, unreadable paths).
class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

// User-facing configuration problems (bad flags, invalid config values).
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ditq

#endif  // DITQ_COMMON_HPP
