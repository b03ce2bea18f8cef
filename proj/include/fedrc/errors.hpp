#pragma once

#include <stdexcept>
#include <string>

namespace fedrc {

/// Bad or unreadable input data: images, masks, manifests, shards.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments or configuration supplied by the user.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedrc
