#pragma once

#include <catch2/catch_amalgamated.hpp>

#include "hclors/error.hpp"

namespace testutil {

inline auto error_kind(hclors::ErrorKind kind) {
  return Catch::Matchers::Predicate<hclors::Error>(
      [kind](const hclors::Error& e) { return e.kind() == kind; },
      std::string("error kind is '") + hclors::to_string(kind) + "'");
}

}  // namespace testutil
