#pragma once

#include <string>
#include <string_view>

namespace dexp {

/// Classic Porter stemming algorithm (the canonical five-step variant).
/// Expects a lowercase word; words of length <= 2 are returned unchanged.
std::string porter_stem(std::string_view word);

}  // namespace dexp
