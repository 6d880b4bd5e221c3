#pragma once

#include <cstdint>

namespace avh {

/// Binary ground truth; fake is the positive class for every AUC.
enum class Label : std::uint8_t { real = 0, fake = 1 };

inline int to_int(Label label) { return static_cast<int>(label); }

}  // namespace avh
