#pragma once

namespace driftbo {

inline constexpr const char* kVersionString = "driftbo 0.1.0";

}  // namespace driftbo
