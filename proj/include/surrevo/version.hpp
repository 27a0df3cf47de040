#pragma once

namespace surrevo {

inline constexpr const char* kEngineVersion = "0.1.0";

} // namespace surrevo
