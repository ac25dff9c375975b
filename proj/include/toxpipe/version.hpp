#pragma once

namespace toxpipe {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace toxpipe
