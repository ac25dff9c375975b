#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace toxpipe {

// UTC instants at second resolution, stored as seconds since the Unix epoch.
// Only the fixed layout "YYYY-MM-DDThh:mm:ssZ" is accepted; that is the wire
// format of every timestamp field in the pipeline.
std::int64_t parse_utc(std::string_view text);

std::string format_utc(std::int64_t seconds);

int utc_year(std::int64_t seconds);

}  // namespace toxpipe
