#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace toxpipe {

// All library failures carry a stable machine-readable code next to the
// human-readable message. The CLI prints both on a single line.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

namespace errc {
inline constexpr const char* config = "config";            // bad or missing configuration key
inline constexpr const char* io = "io";                    // unreadable/unwritable file
inline constexpr const char* format = "format";            // malformed input content
inline constexpr const char* ordering = "ordering";        // out-of-order revision stream
inline constexpr const char* dependency = "dependency";    // missing upstream stage artifact
inline constexpr const char* dimension = "dimension";      // feature dimension mismatch
inline constexpr const char* undefined_metric = "undefined_metric";
inline constexpr const char* diverged = "diverged";        // training hit NaN/Inf
inline constexpr const char* size = "size";                // dataset too small for operation
inline constexpr const char* version = "version";          // artifact version mismatch
}  // namespace errc

}  // namespace toxpipe
