#include "lwsr/common.hpp"

namespace lwsr {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::invalid_argument: return "invalid_argument";
        case Errc::invalid_state: return "invalid_state";
        case Errc::missing_file: return "missing_file";
        case Errc::dimension_mismatch: return "dimension_mismatch";
        case Errc::duplicate_id: return "duplicate_id";
        case Errc::non_finite: return "non_finite";
        case Errc::invalid_stream: return "invalid_stream";
        case Errc::io_error: return "io_error";
        case Errc::invalid_config: return "invalid_config";
    }
    return "unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

std::uint64_t derive_seed(std::uint64_t base, std::string_view stream_name) noexcept {
    // FNV-1a over the name, then a splitmix64 finalizer over base ^ hash.
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : stream_name) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    std::uint64_t z = base ^ h;
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace lwsr
