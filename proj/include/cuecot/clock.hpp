#pragma once

#include <chrono>
#include <ctime>
#include <string>

namespace cuecot {

/// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ".
inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace cuecot
