#pragma once

#include <stdexcept>
#include <string>

namespace lens {

// Error taxonomy mirrors the CLI exit codes: config=1, data=2, gateway=3.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GatewayError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace lens
