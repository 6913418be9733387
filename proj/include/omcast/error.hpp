#pragma once

#include <stdexcept>
#include <string>

namespace omcast {

/// Invalid or unknown configuration value; `key()` is the dotted path.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& what)
        : std::runtime_error(key.empty() ? what : key + ": " + what), key_(std::move(key))
    {
    }

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

} // namespace omcast
