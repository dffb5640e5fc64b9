#pragma once

#include <stdexcept>
#include <string>

namespace probsurf {

// Error categories map onto CLI exit codes: config 2, numeric 3, I/O 4.
class ConfigError : public std::invalid_argument
{
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

class NumericError : public std::runtime_error
{
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error
{
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg)
{
    if (!cond)
        throw ConfigError(msg);
}

} // namespace probsurf
