#pragma once

#include <stdexcept>
#include <string>

namespace chiplet_lab {

// Root of every error the library throws. Subclasses tag the stage that
// failed so the sweep driver can report it per (workload, arch) pair.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class WorkloadError : public Error {
public:
    WorkloadError(const std::string& layer_id, const std::string& what)
        : Error("layer '" + layer_id + "': " + what), layer_(layer_id) {}

    const std::string& layer_id() const noexcept { return layer_; }

private:
    std::string layer_;
};

class MappingError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class RoutingError : public Error {
public:
    using Error::Error;
};

class DeadlockError : public Error {
public:
    explicit DeadlockError(const std::string& layer_id)
        : Error("simulation deadlock: layer '" + layer_id + "' never became eligible"),
          layer_(layer_id) {}

    const std::string& layer_id() const noexcept { return layer_; }

private:
    std::string layer_;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace chiplet_lab
