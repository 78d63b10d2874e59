#ifndef FEDBAYES_ERRORS_HPP
#define FEDBAYES_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace fedbayes {

// Base for everything this library throws on a contract or runtime failure.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape mismatch between tensors (message names both shapes).
class DimensionError : public Error {
public:
    using Error::Error;
};

// Out-of-range index (labels, classes, layers).
class IndexError : public Error {
public:
    using Error::Error;
};

// Invalid argument value (negative epsilon, zero rounds, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Non-finite value where a finite one is required.
class NumericError : public Error {
public:
    using Error::Error;
};

// Malformed binary input (IDX magic, truncated container).
class FormatError : public Error {
public:
    using Error::Error;
};

// Malformed textual input (CSV, config files).
class ParseError : public Error {
public:
    using Error::Error;
};

// A partition demand exceeds the class supply.
class CapacityError : public Error {
public:
    using Error::Error;
};

// A shard split cannot give every shard at least one sample.
class ShardError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite loss; carries (client, round, epoch) context.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& msg, int client, int round, int epoch)
        : Error(msg), client_id(client), round(round), epoch(epoch) {}
    int client_id;
    int round;
    int epoch;
};

// Model shapes disagree at aggregation time.
class AggregationError : public Error {
public:
    using Error::Error;
};

// An operation was called in a mode where its contract is undefined.
class ContractError : public Error {
public:
    using Error::Error;
};

// Filesystem failure.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace fedbayes

#endif
