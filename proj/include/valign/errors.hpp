#pragma once

#include <stdexcept>
#include <string>

namespace valign {

// Error hierarchy shared across the pipeline. The CLI maps each class to a
// distinct exit code.
struct parse_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct dimension_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct lookup_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Carries the game whose reward density made the constraint infeasible.
struct sampling_error : std::runtime_error {
    std::string game_id;
    sampling_error(const std::string& msg, std::string game)
        : std::runtime_error(msg), game_id(std::move(game)) {}
};

struct empty_dataset_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct divergence_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct usage_error : std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace valign
