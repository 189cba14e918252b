#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "fedmim/objectives.hpp"

namespace fedmim {

class CsvError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Reads a comma-separated file with a header row. Every column except
// `label_column` must be numeric; features are standardised per column to
// zero mean / unit variance (constant columns become all zeros). Labels are
// mapped to 0,1,... in ascending order (numeric order when every label parses
// as a number). Errors carry the 1-based line and column name.
Dataset ingest_csv(const std::filesystem::path& path, const std::string& label_column);

// Writes a dataset with the label in the last column, 17 significant digits.
void write_csv(const std::filesystem::path& path, const Dataset& data, const std::string& label_column);

// Per-column zero mean / unit (population) variance, zero-variance columns to 0.
void standardize(Dataset& data);

}  // namespace fedmim
