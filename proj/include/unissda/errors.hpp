#pragma once

#include <stdexcept>
#include <string>

namespace unissda {

// Invalid configuration values (bad dimensions, infeasible class counts, ...).
// CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Problems with the data itself (class with too few samples, empty dataset, ...).
// CLI maps this to exit code 3.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Mismatched matrix/vector dimensions between operands.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// A label fell outside the allowed (unmasked) class set.
class LabelError : public DataError {
public:
    explicit LabelError(const std::string& what) : DataError(what) {}
};

// Training hit a non-finite loss. Carries a diagnostic snapshot of the state
// at the aborting iteration. CLI maps this to exit code 4.
class NumericalAbort : public std::runtime_error {
public:
    NumericalAbort(const std::string& what, int iteration, double labeled_loss,
                   double unlabeled_loss)
        : std::runtime_error(what),
          iteration(iteration),
          labeled_loss(labeled_loss),
          unlabeled_loss(unlabeled_loss) {}

    int iteration;
    double labeled_loss;
    double unlabeled_loss;
};

}  // namespace unissda
