#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace lan {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using Code = std::int32_t;

// Problems with user-supplied input (files, configs, flags). The CLI maps
// these to exit code 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failures during computation. The CLI maps these to exit code 2.
class ComputeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedRecord : public InputError {
 public:
  using InputError::InputError;
};

class UnknownActivityType : public InputError {
 public:
  using InputError::InputError;
};

class InvalidConfig : public InputError {
 public:
  using InputError::InputError;
};

class EmptySplit : public InputError {
 public:
  using InputError::InputError;
};

class VocabularyMismatch : public InputError {
 public:
  using InputError::InputError;
};

class CheckpointError : public InputError {
 public:
  using InputError::InputError;
};

class ModeMismatch : public InputError {
 public:
  using InputError::InputError;
};

class CodeOutOfRange : public ComputeError {
 public:
  using ComputeError::ComputeError;
};

class DegenerateNormalization : public ComputeError {
 public:
  using ComputeError::ComputeError;
};

class EmptyPool : public ComputeError {
 public:
  using ComputeError::ComputeError;
};

class DegenerateLabels : public ComputeError {
 public:
  using ComputeError::ComputeError;
};

class Divergence : public ComputeError {
 public:
  using ComputeError::ComputeError;
};

}  // namespace lan
