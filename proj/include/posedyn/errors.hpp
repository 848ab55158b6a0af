#pragma once

#include <stdexcept>
#include <string>

namespace posedyn {

/// Invalid argument values or mismatched dimensions.
class InvalidInputError : public std::runtime_error {
 public:
  explicit InvalidInputError(const std::string& what) : std::runtime_error(what) {}
};

/// A point projected at or behind the camera plane. Carries the offending joint.
class DegenerateProjectionError : public std::runtime_error {
 public:
  DegenerateProjectionError(int joint, double depth)
      : std::runtime_error("joint " + std::to_string(joint) +
                           " has non-positive camera depth " + std::to_string(depth)),
        joint_(joint),
        depth_(depth) {}
  int joint() const { return joint_; }
  double depth() const { return depth_; }

 private:
  int joint_;
  double depth_;
};

/// The simulator produced a non-finite quantity. Carries the name of the
/// first offending state component.
class SimulationDivergedError : public std::runtime_error {
 public:
  explicit SimulationDivergedError(const std::string& quantity)
      : std::runtime_error("simulation diverged: non-finite " + quantity), quantity_(quantity) {}
  const std::string& quantity() const { return quantity_; }

 private:
  std::string quantity_;
};

/// Malformed persistent file. Carries file/field context.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& context, const std::string& what)
      : std::runtime_error(context + ": " + what), context_(context) {}
  const std::string& context() const { return context_; }

 private:
  std::string context_;
};

/// A persistent file with a version tag this build does not understand.
class UnsupportedVersionError : public ParseError {
 public:
  UnsupportedVersionError(const std::string& context, int found, int expected)
      : ParseError(context, "unsupported version " + std::to_string(found) + ", expected " +
                                std::to_string(expected)) {}
};

}  // namespace posedyn
