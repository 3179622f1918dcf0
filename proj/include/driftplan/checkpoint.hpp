#pragma once

// Policy checkpoints as line-oriented text. Every floating-point value is
// written as a C99 hexadecimal float ("%a"), which is exact and independent
// of host endianness:
//
//   driftplan-checkpoint
//   version 1
//   encoding text-hexfloat
//   config <grid_w> <grid_h> <c0> <c1> <c2> <veh0> <veh1> <fc0> <fc1> <actions> <dropout>
//   tensors <count>
//   tensor <name> <rank> <dim>... <size>
//   <size values separated by spaces>
//   ...
//   [training section, optional; see save_checkpoint]
//   end
//
// The optional training section stores the round counter, replay buffer,
// RNG state and learning curve so that training resumes bit-identically.

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "driftplan/policy.hpp"
#include "driftplan/training.hpp"

namespace driftplan {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  PolicyWeights weights;
  std::optional<TrainingState> training;
};

void save_checkpoint(std::ostream& out, const PolicyWeights& weights, const TrainingState* training = nullptr);
void save_checkpoint(const std::filesystem::path& path, const PolicyWeights& weights,
                     const TrainingState* training = nullptr);

// Throws ParseError (with line number) on malformed input.
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace driftplan
