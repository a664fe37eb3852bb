// SPDX-License-Identifier: MIT
//
// Seeded program generators for the test suites: structurally random programs
// that always load, lint clean, and terminate (counted loops only, calls form
// a DAG, indirect jumps go forward), plus the loop-scaling family used by the
// size-comparison checks.

#pragma once

#include <cstdint>
#include <string>

namespace cfa {

struct GeneratorConfig {
  std::uint64_t seed = 0;
  int max_blocks = 12;     // total across all functions
  int max_functions = 3;
  // Guarantee an executed instance of a feature on main's hot path, so the
  // fault-injection suites always have something to aim at.
  bool require_loop = false;
  bool require_call = false;
  bool require_indirect = false;
};

std::string generate_program(const GeneratorConfig& cfg);

// One member of the loop-scaling family: a bottom-tested loop of k iterations
// whose body cascades (u-1)/2 two-arm diamonds, arranged so the occurrence
// trace holds exactly u entries (loop header + both arms of each diamond; the
// exit path and interior selectors are skip-eligible). u must be 0 (the
// straight-line member) or odd and >= 3. Event count per run is
// k * ((u-1)/2 + 1), so members with equal products have equal-length traces.
std::string size_family_program(int u, std::uint64_t k);

}  // namespace cfa
