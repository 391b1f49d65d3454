#pragma once

#include <cstdint>

namespace vgai::audit {

// Per-thread instrumentation of cross-agent data flow.
//
// `shift_reads` counts neighbour values consumed by graph_shift (the one
// sanctioned communication primitive). `global_reads` counts reads of another
// agent's raw state by code that is not restricted to the communication
// graph, i.e. the centralized expert. A decentralized learner step must leave
// `global_reads` untouched.
struct Counters {
  std::uint64_t shift_reads = 0;
  std::uint64_t global_reads = 0;
};

inline Counters& counters() {
  thread_local Counters c;
  return c;
}

inline void reset() { counters() = Counters{}; }

}  // namespace vgai::audit
