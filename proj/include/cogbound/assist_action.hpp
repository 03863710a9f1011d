#pragma once

#include <string>
#include <variant>

#include "cogbound/memory.hpp"
#include "cogbound/pomdp.hpp"

namespace cogbound {

struct DoNothing {
  friend bool operator==(const DoNothing&, const DoNothing&) = default;
};
struct ActionHint {
  ActionIndex action = 0;
  friend bool operator==(const ActionHint&, const ActionHint&) = default;
};
/// Restores memory entry `index` to the observation `obs`.
struct MemoryHint {
  std::size_t index = 0;
  ObservationIndex obs = 0;
  friend bool operator==(const MemoryHint&, const MemoryHint&) = default;
};

using AssistAction = std::variant<DoNothing, ActionHint, MemoryHint>;

enum class AssistType : std::size_t { DoNothing = 0, ActionHint = 1, MemoryHint = 2 };
inline constexpr std::size_t kNumAssistTypes = 3;

inline AssistType type_of(const AssistAction& a) { return static_cast<AssistType>(a.index()); }
const char* assist_type_name(AssistType t);

/// Overwrites entry k's observation with o_k; every other entry untouched.
/// Throws IndexOutOfRange when k is past the end of the memory.
InternalMemory apply_memory_hint(InternalMemory mem, std::size_t k, ObservationIndex o_k);
void apply_memory_hint_inplace(InternalMemory& mem, std::size_t k, ObservationIndex o_k);

}  // namespace cogbound
