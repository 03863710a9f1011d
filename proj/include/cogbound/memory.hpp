#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include <nlohmann/json.hpp>

#include "cogbound/pomdp.hpp"
#include "cogbound/rng.hpp"

namespace cogbound {

inline constexpr ActionIndex kNoAction = std::numeric_limits<ActionIndex>::max();

/// Entry i holds the remembered observation received at step i and the
/// action taken at step i - 1 (none for entry 0).
struct MemoryEntry {
  ObservationIndex obs = 0;
  ActionIndex act = kNoAction;
  friend bool operator==(const MemoryEntry&, const MemoryEntry&) = default;
};

/// The agent's possibly corrupted copy of its observation/action history.
/// Entries may change retroactively; the length always equals the number of
/// observations received this episode.
struct InternalMemory {
  std::vector<MemoryEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  friend bool operator==(const InternalMemory&, const InternalMemory&) = default;

  nlohmann::json to_json() const;
  static InternalMemory from_json(const nlohmann::json& j);
};

/// Per-step, per-entry forgetting probability θ ∈ [0, 1].
class MemoryBound {
 public:
  explicit MemoryBound(double theta);
  double theta() const { return theta_; }

 private:
  double theta_;
};

/// f_θ, memory-decay instance: appends (obs, act) and then, independently for
/// every entry whose observation can decay (including the new one), replaces
/// it by its decayed value with probability θ. Actions never decay.
InternalMemory memory_step(const DiscretePomdp& model, InternalMemory prev,
                           ObservationIndex obs, ActionIndex act,
                           const MemoryBound& bound, Rng& rng);

/// In-place variant used on hot paths.
void memory_step_inplace(const DiscretePomdp& model, InternalMemory& mem,
                         ObservationIndex obs, ActionIndex act,
                         const MemoryBound& bound, Rng& rng);

/// Belief obtained by exact forward filtering of `initial` through the
/// remembered sequence. Recomputed from scratch: corruption is retroactive.
/// Throws CorruptedMemoryContradiction when the remembered sequence has zero
/// probability under the model.
Belief biased_belief(const DiscretePomdp& model, const InternalMemory& mem,
                     const Belief& initial);

/// Allocation-free form: writes the belief into `out` (resized as needed),
/// using `scratch` as a work buffer. Returns false instead of throwing on a
/// contradiction.
bool biased_belief_into(const DiscretePomdp& model, const InternalMemory& mem,
                        const Belief& initial, std::vector<double>& out,
                        std::vector<double>& scratch);

}  // namespace cogbound
