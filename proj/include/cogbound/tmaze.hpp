#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cogbound/pomdp.hpp"

namespace cogbound {

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

/// Layout of the T: a three-cell top bar (left terminal, junction, right
/// terminal), a one-cell-wide vertical corridor, and a bottom room holding
/// the object at its centre. Rows grow downward from the bar.
struct TmazeConfig {
  int corridor_length = 3;
  int room_height = 3;
  int room_width = 3;
  std::vector<std::string> objects{"ball", "key"};
  std::size_t max_steps = 50;
  std::optional<Cell> start_cell;  // default: bottom of the corridor
  double discount = 1.0;

  nlohmann::json to_json() const;
  static TmazeConfig from_json(const nlohmann::json& j);
};

enum class CellCode : std::uint8_t {
  OutOfBounds = 0,
  Wall = 1,
  Floor = 2,
  TerminalLeft = 3,
  TerminalRight = 4,
  ObjectBase = 5,  // object kind k is encoded as ObjectBase + k
};

inline constexpr std::size_t kNumMoves = 5;
enum Move : std::size_t { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kStay = 4 };
const char* move_name(std::size_t a);

struct TmazeState {
  Cell position;
  std::size_t target = 0;
  friend bool operator==(const TmazeState&, const TmazeState&) = default;
};

/// 3x3 window around the agent, row-major from the top-left; index 4 is the
/// agent's own cell.
using EgocentricObservation = std::array<std::uint8_t, 9>;

class Tmaze {
 public:
  /// Throws InvalidLayout when the configuration violates the layout rules.
  explicit Tmaze(TmazeConfig config);

  const TmazeConfig& config() const { return config_; }
  const DiscretePomdp& model() const { return *model_; }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t num_objects() const { return config_.objects.size(); }
  Cell start_cell() const { return start_; }
  Cell object_cell() const { return object_cell_; }
  Cell junction() const { return {cx_, 0}; }
  const std::vector<Cell>& positions() const { return positions_; }

  CellCode cell_code(Cell c) const;
  bool walkable(Cell c) const;
  bool terminal(Cell c) const;
  /// Terminal arm paired with an object kind (even kinds right, odd left).
  Cell goal_cell(std::size_t target) const;
  bool object_visible_from(Cell c) const;
  bool in_room(Cell c) const;

  Cell step(Cell from, std::size_t action) const;

  std::size_t state_index(const TmazeState& s) const;
  TmazeState state_of(std::size_t index) const;
  std::size_t position_index(Cell c) const;

  EgocentricObservation render_observation(const TmazeState& s) const;
  std::size_t observation_index(const EgocentricObservation& o) const;
  const EgocentricObservation& observation_of(std::size_t index) const;
  std::size_t num_observations() const { return observations_.size(); }
  /// True iff the observation shows an object cell.
  bool shows_object(std::size_t obs_index) const;

  /// Uniform over the start cell and every object kind.
  Belief initial_belief() const;
  /// Target marginal of a belief over model states.
  std::vector<double> target_marginal(const Belief& b) const;

  std::string render_ascii(const TmazeState& s) const;
  TmazeState parse_ascii(const std::string& text) const;

 private:
  TmazeConfig config_;
  int width_ = 0;
  int height_ = 0;
  int cx_ = 0;
  int room_x0_ = 0;
  Cell start_;
  Cell object_cell_;
  std::vector<Cell> positions_;
  std::map<Cell, std::size_t> position_lookup_;
  std::vector<EgocentricObservation> observations_;
  std::map<EgocentricObservation, std::size_t> observation_lookup_;
  std::optional<DiscretePomdp> model_;
};

/// Task reward: 1 - 0.9 t / max_steps on entering the terminal that matches
/// the target at step t (1-based count of actions taken), 0 otherwise.
double reward_fn(const Tmaze& maze, const TmazeState& state, std::size_t action,
                 const TmazeState& next, std::size_t t);

}  // namespace cogbound
