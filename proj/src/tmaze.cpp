#include "cogbound/tmaze.hpp"

#include <sstream>

#include "cogbound/error.hpp"

namespace cogbound {

namespace {

constexpr std::array<std::pair<int, int>, kNumMoves> kDelta{{{0, -1}, {0, 1}, {-1, 0}, {1, 0}, {0, 0}}};

constexpr char kAgentGlyph = 'A';

char glyph(CellCode code) {
  switch (code) {
    case CellCode::OutOfBounds:
      return ' ';
    case CellCode::Wall:
      return '#';
    case CellCode::Floor:
      return '.';
    case CellCode::TerminalLeft:
      return 'L';
    case CellCode::TerminalRight:
      return 'R';
    default:
      return static_cast<char>('0' + (static_cast<int>(code) - static_cast<int>(CellCode::ObjectBase)));
  }
}

}  // namespace

const char* move_name(std::size_t a) {
  static constexpr std::array<const char*, kNumMoves> names{"up", "down", "left", "right", "stay"};
  return a < kNumMoves ? names[a] : "?";
}

nlohmann::json TmazeConfig::to_json() const {
  nlohmann::json j{{"corridor_length", corridor_length},
                   {"room_height", room_height},
                   {"room_width", room_width},
                   {"objects", objects},
                   {"max_steps", max_steps},
                   {"discount", discount}};
  if (start_cell) j["start_cell"] = {start_cell->x, start_cell->y};
  return j;
}

TmazeConfig TmazeConfig::from_json(const nlohmann::json& j) {
  TmazeConfig c;
  c.corridor_length = j.value("corridor_length", c.corridor_length);
  c.room_height = j.value("room_height", c.room_height);
  c.room_width = j.value("room_width", c.room_width);
  c.objects = j.value("objects", c.objects);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.discount = j.value("discount", c.discount);
  if (j.contains("start_cell")) {
    auto xy = j.at("start_cell").get<std::array<int, 2>>();
    c.start_cell = Cell{xy[0], xy[1]};
  }
  return c;
}

Tmaze::Tmaze(TmazeConfig config) : config_(std::move(config)) {
  const auto& c = config_;
  if (c.corridor_length < 1 || c.room_height < 1 || c.room_width < 1) {
    throw InvalidLayout("corridor and room dimensions must be positive");
  }
  if (c.objects.size() < 2) throw InvalidLayout("at least two object kinds are required");
  if (c.objects.size() > 200) throw InvalidLayout("too many object kinds");
  if (c.max_steps < 1) throw InvalidLayout("max_steps must be positive");

  width_ = std::max(c.room_width, 3);
  height_ = 1 + c.corridor_length + c.room_height;
  cx_ = width_ / 2;
  room_x0_ = cx_ - c.room_width / 2;
  object_cell_ = {room_x0_ + c.room_width / 2, 1 + c.corridor_length + c.room_height / 2};
  start_ = c.start_cell.value_or(Cell{cx_, c.corridor_length});

  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (walkable({x, y})) {
        position_lookup_[{x, y}] = positions_.size();
        positions_.push_back({x, y});
      }
    }
  }
  if (!walkable(start_) || terminal(start_)) {
    throw InvalidLayout("start cell must be a walkable non-terminal cell");
  }
  bool any_visible = false;
  for (const auto& p : positions_) {
    if (!object_visible_from(p)) continue;
    any_visible = true;
    if (!in_room(p)) throw InvalidLayout("object is visible from outside the room");
  }
  if (!any_visible) throw InvalidLayout("object is not visible from any cell");

  // Enumerate every rendered observation, then the erased variant of each
  // object-bearing one so decayed memories have an index.
  const std::size_t nO = num_objects();
  for (const auto& p : positions_) {
    for (std::size_t k = 0; k < nO; ++k) {
      auto obs = render_observation({p, k});
      if (!observation_lookup_.contains(obs)) {
        observation_lookup_[obs] = observations_.size();
        observations_.push_back(obs);
      }
    }
  }
  const std::size_t num_rendered = observations_.size();
  std::vector<std::size_t> decay_map(num_rendered);
  for (std::size_t o = 0; o < num_rendered; ++o) {
    auto erased = observations_[o];
    for (auto& cell : erased) {
      if (cell >= static_cast<std::uint8_t>(CellCode::ObjectBase)) cell = static_cast<std::uint8_t>(CellCode::Floor);
    }
    auto it = observation_lookup_.find(erased);
    if (it == observation_lookup_.end()) {
      it = observation_lookup_.emplace(erased, observations_.size()).first;
      observations_.push_back(erased);
    }
    decay_map[o] = it->second;
  }
  for (std::size_t o = num_rendered; o < observations_.size(); ++o) decay_map.push_back(o);

  DiscretePomdp::Tables t;
  t.num_states = positions_.size() * nO;
  t.num_actions = kNumMoves;
  t.num_observations = observations_.size();
  t.transition.assign(t.num_states * t.num_actions * t.num_states, 0.0);
  t.observation.assign(t.num_states * t.num_observations, 0.0);
  t.reward.assign(t.num_states * t.num_actions, 0.0);
  t.decay_map = std::move(decay_map);
  t.discount = c.discount;
  t.max_steps = c.max_steps;
  for (std::size_t s = 0; s < t.num_states; ++s) {
    const auto st = state_of(s);
    t.state_names.push_back(std::to_string(st.position.x) + "," + std::to_string(st.position.y) + ":" +
                            c.objects[st.target]);
    for (std::size_t a = 0; a < kNumMoves; ++a) {
      const TmazeState next{step(st.position, a), st.target};
      t.transition[(s * kNumMoves + a) * t.num_states + state_index(next)] = 1.0;
      if (!terminal(st.position) && next.position == goal_cell(st.target)) t.reward[s * kNumMoves + a] = 1.0;
    }
    t.observation[s * t.num_observations + observation_index(render_observation(st))] = 1.0;
  }
  for (std::size_t a = 0; a < kNumMoves; ++a) t.action_names.emplace_back(move_name(a));
  for (const auto& o : observations_) {
    std::string name;
    for (std::size_t i = 0; i < o.size(); ++i) {
      if (i > 0 && i % 3 == 0) name += '/';
      name += glyph(static_cast<CellCode>(o[i]));
    }
    t.observation_names.push_back(name);
  }
  model_.emplace(std::move(t));
}

CellCode Tmaze::cell_code(Cell c) const {
  if (c.x < 0 || c.y < 0 || c.x >= width_ || c.y >= height_) return CellCode::OutOfBounds;
  if (c.y == 0) {
    if (c.x == cx_ - 1) return CellCode::TerminalLeft;
    if (c.x == cx_ + 1) return CellCode::TerminalRight;
    if (c.x == cx_) return CellCode::Floor;
    return CellCode::Wall;
  }
  if (c.y <= config_.corridor_length) return c.x == cx_ ? CellCode::Floor : CellCode::Wall;
  if (in_room(c)) return CellCode::Floor;
  return CellCode::Wall;
}

bool Tmaze::in_room(Cell c) const {
  return c.y > config_.corridor_length && c.y < height_ && c.x >= room_x0_ &&
         c.x < room_x0_ + config_.room_width;
}

bool Tmaze::walkable(Cell c) const {
  const auto code = cell_code(c);
  return code != CellCode::OutOfBounds && code != CellCode::Wall;
}

bool Tmaze::terminal(Cell c) const {
  const auto code = cell_code(c);
  return code == CellCode::TerminalLeft || code == CellCode::TerminalRight;
}

Cell Tmaze::goal_cell(std::size_t target) const {
  return target % 2 == 0 ? Cell{cx_ + 1, 0} : Cell{cx_ - 1, 0};
}

bool Tmaze::object_visible_from(Cell c) const {
  return std::abs(c.x - object_cell_.x) <= 1 && std::abs(c.y - object_cell_.y) <= 1;
}

Cell Tmaze::step(Cell from, std::size_t action) const {
  if (action >= kNumMoves) throw InvalidInput("move index out of range");
  if (terminal(from)) return from;
  const Cell to{from.x + kDelta[action].first, from.y + kDelta[action].second};
  return walkable(to) ? to : from;
}

std::size_t Tmaze::position_index(Cell c) const {
  auto it = position_lookup_.find(c);
  if (it == position_lookup_.end()) throw InvalidInput("cell is not walkable");
  return it->second;
}

std::size_t Tmaze::state_index(const TmazeState& s) const {
  if (s.target >= num_objects()) throw InvalidInput("target out of range");
  return position_index(s.position) * num_objects() + s.target;
}

TmazeState Tmaze::state_of(std::size_t index) const {
  if (index >= positions_.size() * num_objects()) throw InvalidInput("state index out of range");
  return {positions_[index / num_objects()], index % num_objects()};
}

EgocentricObservation Tmaze::render_observation(const TmazeState& s) const {
  EgocentricObservation obs{};
  std::size_t i = 0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const Cell c{s.position.x + dx, s.position.y + dy};
      auto code = cell_code(c);
      if (c == object_cell_) code = static_cast<CellCode>(static_cast<int>(CellCode::ObjectBase) + s.target);
      obs[i++] = static_cast<std::uint8_t>(code);
    }
  }
  return obs;
}

std::size_t Tmaze::observation_index(const EgocentricObservation& o) const {
  auto it = observation_lookup_.find(o);
  if (it == observation_lookup_.end()) throw InvalidInput("observation not in the observation set");
  return it->second;
}

const EgocentricObservation& Tmaze::observation_of(std::size_t index) const {
  if (index >= observations_.size()) throw InvalidInput("observation index out of range");
  return observations_[index];
}

bool Tmaze::shows_object(std::size_t obs_index) const {
  for (auto cell : observation_of(obs_index)) {
    if (cell >= static_cast<std::uint8_t>(CellCode::ObjectBase)) return true;
  }
  return false;
}

Belief Tmaze::initial_belief() const {
  Belief b{std::vector<double>(model_->num_states(), 0.0)};
  for (std::size_t k = 0; k < num_objects(); ++k) {
    b.probs[state_index({start_, k})] = 1.0 / static_cast<double>(num_objects());
  }
  return b;
}

std::vector<double> Tmaze::target_marginal(const Belief& b) const {
  std::vector<double> m(num_objects(), 0.0);
  for (std::size_t s = 0; s < b.size(); ++s) m[s % num_objects()] += b.probs[s];
  return m;
}

std::string Tmaze::render_ascii(const TmazeState& s) const {
  std::ostringstream out;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      const Cell c{x, y};
      if (c == s.position) {
        out << kAgentGlyph;
      } else if (c == object_cell_) {
        out << glyph(static_cast<CellCode>(static_cast<int>(CellCode::ObjectBase) + s.target));
      } else {
        out << glyph(cell_code(c));
      }
    }
    out << '\n';
  }
  out << "target=" << s.target << '\n';
  return out.str();
}

TmazeState Tmaze::parse_ascii(const std::string& text) const {
  std::istringstream in(text);
  std::string line;
  TmazeState s;
  bool found_agent = false;
  bool found_target = false;
  for (int y = 0; std::getline(in, line); ++y) {
    if (line.rfind("target=", 0) == 0) {
      s.target = std::stoul(line.substr(7));
      found_target = true;
      continue;
    }
    for (int x = 0; x < static_cast<int>(line.size()); ++x) {
      if (line[static_cast<std::size_t>(x)] == kAgentGlyph) {
        s.position = {x, y};
        found_agent = true;
      }
    }
  }
  if (!found_agent || !found_target) throw InvalidInput("ascii rendering lacks agent or target");
  if (s.target >= num_objects() || !walkable(s.position)) throw InvalidInput("ascii rendering is not a valid state");
  return s;
}

double reward_fn(const Tmaze& maze, const TmazeState& state, std::size_t /*action*/,
                 const TmazeState& next, std::size_t t) {
  const auto max_steps = maze.config().max_steps;
  if (t > max_steps) throw InvalidInput("step count exceeds max_steps");
  if (maze.terminal(state.position)) return 0.0;
  if (next.position != maze.goal_cell(state.target)) return 0.0;
  return 1.0 - 0.9 * static_cast<double>(t) / static_cast<double>(max_steps);
}

}  // namespace cogbound
