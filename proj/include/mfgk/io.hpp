#pragma once

#include <array>
#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "mfgk/builtin_models.hpp"
#include "mfgk/error.hpp"
#include "mfgk/flow.hpp"
#include "mfgk/hjb.hpp"
#include "mfgk/model.hpp"

namespace mfgk::io {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Number formatting: shortest round-trip representation, locale independent.

inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw Error(Errc::InvalidConfig, "cannot parse number '" + std::string(s) + "'");
  return v;
}

// ---------------------------------------------------------------------------
// Model documents

namespace detail {

inline void require_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, std::string(where) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw Error(Errc::InvalidConfig, "unknown key '" + key + "' in " + std::string(where));
  }
}

/// Flattens arbitrarily nested numeric arrays in row-major order.
inline void flatten(const Json& j, std::vector<double>& out, std::string_view where) {
  if (j.is_number()) {
    out.push_back(j.get<double>());
  } else if (j.is_array()) {
    for (const auto& e : j) flatten(e, out, where);
  } else {
    throw Error(Errc::InvalidConfig, std::string(where) + " must contain only numbers");
  }
}

inline std::vector<double> numbers(const Json& j, std::string_view where) {
  std::vector<double> out;
  if (!j.is_array()) throw Error(Errc::InvalidConfig, std::string(where) + " must be an array");
  flatten(j, out, where);
  return out;
}

template <class T>
T get(const Json& j, std::string_view key, std::string_view where) {
  try {
    const Json& v = j.at(std::string(key));
    if constexpr (std::is_unsigned_v<T>)
      if (!v.is_number_unsigned()) throw Error(Errc::InvalidConfig, "'" + std::string(key) + "' must be a nonnegative integer");
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(Errc::InvalidConfig, "missing or mistyped '" + std::string(key) + "' in " + std::string(where));
  }
}

template <class T>
T get_or(const Json& j, std::string_view key, T fallback, std::string_view where) {
  if (!j.contains(std::string(key))) return fallback;
  return get<T>(j, key, where);
}

inline AffineInMeasure affine_from_json(const Json& j, std::string_view where) {
  require_keys(j, {"offset", "table"}, where);
  AffineInMeasure a;
  if (j.contains("offset")) a.offset = numbers(j["offset"], where);
  if (j.contains("table")) a.table = numbers(j["table"], where);
  return a;
}

inline Json affine_to_json(const AffineInMeasure& a, std::size_t d) {
  Json j = Json::object();
  if (!a.offset.empty()) j["offset"] = a.offset;
  if (!a.table.empty()) {
    Json rows = Json::array();
    for (std::size_t x = 0; x < d; ++x)
      rows.push_back(std::vector<double>(a.table.begin() + static_cast<std::ptrdiff_t>(x * d),
                                         a.table.begin() + static_cast<std::ptrdiff_t>((x + 1) * d)));
    j["table"] = rows;
  }
  return j;
}

}  // namespace detail

/// Parses and validates a model document. {"builtin": name} selects a
/// built-in model; only "T" and "n_steps" may be overridden alongside it.
inline ModelSpec model_from_json(const Json& j) {
  if (j.is_object() && j.contains("builtin")) {
    detail::require_keys(j, {"schema", "builtin", "T", "n_steps"}, "model");
    ModelSpec s = models::builtin(detail::get<std::string>(j, "builtin", "model"));
    s.T = detail::get_or<double>(j, "T", s.T, "model");
    s.n_steps = detail::get_or<std::size_t>(j, "n_steps", s.n_steps, "model");
    s.derived.reset();
    return validate_model(s);
  }
  detail::require_keys(j, {"schema", "d", "T", "m0", "n_steps", "family", "controlled_rate", "finite_action",
                           "running_cost", "terminal_cost"},
                       "model");
  if (detail::get_or<int>(j, "schema", kSchemaVersion, "model") != kSchemaVersion)
    throw Error(Errc::InvalidConfig, "unsupported model schema version");
  ModelSpec s;
  s.d = detail::get<std::size_t>(j, "d", "model");
  s.T = detail::get<double>(j, "T", "model");
  s.n_steps = detail::get_or<std::size_t>(j, "n_steps", s.n_steps, "model");
  if (!j.contains("m0")) throw Error(Errc::InvalidConfig, "missing 'm0' in model");
  s.m0 = detail::numbers(j["m0"], "m0");
  const auto family = detail::get<std::string>(j, "family", "model");
  if (family == "controlled_rate") {
    s.family = Family::ControlledRate;
    if (j.contains("finite_action")) throw Error(Errc::InvalidConfig, "finite_action block given for controlled_rate");
    const Json c = j.value("controlled_rate", Json::object());
    detail::require_keys(c, {"action_bound", "kappa", "zeta_weights", "theta", "action_grid"}, "controlled_rate");
    auto& p = s.controlled;
    p.action_bound = detail::get_or<double>(c, "action_bound", p.action_bound, "controlled_rate");
    p.kappa = detail::get_or<double>(c, "kappa", p.kappa, "controlled_rate");
    p.theta = detail::get_or<double>(c, "theta", p.theta, "controlled_rate");
    p.action_grid = detail::get_or<std::size_t>(c, "action_grid", p.action_grid, "controlled_rate");
    if (c.contains("zeta_weights")) p.zeta_weights = detail::numbers(c["zeta_weights"], "zeta_weights");
  } else if (family == "finite_action") {
    s.family = Family::FiniteAction;
    if (j.contains("controlled_rate")) throw Error(Errc::InvalidConfig, "controlled_rate block given for finite_action");
    if (!j.contains("finite_action")) throw Error(Errc::InvalidConfig, "missing 'finite_action' block");
    const Json& f = j["finite_action"];
    detail::require_keys(f, {"rate_bound", "n_actions", "rate_base", "rate_slope", "action_cost"}, "finite_action");
    auto& p = s.finite;
    p.rate_bound = detail::get<double>(f, "rate_bound", "finite_action");
    p.n_actions = detail::get<std::size_t>(f, "n_actions", "finite_action");
    if (!f.contains("rate_base")) throw Error(Errc::InvalidConfig, "missing 'rate_base' in finite_action");
    p.rate_base = detail::numbers(f["rate_base"], "rate_base");
    if (f.contains("rate_slope")) p.rate_slope = detail::numbers(f["rate_slope"], "rate_slope");
    if (f.contains("action_cost")) p.action_cost = detail::numbers(f["action_cost"], "action_cost");
  } else {
    throw Error(Errc::InvalidConfig, "family must be 'controlled_rate' or 'finite_action'");
  }
  if (j.contains("running_cost")) s.running = detail::affine_from_json(j["running_cost"], "running_cost");
  if (j.contains("terminal_cost")) s.terminal = detail::affine_from_json(j["terminal_cost"], "terminal_cost");
  return validate_model(s);
}

inline Json model_to_json(const ModelSpec& s) {
  Json j;
  j["schema"] = kSchemaVersion;
  j["d"] = s.d;
  j["T"] = s.T;
  j["n_steps"] = s.n_steps;
  j["m0"] = s.m0;
  if (s.family == Family::ControlledRate) {
    j["family"] = "controlled_rate";
    Json c;
    c["action_bound"] = s.controlled.action_bound;
    c["kappa"] = s.controlled.kappa;
    c["theta"] = s.controlled.theta;
    c["action_grid"] = s.controlled.action_grid;
    if (!s.controlled.zeta_weights.empty()) c["zeta_weights"] = s.controlled.zeta_weights;
    j["controlled_rate"] = c;
  } else {
    j["family"] = "finite_action";
    Json f;
    f["rate_bound"] = s.finite.rate_bound;
    f["n_actions"] = s.finite.n_actions;
    f["rate_base"] = s.finite.rate_base;
    if (!s.finite.rate_slope.empty()) f["rate_slope"] = s.finite.rate_slope;
    if (!s.finite.action_cost.empty()) f["action_cost"] = s.finite.action_cost;
    j["finite_action"] = f;
  }
  j["running_cost"] = detail::affine_to_json(s.running, s.d);
  j["terminal_cost"] = detail::affine_to_json(s.terminal, s.d);
  return j;
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::InvalidConfig, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::InvalidConfig, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// CSV artifacts

/// Comma-separated row builder.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row(header); }

  CsvWriter& cell(double v) { return cell(format_double(v)); }
  CsvWriter& cell(std::size_t v) { return cell(std::to_string(v)); }
  CsvWriter& cell(const std::string& s) {
    if (open_ > 0) out_ << ',';
    out_ << s;
    ++open_;
    return *this;
  }
  void end_row() {
    if (open_ != columns_) throw Error(Errc::InvalidConfig, "CSV row has wrong column count");
    out_ << '\n';
    open_ = 0;
  }

  std::string str() const { return out_.str(); }

 private:
  void row(const std::vector<std::string>& cells) {
    for (const auto& c : cells) cell(c);
    end_row();
  }

  std::size_t columns_;
  std::size_t open_ = 0;
  std::ostringstream out_;
};

inline std::vector<std::string> indexed(std::string_view prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i <= n; ++i) out.push_back(std::string(prefix) + std::to_string(i));
  return out;
}

/// m.csv: t,p1..pd
inline std::string flow_csv(const MeasureFlow& m) {
  std::vector<std::string> header{"t"};
  for (auto& h : indexed("p", m.d)) header.push_back(h);
  CsvWriter w(header);
  for (std::size_t k = 0; k < m.grid.nodes(); ++k) {
    w.cell(m.grid.time(k));
    for (double v : m.at(k)) w.cell(v);
    w.end_row();
  }
  return w.str();
}

/// value.csv: t,W1..Wd
inline std::string value_csv(const ValueFunction& V) {
  std::vector<std::string> header{"t"};
  for (auto& h : indexed("W", V.d)) header.push_back(h);
  CsvWriter w(header);
  for (std::size_t k = 0; k < V.grid.nodes(); ++k) {
    w.cell(V.grid.time(k));
    for (double v : V.at(k)) w.cell(v);
    w.end_row();
  }
  return w.str();
}

/// policy.csv: t,x,a1..ad (ControlledRate rates) or t,x,action (FiniteAction
/// index); states are 1-based.
inline std::string policy_csv(const ModelSpec& spec, const FeedbackPolicy& p) {
  std::vector<std::string> header{"t", "x"};
  if (spec.family == Family::ControlledRate) {
    for (auto& h : indexed("a", spec.d)) header.push_back(h);
  } else {
    header.emplace_back("action");
  }
  CsvWriter w(header);
  for (std::size_t k = 0; k < p.grid.nodes(); ++k)
    for (std::size_t x = 0; x < p.d; ++x) {
      w.cell(p.grid.time(k)).cell(x + 1);
      const Action& a = p.at(k, x);
      if (spec.family == Family::ControlledRate) {
        for (double v : a.rates) w.cell(v);
      } else {
        w.cell(a.index);
      }
      w.end_row();
    }
  return w.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::InvalidConfig, "cannot write " + path.string());
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::InvalidConfig, "cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

namespace detail {

inline std::vector<std::vector<std::string>> split_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace detail

/// Reads m.csv back; the grid must match the model.
inline MeasureFlow read_flow_csv(const ModelSpec& spec, const std::filesystem::path& path) {
  const auto rows = detail::split_csv(read_text(path));
  const TimeGrid grid(spec);
  if (rows.size() != grid.nodes() + 1) throw Error(Errc::InvalidConfig, path.string() + ": node count mismatch");
  MeasureFlow m{grid, spec.d, std::vector<double>(grid.nodes() * spec.d)};
  for (std::size_t k = 0; k < grid.nodes(); ++k) {
    const auto& r = rows[k + 1];
    if (r.size() != spec.d + 1) throw Error(Errc::InvalidConfig, path.string() + ": column count mismatch");
    for (std::size_t x = 0; x < spec.d; ++x) m.at(k)[x] = parse_double(r[x + 1]);
  }
  validate_flow(m, spec.m0);
  return m;
}

inline FeedbackPolicy read_policy_csv(const ModelSpec& spec, const std::filesystem::path& path) {
  const auto rows = detail::split_csv(read_text(path));
  const TimeGrid grid(spec);
  const std::size_t d = spec.d;
  if (rows.size() != grid.nodes() * d + 1) throw Error(Errc::InvalidConfig, path.string() + ": row count mismatch");
  FeedbackPolicy p{grid, d, std::vector<Action>(grid.nodes() * d)};
  const std::size_t cols = spec.family == Family::ControlledRate ? d + 2 : 3;
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    const auto& r = rows[i + 1];
    if (r.size() != cols) throw Error(Errc::InvalidConfig, path.string() + ": column count mismatch");
    const std::size_t k = i / d;
    const std::size_t x = i % d;
    if (static_cast<std::size_t>(parse_double(r[1])) != x + 1)
      throw Error(Errc::InvalidConfig, path.string() + ": rows out of order");
    Action a = spec.zero_action();
    if (spec.family == Family::ControlledRate) {
      for (std::size_t y = 0; y < d; ++y) a.rates[y] = parse_double(r[y + 2]);
    } else {
      a.index = static_cast<std::size_t>(parse_double(r[2]));
    }
    if (!spec.valid_action(a)) throw Error(Errc::InvalidConfig, path.string() + ": action outside the action set");
    p.at(k, x) = std::move(a);
  }
  return p;
}

}  // namespace mfgk::io
