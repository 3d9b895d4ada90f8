#pragma once

// Experiment configuration: flat `key = value` text, `#` comments, dotted
// section prefixes.
//
//   data.source = synthetic
//   fl.K = 10
//   fl.T = 60
//   defense.kind = cofedmid
//   defense.coalition = 0;1

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

#include "cofedmid/attacks.hpp"
#include "cofedmid/errors.hpp"
#include "cofedmid/fed.hpp"
#include "cofedmid/partition.hpp"

namespace cofedmid {

struct DataConfig {
  std::string source;  // "synthetic" or "csv"
  std::string path;    // csv only
  std::size_t num_classes = 10;
  std::size_t samples_per_class = 100;
  std::size_t input_dim = 20;
  double cluster_spread = 1.0;
  double mean_radius = 5.0;
  double test_fraction = 0.2;
  double ofl_fraction = 0.1;
  std::string partition = "iid";  // "iid" or "dirichlet"
  double dirichlet_beta = 0.5;

  bool operator==(const DataConfig&) const = default;
};

struct EvalConfig {
  std::size_t members = 100;
  std::size_t nonmembers_ifl = 50;
  std::size_t nonmembers_ofl = 50;

  bool operator==(const EvalConfig&) const = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  std::size_t hidden_dim = 32;
  FlConfig fl;
  EvalConfig eval;
  std::vector<std::string> attacks = {"loss_series", "fta_l", "fedmia_1"};
  bool adaptive_attack = false;
  // Also run the same experiment undefended and report the accuracy delta.
  bool baseline = false;
  std::string output_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;
};

inline std::string_view DefenseName(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::kNone: return "none";
    case DefenseKind::kCoFedMid: return "cofedmid";
    case DefenseKind::kGradSparse: return "grad_sparse";
    case DefenseKind::kGradNoise: return "grad_noise";
  }
  return "unknown";
}

inline std::string_view DecayName(DecaySchedule d) {
  switch (d) {
    case DecaySchedule::kLinear: return "linear";
    case DecaySchedule::kCosine: return "cosine";
    case DecaySchedule::kExp: return "exp";
    case DecaySchedule::kPoly: return "poly";
  }
  return "unknown";
}

// Shortest decimal that reads back to the same double.
inline std::string FormatDouble(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> SplitList(std::string_view s) {
  std::vector<std::string> out;
  while (!s.empty()) {
    const auto pos = s.find(';');
    const std::string_view item = Trim(s.substr(0, pos));
    if (!item.empty()) out.emplace_back(item);
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return out;
}

template <typename T>
T ParseNumber(std::string_view text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("not a valid number: '" + std::string(text) + "'");
  }
  return value;
}

inline bool ParseBool(std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("expected true or false, got '" + std::string(text) + "'");
}

inline DefenseKind ParseDefense(std::string_view text) {
  for (DefenseKind k : {DefenseKind::kNone, DefenseKind::kCoFedMid, DefenseKind::kGradSparse,
                        DefenseKind::kGradNoise}) {
    if (DefenseName(k) == text) return k;
  }
  throw ConfigError("unknown defense '" + std::string(text) + "'");
}

inline DecaySchedule ParseDecay(std::string_view text) {
  for (DecaySchedule d : {DecaySchedule::kLinear, DecaySchedule::kCosine, DecaySchedule::kExp,
                          DecaySchedule::kPoly}) {
    if (DecayName(d) == text) return d;
  }
  throw ConfigError("unknown decay schedule '" + std::string(text) + "'");
}

inline std::string JoinIds(const std::vector<std::size_t>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ';';
    s += std::to_string(ids[i]);
  }
  return s;
}

inline std::string JoinNames(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) s += ';';
    s += names[i];
  }
  return s;
}

struct KeyBinding {
  std::string key;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define COFEDMID_NUMBER_KEY(name, field, type)                                             \
  KeyBinding {                                                                             \
    name, [](ExperimentConfig& c, std::string_view v) { c.field = ParseNumber<type>(v); }, \
        [](const ExperimentConfig& c) {                                                    \
          if constexpr (std::is_floating_point_v<type>) return FormatDouble(c.field);      \
          else return std::to_string(c.field);                                             \
        }                                                                                  \
  }

// Every accepted key, in serialization order.
inline const std::vector<KeyBinding>& KeyBindings() {
  static const std::vector<KeyBinding> bindings = {
      COFEDMID_NUMBER_KEY("seed", seed, std::uint64_t),
      {"data.source", [](ExperimentConfig& c, std::string_view v) { c.data.source = v; },
       [](const ExperimentConfig& c) { return c.data.source; }},
      {"data.path", [](ExperimentConfig& c, std::string_view v) { c.data.path = v; },
       [](const ExperimentConfig& c) { return c.data.path; }},
      COFEDMID_NUMBER_KEY("data.num_classes", data.num_classes, std::size_t),
      COFEDMID_NUMBER_KEY("data.samples_per_class", data.samples_per_class, std::size_t),
      COFEDMID_NUMBER_KEY("data.input_dim", data.input_dim, std::size_t),
      COFEDMID_NUMBER_KEY("data.cluster_spread", data.cluster_spread, double),
      COFEDMID_NUMBER_KEY("data.mean_radius", data.mean_radius, double),
      COFEDMID_NUMBER_KEY("data.test_fraction", data.test_fraction, double),
      COFEDMID_NUMBER_KEY("data.ofl_fraction", data.ofl_fraction, double),
      {"data.partition", [](ExperimentConfig& c, std::string_view v) { c.data.partition = v; },
       [](const ExperimentConfig& c) { return c.data.partition; }},
      COFEDMID_NUMBER_KEY("data.dirichlet_beta", data.dirichlet_beta, double),
      COFEDMID_NUMBER_KEY("model.hidden_dim", hidden_dim, std::size_t),
      COFEDMID_NUMBER_KEY("fl.K", fl.num_clients, std::size_t),
      COFEDMID_NUMBER_KEY("fl.T", fl.rounds, int),
      COFEDMID_NUMBER_KEY("fl.lr", fl.lr, double),
      COFEDMID_NUMBER_KEY("fl.local_epochs", fl.local_epochs, int),
      COFEDMID_NUMBER_KEY("fl.batch_size", fl.batch_size, std::size_t),
      COFEDMID_NUMBER_KEY("fl.snapshot_every", fl.snapshot_every, int),
      COFEDMID_NUMBER_KEY("fl.threads", fl.threads, std::size_t),
      {"defense.kind",
       [](ExperimentConfig& c, std::string_view v) { c.fl.defense.kind = ParseDefense(v); },
       [](const ExperimentConfig& c) { return std::string(DefenseName(c.fl.defense.kind)); }},
      {"defense.coalition",
       [](ExperimentConfig& c, std::string_view v) {
         c.fl.coalition.clear();
         for (const auto& item : SplitList(v)) {
           c.fl.coalition.push_back(ParseNumber<std::size_t>(item));
         }
       },
       [](const ExperimentConfig& c) { return JoinIds(c.fl.coalition); }},
      COFEDMID_NUMBER_KEY("defense.keep_rate", fl.defense.keep_rate, double),
      COFEDMID_NUMBER_KEY("defense.noise_sigma", fl.defense.noise_sigma, double),
      COFEDMID_NUMBER_KEY("partition.m_max", fl.defense.m_max, std::size_t),
      COFEDMID_NUMBER_KEY("partition.m_min", fl.defense.m_min, std::size_t),
      {"partition.decay",
       [](ExperimentConfig& c, std::string_view v) { c.fl.defense.decay = ParseDecay(v); },
       [](const ExperimentConfig& c) { return std::string(DecayName(c.fl.defense.decay)); }},
      COFEDMID_NUMBER_KEY("compensation.t0", fl.defense.recycle.t0, int),
      COFEDMID_NUMBER_KEY("compensation.M", fl.defense.recycle.intervals, std::size_t),
      COFEDMID_NUMBER_KEY("compensation.r_l", fl.defense.recycle.max_recycle_ratio, double),
      COFEDMID_NUMBER_KEY("compensation.mu", fl.defense.recycle.entropy_weight, double),
      COFEDMID_NUMBER_KEY("compensation.eta", fl.defense.recycle.exploration, double),
      COFEDMID_NUMBER_KEY("compensation.val_fraction", fl.defense.recycle.val_fraction, double),
      COFEDMID_NUMBER_KEY("perturbation.sigma", fl.defense.perturb_sigma, double),
      COFEDMID_NUMBER_KEY("perturbation.ratio", fl.defense.perturb_ratio, double),
      COFEDMID_NUMBER_KEY("eval.members", eval.members, std::size_t),
      COFEDMID_NUMBER_KEY("eval.nonmembers_ifl", eval.nonmembers_ifl, std::size_t),
      COFEDMID_NUMBER_KEY("eval.nonmembers_ofl", eval.nonmembers_ofl, std::size_t),
      {"attacks.list",
       [](ExperimentConfig& c, std::string_view v) { c.attacks = SplitList(v); },
       [](const ExperimentConfig& c) { return JoinNames(c.attacks); }},
      {"attacks.adaptive",
       [](ExperimentConfig& c, std::string_view v) { c.adaptive_attack = ParseBool(v); },
       [](const ExperimentConfig& c) { return std::string(c.adaptive_attack ? "true" : "false"); }},
      {"run.baseline",
       [](ExperimentConfig& c, std::string_view v) { c.baseline = ParseBool(v); },
       [](const ExperimentConfig& c) { return std::string(c.baseline ? "true" : "false"); }},
      {"output.dir", [](ExperimentConfig& c, std::string_view v) { c.output_dir = v; },
       [](const ExperimentConfig& c) { return c.output_dir; }},
  };
  return bindings;
}

#undef COFEDMID_NUMBER_KEY

inline const KeyBinding* FindKey(std::string_view key) {
  for (const auto& b : KeyBindings()) {
    if (b.key == key) return &b;
  }
  return nullptr;
}

}  // namespace detail

// Cross-field checks. `lines` maps keys to the line that set them, for messages.
inline void ValidateExperimentConfig(const ExperimentConfig& c,
                                     const std::map<std::string, std::size_t>& lines = {}) {
  auto fail = [&](const std::string& key, const std::string& msg) {
    std::string where = key;
    if (auto it = lines.find(key); it != lines.end()) {
      where = "line " + std::to_string(it->second) + ": " + key;
    }
    throw ConfigError(where + ": " + msg);
  };
  if (c.data.source != "synthetic" && c.data.source != "csv") {
    fail("data.source", "must be 'synthetic' or 'csv'");
  }
  if (c.data.source == "csv" && c.data.path.empty()) fail("data.path", "required for csv source");
  if (c.data.partition != "iid" && c.data.partition != "dirichlet") {
    fail("data.partition", "must be 'iid' or 'dirichlet'");
  }
  if (c.data.source == "synthetic") {
    if (c.data.num_classes < 2) fail("data.num_classes", "must be >= 2");
    if (c.data.samples_per_class < 1) fail("data.samples_per_class", "must be >= 1");
    if (c.data.input_dim < 1) fail("data.input_dim", "must be >= 1");
  }
  if (!(c.data.test_fraction >= 0.0 && c.data.test_fraction < 1.0)) {
    fail("data.test_fraction", "must be in [0,1)");
  }
  if (!(c.data.ofl_fraction >= 0.0 && c.data.ofl_fraction < 1.0)) {
    fail("data.ofl_fraction", "must be in [0,1)");
  }
  if (!(c.data.dirichlet_beta > 0.0)) fail("data.dirichlet_beta", "must be > 0");
  if (c.fl.num_clients < 2) fail("fl.K", "must be >= 2");
  if (c.fl.rounds < 1) fail("fl.T", "must be >= 1");
  if (c.fl.snapshot_every < 1) fail("fl.snapshot_every", "must be >= 1");
  if (c.fl.local_epochs < 1) fail("fl.local_epochs", "must be >= 1");
  if (c.fl.batch_size < 1) fail("fl.batch_size", "must be >= 1");
  if (!(c.fl.lr >= 0.0)) fail("fl.lr", "must be >= 0");
  for (std::size_t k : c.fl.coalition) {
    if (k >= c.fl.num_clients) {
      fail("defense.coalition", "client id " + std::to_string(k) + " is not below fl.K = " +
                                    std::to_string(c.fl.num_clients));
    }
  }
  for (std::size_t i = 0; i < c.fl.coalition.size(); ++i) {
    for (std::size_t j = i + 1; j < c.fl.coalition.size(); ++j) {
      if (c.fl.coalition[i] == c.fl.coalition[j]) fail("defense.coalition", "duplicate client id");
    }
  }
  const DefenseConfig& d = c.fl.defense;
  if (d.kind == DefenseKind::kCoFedMid) {
    if (c.fl.coalition.empty()) fail("defense.coalition", "cofedmid needs a non-empty coalition");
    if (c.data.source == "synthetic" && d.m_max > c.data.num_classes) {
      fail("partition.m_max", "exceeds data.num_classes");
    }
    if (d.m_max != 0 && d.m_min > d.m_max) fail("partition.m_min", "exceeds partition.m_max");
    if (d.recycle.t0 < 1) fail("compensation.t0", "must be >= 1");
    if (d.recycle.t0 > c.fl.rounds) fail("compensation.t0", "exceeds fl.T");
    if (d.recycle.intervals < 1) fail("compensation.M", "must be >= 1");
    if (!(d.recycle.max_recycle_ratio >= 0.0 && d.recycle.max_recycle_ratio <= 1.0)) {
      fail("compensation.r_l", "must be in [0,1]");
    }
    if (!(d.recycle.entropy_weight >= 0.0)) fail("compensation.mu", "must be >= 0");
    if (!(d.recycle.exploration > 0.0 && d.recycle.exploration <= 1.0)) {
      fail("compensation.eta", "must be in (0,1]");
    }
    if (!(d.recycle.val_fraction >= 0.0 && d.recycle.val_fraction < 1.0)) {
      fail("compensation.val_fraction", "must be in [0,1)");
    }
    if (!(d.perturb_sigma >= 0.0)) fail("perturbation.sigma", "must be >= 0");
    if (!(d.perturb_ratio > 0.0 && d.perturb_ratio <= 1.0)) {
      fail("perturbation.ratio", "must be in (0,1]");
    }
    if (d.perturb_sigma > 0.0 && c.fl.coalition.size() < 2) {
      fail("perturbation.sigma", "non-zero noise needs a coalition of at least two clients");
    }
  }
  if (d.kind == DefenseKind::kGradSparse && !(d.keep_rate > 0.0 && d.keep_rate <= 1.0)) {
    fail("defense.keep_rate", "must be in (0,1]");
  }
  if (d.kind == DefenseKind::kGradNoise && !(d.noise_sigma >= 0.0)) {
    fail("defense.noise_sigma", "must be >= 0");
  }
  for (const auto& name : c.attacks) {
    try {
      ParseAttackName(name);
    } catch (const ContractError&) {
      fail("attacks.list", "unknown attack '" + name + "'");
    }
  }
  if (c.eval.members < 1) fail("eval.members", "must be >= 1");
  if (c.eval.nonmembers_ifl + c.eval.nonmembers_ofl < 1) {
    fail("eval.nonmembers_ifl", "need at least one non-member");
  }
}

inline ExperimentConfig ParseConfigText(std::string_view text, const std::string& origin = "config") {
  ExperimentConfig config;
  std::map<std::string, std::size_t> lines;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::Trim(line);
    if (line.empty()) continue;
    const std::string prefix = origin + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(prefix + "expected 'key = value'");
    const std::string key(detail::Trim(line.substr(0, eq)));
    const std::string_view value = detail::Trim(line.substr(eq + 1));
    const detail::KeyBinding* binding = detail::FindKey(key);
    if (binding == nullptr) throw ConfigError(prefix + "unknown key '" + key + "'");
    if (lines.count(key)) throw ConfigError(prefix + "duplicate key '" + key + "'");
    try {
      binding->set(config, value);
    } catch (const ConfigError& e) {
      throw ConfigError(prefix + key + ": " + e.what());
    }
    lines[key] = line_no;
  }
  for (const char* required : {"data.source", "fl.K", "fl.T"}) {
    if (!lines.count(required)) {
      throw ConfigError(origin + ": missing required key '" + std::string(required) + "'");
    }
  }
  try {
    ValidateExperimentConfig(config, lines);
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return config;
}

inline ExperimentConfig ParseConfigFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ParseConfigText(ss.str(), path);
}

inline std::string SerializeConfig(const ExperimentConfig& config) {
  std::string out;
  for (const auto& b : detail::KeyBindings()) {
    out += b.key + " = " + b.get(config) + "\n";
  }
  return out;
}

}  // namespace cofedmid
