#include "mtsp/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "mtsp/error.hpp"

namespace mtsp {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    return v.substr(1, v.size() - 2);
  }
  return v;
}

long long to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw DataError("config: '" + key + "' expects an integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw DataError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw DataError("config: '" + key + "' expects true or false, got '" + v + "'");
}

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Key {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define MTSP_INT(NAME, FIELD)                                                                       \
  Key {                                                                                            \
    NAME, [](const RunConfig& c) { return std::to_string(c.FIELD); },                              \
        [](RunConfig& c, const std::string& v) { c.FIELD = static_cast<decltype(c.FIELD)>(to_int(NAME, v)); } \
  }
#define MTSP_DOUBLE(NAME, FIELD)                                                                   \
  Key {                                                                                            \
    NAME, [](const RunConfig& c) { return num(c.FIELD); },                                         \
        [](RunConfig& c, const std::string& v) { c.FIELD = to_double(NAME, v); }                   \
  }
#define MTSP_BOOL(NAME, FIELD)                                                                     \
  Key {                                                                                            \
    NAME, [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); },              \
        [](RunConfig& c, const std::string& v) { c.FIELD = to_bool(NAME, v); }                     \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      MTSP_INT("network.d_svd", network.d_svd),
      MTSP_INT("network.d_model", network.d_model),
      MTSP_INT("network.d_ff", network.d_ff),
      MTSP_INT("network.blocks", network.blocks),
      MTSP_BOOL("network.weighted_pooling", network.weighted_pooling),
      MTSP_BOOL("network.leave_one_out", network.leave_one_out),
      MTSP_INT("softassign.iterations", train.iterations),
      MTSP_DOUBLE("loss.lambda", train.loss.lambda),
      MTSP_INT("loss.max_exhaustive_m", train.loss.max_exhaustive_m),
      MTSP_INT("train.batch_size", train.batch_size),
      MTSP_DOUBLE("train.learning_rate", train.adam.learning_rate),
      MTSP_DOUBLE("train.beta1", train.adam.beta1),
      MTSP_DOUBLE("train.beta2", train.adam.beta2),
      MTSP_DOUBLE("train.epsilon", train.adam.epsilon),
      MTSP_INT("train.epochs", train.epochs),
      MTSP_INT("train.max_steps", train.max_steps),
      MTSP_DOUBLE("train.clip_norm", train.clip_norm),
      MTSP_INT("train.patience", train.patience),
      MTSP_INT("train.seed", train.seed),
      MTSP_INT("train.threads", train.threads),
      Key{"eval.beams",
          [](const RunConfig& c) {
            std::string s;
            for (std::size_t i = 0; i < c.beams.size(); ++i) s += (i ? ", " : "") + std::to_string(c.beams[i]);
            return s;
          },
          [](RunConfig& c, const std::string& v) {
            std::string body = v;
            if (!body.empty() && body.front() == '[' && body.back() == ']') body = body.substr(1, body.size() - 2);
            std::vector<int> beams;
            std::istringstream in(body);
            std::string item;
            while (std::getline(in, item, ',')) {
              const long long b = to_int("eval.beams", trim(item));
              if (b < 1) throw DataError("config: beam widths must be positive");
              beams.push_back(static_cast<int>(b));
            }
            if (beams.empty()) throw DataError("config: eval.beams is empty");
            c.beams = beams;
          }},
      MTSP_INT("search.budget", budget),
      MTSP_DOUBLE("search.initial_temperature", search.initial_temperature),
      MTSP_DOUBLE("search.cooling", search.cooling),
      MTSP_INT("search.tabu_tenure", search.tabu_tenure),
      MTSP_BOOL("search.objective_tabu", search.objective_tabu),
      MTSP_DOUBLE("search.penalty_factor", search.penalty_factor),
      MTSP_INT("data.n_min", data.n_min),
      MTSP_INT("data.n_max", data.n_max),
      MTSP_INT("data.m_min", data.m_min),
      MTSP_INT("data.m_max", data.m_max),
      MTSP_INT("data.count_per_cell", data.count_per_cell),
      MTSP_INT("data.validation_per_cell", validation_per_cell),
      MTSP_INT("data.seed", data.seed),
      MTSP_INT("exact.max_n_multi", exact.max_n_multi),
      MTSP_INT("exact.max_n_single", exact.max_n_single),
  };
  return table;
}

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  RunConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string t = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (t.empty()) continue;
    if (t.front() == '[' && t.back() == ']' && t.find('=') == std::string::npos) {
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw DataError("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    const std::string value = unquote(trim(t.substr(eq + 1)));
    bool known = false;
    for (const Key& k : keys()) {
      if (k.name == key) {
        k.set(c, value);
        known = true;
        break;
      }
    }
    if (!known) throw DataError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return parse_run_config(s.str());
}

std::string format_run_config(const RunConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const Key& k : keys()) {
    const auto dot = k.name.find('.');
    const std::string sec = k.name.substr(0, dot);
    if (sec != section) {
      out << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
      section = sec;
    }
    out << k.name.substr(dot + 1) << " = " << k.get(config) << '\n';
  }
  return out.str();
}

std::filesystem::path data_directory() {
  const char* env = std::getenv("MTSP_DATA_DIR");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("data");
}

}  // namespace mtsp
