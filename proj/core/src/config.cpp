#include "gdpr/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include "gdpr/errors.hpp"
#include "internal/binary_io.hpp"

namespace gdpr {

void RunConfig::validate() const {
  embedding.validate();
  classifier.validate();
  active_learning.validate();
  if (service.port < 0 || service.port > 65535) throw ConfigError("service.port out of range");
  if (service.page_size < 1) throw ConfigError("service.page_size must be >= 1");
  if (!(tau >= 0 && tau <= 1)) throw ConfigError("compliance.tau must be in [0, 1]");
}

namespace {

std::string unquote(std::string v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    return v.substr(1, v.size() - 2);
  }
  return v;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

// One settable key: parse from text, print back.
struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

using FieldTable = std::vector<std::pair<std::string, Field>>;  // "section.key" in output order

#define GDPR_INT(name, member, type)                                                     \
  {name, Field{[](RunConfig& c, const std::string& v) { c.member = parse_int<type>(name, v); }, \
               [](const RunConfig& c) { return std::to_string(c.member); }}}
#define GDPR_DOUBLE(name, member)                                                      \
  {name, Field{[](RunConfig& c, const std::string& v) { c.member = parse_double(name, v); }, \
               [](const RunConfig& c) { return format_double(c.member); }}}
#define GDPR_PATH(name, member)                                                  \
  {name, Field{[](RunConfig& c, const std::string& v) { c.member = unquote(v); }, \
               [](const RunConfig& c) { return quote(c.member.string()); }}}

const FieldTable& fields() {
  static const FieldTable table = {
      GDPR_PATH("paths.documents", paths.documents),
      GDPR_PATH("paths.embeddings", paths.embeddings),
      GDPR_PATH("paths.model", paths.model),
      GDPR_PATH("paths.labels", paths.labels),
      GDPR_PATH("paths.state", paths.state),
      GDPR_PATH("paths.reports", paths.reports),
      GDPR_PATH("paths.static_dir", paths.static_dir),

      GDPR_INT("embedding.dim", embedding.dim, int),
      GDPR_INT("embedding.n_min", embedding.n_min, int),
      GDPR_INT("embedding.n_max", embedding.n_max, int),
      GDPR_INT("embedding.epochs", embedding.epochs, int),
      GDPR_DOUBLE("embedding.learning_rate", embedding.learning_rate),
      GDPR_INT("embedding.window", embedding.window, int),
      GDPR_INT("embedding.negatives", embedding.negatives, int),
      GDPR_INT("embedding.min_count", embedding.min_count, int),
      GDPR_INT("embedding.bucket_count", embedding.bucket_count, std::int64_t),
      GDPR_DOUBLE("embedding.subsample_t", embedding.subsample_t),
      GDPR_INT("embedding.seed", embedding.seed, std::uint64_t),
      GDPR_INT("embedding.threads", embedding.threads, int),

      GDPR_INT("classifier.n_filters", classifier.n_filters, int),
      GDPR_INT("classifier.kernel_size", classifier.kernel_size, int),
      GDPR_INT("classifier.fc_units", classifier.fc_units, int),
      GDPR_INT("classifier.n_classes", classifier.n_classes, int),
      GDPR_DOUBLE("classifier.dropout_conv", classifier.dropout_conv),
      GDPR_DOUBLE("classifier.dropout_fc", classifier.dropout_fc),
      GDPR_INT("classifier.max_len", classifier.max_len, int),
      GDPR_INT("classifier.epochs", classifier.epochs, int),
      GDPR_DOUBLE("classifier.learning_rate", classifier.learning_rate),
      GDPR_INT("classifier.batch_size", classifier.batch_size, int),
      GDPR_INT("classifier.seed", classifier.seed, std::uint64_t),

      GDPR_INT("active_learning.pool_policies", active_learning.pool_policies, int),
      GDPR_INT("active_learning.budget", active_learning.budget, int),
      GDPR_DOUBLE("active_learning.discard_threshold", active_learning.discard_threshold),
      GDPR_DOUBLE("active_learning.epsilon", active_learning.epsilon),
      GDPR_INT("active_learning.patience", active_learning.patience, int),
      GDPR_INT("active_learning.max_iters", active_learning.max_iters, int),
      GDPR_INT("active_learning.n_annotators", active_learning.n_annotators, int),
      {"active_learning.strategy",
       Field{[](RunConfig& c, const std::string& v) {
               c.active_learning.strategy = parse_query_strategy(unquote(v));
             },
             [](const RunConfig& c) {
               return quote(std::string(to_string(c.active_learning.strategy)));
             }}},
      {"active_learning.annotation_timeout_ms",
       Field{[](RunConfig& c, const std::string& v) {
               c.active_learning.annotation_timeout = std::chrono::milliseconds(
                   parse_int<std::int64_t>("active_learning.annotation_timeout_ms", v));
             },
             [](const RunConfig& c) {
               return std::to_string(c.active_learning.annotation_timeout.count());
             }}},
      {"active_learning.poll_interval_ms",
       Field{[](RunConfig& c, const std::string& v) {
               c.active_learning.poll_interval = std::chrono::milliseconds(
                   parse_int<std::int64_t>("active_learning.poll_interval_ms", v));
             },
             [](const RunConfig& c) {
               return std::to_string(c.active_learning.poll_interval.count());
             }}},
      GDPR_INT("active_learning.threads", active_learning.threads, int),
      GDPR_INT("active_learning.seed", active_learning.seed, std::uint64_t),

      {"service.host", Field{[](RunConfig& c, const std::string& v) { c.service.host = unquote(v); },
                             [](const RunConfig& c) { return quote(c.service.host); }}},
      GDPR_INT("service.port", service.port, int),
      GDPR_INT("service.page_size", service.page_size, int),
      {"service.show_hints",
       Field{[](RunConfig& c, const std::string& v) {
               c.service.show_hints = parse_bool("service.show_hints", unquote(v));
             },
             [](const RunConfig& c) { return std::string(c.service.show_hints ? "true" : "false"); }}},

      GDPR_DOUBLE("compliance.tau", tau),
  };
  return table;
}

#undef GDPR_INT
#undef GDPR_DOUBLE
#undef GDPR_PATH

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  std::map<std::string, const Field*> by_name;
  for (const auto& [name, field] : fields()) by_name[name] = &field;

  RunConfig config;
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      const std::string name = section + "." + key;
      const auto it = by_name.find(name);
      if (it == by_name.end()) throw ConfigError("config: unknown key '" + name + "'");
      it->second->set(config, value.data());
    }
  }
  config.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  if (file.empty() || file == "default") return RunConfig{};
  std::string text;
  try {
    text = internal::read_text_file(file);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_run_config(text);
}

std::string format_run_config(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& [name, field] : fields()) {
    const auto dot = name.find('.');
    const auto s = name.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out += "\n";
      out += "[" + s + "]\n";
      section = s;
    }
    out += name.substr(dot + 1) + " = " + field.get(config) + "\n";
  }
  return out;
}

}  // namespace gdpr
