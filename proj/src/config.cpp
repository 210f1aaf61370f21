#include "gtselect/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "gtselect/error.hpp"

namespace gtselect {

namespace {

[[noreturn]] void fail(int line, const std::string& what) {
  throw Error(ErrorCode::kConfig, "config line " + std::to_string(line) + ": " + what);
}

class ValueParser {
 public:
  ValueParser(std::string_view text, int line) : text_(text), line_(line) {}

  ConfigValue parse_all() {
    ConfigValue v = parse_value();
    skip_space();
    if (pos_ != text_.size()) fail(line_, "unexpected trailing text");
    return v;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  ConfigValue parse_value() {
    skip_space();
    if (pos_ >= text_.size()) fail(line_, "missing value");
    const char c = text_[pos_];
    if (c == '"') return {parse_string(), line_};
    if (c == '[') return parse_array();
    return parse_scalar();
  }

  std::string parse_string() {
    ++pos_;  // opening quote
    std::string out;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      char c = text_[pos_++];
      if (c == '\\') {
        if (pos_ >= text_.size()) fail(line_, "unterminated escape");
        const char e = text_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(line_, std::string("unsupported escape \\") + e);
        }
      }
      out.push_back(c);
    }
    if (pos_ >= text_.size()) fail(line_, "unterminated string");
    ++pos_;
    return out;
  }

  ConfigValue parse_array() {
    ++pos_;
    ConfigValue::Array items;
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == ']') {
      ++pos_;
      return {items, line_};
    }
    for (;;) {
      items.push_back(parse_value());
      skip_space();
      if (pos_ >= text_.size()) fail(line_, "unterminated array");
      if (text_[pos_] == ',') {
        ++pos_;
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == ']') {
          ++pos_;
          break;
        }
        continue;
      }
      if (text_[pos_] == ']') {
        ++pos_;
        break;
      }
      fail(line_, "expected ',' or ']' in array");
    }
    return {items, line_};
  }

  ConfigValue parse_scalar() {
    std::size_t end = pos_;
    while (end < text_.size() && text_[end] != ',' && text_[end] != ']' && text_[end] != ' ' &&
           text_[end] != '\t') {
      ++end;
    }
    std::string token(text_.substr(pos_, end - pos_));
    pos_ = end;
    if (token == "true") return {true, line_};
    if (token == "false") return {false, line_};
    std::string digits;
    for (const char c : token) {
      if (c != '_') digits.push_back(c);
    }
    const bool floating = digits.find_first_of(".eE") != std::string::npos ||
                          digits == "inf" || digits == "nan";
    const char* first = digits.data();
    const char* last = digits.data() + digits.size();
    if (!digits.empty() && *first == '+') ++first;
    if (!floating) {
      std::int64_t v = 0;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec == std::errc() && ptr == last) return {v, line_};
    } else {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec == std::errc() && ptr == last) return {v, line_};
    }
    fail(line_, "cannot parse value '" + token + "'");
  }

  std::string_view text_;
  int line_;
  std::size_t pos_ = 0;
};

// Strips a trailing comment that is not inside a string.
std::string_view strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && in_string) {
      ++i;
    } else if (line[i] == '"') {
      in_string = !in_string;
    } else if (line[i] == '#' && !in_string) {
      return line.substr(0, i);
    }
  }
  return line;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string as_string(const ConfigValue& v, const std::string& key) {
  if (const auto* s = std::get_if<std::string>(&v.value)) return *s;
  fail(v.line, "'" + key + "' must be a string");
}

double as_double(const ConfigValue& v, const std::string& key) {
  if (const auto* d = std::get_if<double>(&v.value)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&v.value)) return static_cast<double>(*i);
  fail(v.line, "'" + key + "' must be a number");
}

std::int64_t as_int(const ConfigValue& v, const std::string& key) {
  if (const auto* i = std::get_if<std::int64_t>(&v.value)) return *i;
  fail(v.line, "'" + key + "' must be an integer");
}

std::size_t as_count(const ConfigValue& v, const std::string& key) {
  const auto i = as_int(v, key);
  if (i < 0) fail(v.line, "'" + key + "' must be non-negative");
  return static_cast<std::size_t>(i);
}

bool as_bool(const ConfigValue& v, const std::string& key) {
  if (const auto* b = std::get_if<bool>(&v.value)) return *b;
  fail(v.line, "'" + key + "' must be true or false");
}

std::vector<std::string> as_strings(const ConfigValue& v, const std::string& key) {
  const auto* arr = std::get_if<ConfigValue::Array>(&v.value);
  if (!arr) fail(v.line, "'" + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& item : *arr) out.push_back(as_string(item, key));
  return out;
}

template <typename Fn>
void wrap(const ConfigValue& v, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    fail(v.line, e.what());
  }
}

void apply_model(const std::map<std::string, ConfigValue>& keys, PredictorKind& kind,
                 const std::string& section) {
  if (const auto it = keys.find("kind"); it != keys.end()) {
    const auto name = as_string(it->second, "kind");
    if (name == "ridge") kind = RidgeParams{};
    else if (name == "logistic") kind = LogisticParams{};
    else if (name == "mlp") kind = MlpParams{};
    else if (name == "external") kind = ExternalParams{};
    else fail(it->second.line, "unknown model kind '" + name + "'");
  }
  for (const auto& [key, value] : keys) {
    if (key == "kind") continue;
    bool used = false;
    if (auto* p = std::get_if<RidgeParams>(&kind)) {
      if (key == "lambda") p->lambda = as_double(value, key), used = true;
    } else if (auto* p = std::get_if<LogisticParams>(&kind)) {
      if (key == "lr") p->lr = as_double(value, key), used = true;
      if (key == "epochs") p->epochs = as_count(value, key), used = true;
      if (key == "batch") p->batch = as_count(value, key), used = true;
    } else if (auto* p = std::get_if<MlpParams>(&kind)) {
      if (key == "hidden_width") p->hidden_width = as_count(value, key), used = true;
      if (key == "lr") p->lr = as_double(value, key), used = true;
      if (key == "epochs") p->epochs = as_count(value, key), used = true;
      if (key == "batch") p->batch = as_count(value, key), used = true;
    } else if (auto* p = std::get_if<ExternalParams>(&kind)) {
      if (key == "command") p->command = as_strings(value, key), used = true;
      if (key == "timeout") p->timeout_seconds = as_double(value, key), used = true;
    }
    if (!used) {
      fail(value.line, "unknown key '" + key + "' in [" + section + "] for model kind '" +
                           std::string(kind_name(kind)) + "'");
    }
  }
}

}  // namespace

ConfigTable parse_config_table(std::string_view text) {
  ConfigTable table;
  std::string section;
  table[section];
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    ++line_no;
    const std::string_view line = trim(strip_comment(text.substr(start, end - start)));
    start = end + 1;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) fail(line_no, "empty section name");
      table[section];
    } else {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) fail(line_no, "expected key = value");
      std::string key(trim(line.substr(0, eq)));
      if (key.size() >= 2 && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
      if (key.empty()) fail(line_no, "empty key");
      auto& entries = table[section];
      if (entries.contains(key)) fail(line_no, "duplicate key '" + key + "'");
      entries.emplace(key, ValueParser(trim(line.substr(eq + 1)), line_no).parse_all());
    }
    if (end == text.size()) break;
  }
  return table;
}

PipelineConfig parse_config(std::string_view text, PipelineConfig base) {
  const ConfigTable table = parse_config_table(text);
  PipelineConfig cfg = std::move(base);

  if (const auto run = table.find("run"); run != table.end()) {
    if (const auto preset = run->second.find("preset"); preset != run->second.end()) {
      const auto name = as_string(preset->second, "preset");
      if (name != "benchmark") fail(preset->second.line, "unknown preset '" + name + "'");
      cfg = PipelineConfig::benchmark_preset();
    }
  }

  for (const auto& [section, keys] : table) {
    if (section == "initial_model") {
      apply_model(keys, cfg.initial_model, section);
      continue;
    }
    if (section == "final_model") {
      apply_model(keys, cfg.final_model, section);
      continue;
    }
    for (const auto& [key, value] : keys) {
      const auto unknown = [&] {
        fail(value.line, "unknown key '" + key + "'" +
                             (section.empty() ? std::string(" at top level")
                                              : " in [" + section + "]"));
      };
      wrap(value, [&] {
        if (section == "data") {
          if (key == "path") cfg.data_path = as_string(value, key);
          else if (key == "target") cfg.target = as_string(value, key);
          else if (key == "task") cfg.task = parse_task(as_string(value, key));
          else if (key == "reference") cfg.reference = parse_reference_strategy(as_string(value, key));
          else if (key == "categorical") {
            for (const auto& c : as_strings(value, key)) cfg.schema_hints[c] = ColumnKind::kCategorical;
          } else if (key == "numeric") {
            for (const auto& c : as_strings(value, key)) cfg.schema_hints[c] = ColumnKind::kNumeric;
          } else unknown();
        } else if (section == "split") {
          if (key == "train_fraction") cfg.train_fraction = as_double(value, key);
          else if (key == "val_fraction") cfg.val_fraction = as_double(value, key);
          else unknown();
        } else if (section == "training") {
          if (key == "initial_epochs") cfg.initial_epochs = as_count(value, key);
          else if (key == "patience") cfg.patience = as_count(value, key);
          else unknown();
        } else if (section == "importance") {
          auto& imp = cfg.importance;
          if (key == "method") imp.method = parse_attribution_method(as_string(value, key));
          else if (key == "char_fn") imp.char_fn = parse_char_method(as_string(value, key));
          else if (key == "metric") imp.metric = parse_metric(as_string(value, key));
          else if (key == "l_threshold") imp.l_threshold = as_count(value, key);
          else if (key == "mc_perms") imp.mc_perms = as_count(value, key);
          else if (key == "max_exact_players") imp.max_exact_players = as_count(value, key);
          else if (key == "pfi_repeats") imp.pfi_repeats = as_count(value, key);
          else if (key == "threads") imp.threads = as_count(value, key);
          else unknown();
        } else if (section == "selection") {
          if (key == "top_q") cfg.selection = SelectionRule::keep_top(as_double(value, key));
          else if (key == "threshold") cfg.selection = SelectionRule::keep_above(as_double(value, key));
          else unknown();
        } else if (section == "sampling") {
          if (key == "gate") cfg.sampling.gate = as_count(value, key);
          else if (key == "sample_size") cfg.sampling.sample_size = as_count(value, key);
          else if (key == "k") cfg.sampling.k = as_count(value, key);
          else if (key == "final_on_sample") cfg.sampling.final_on_sample = as_bool(value, key);
          else unknown();
        } else if (section == "run") {
          if (key == "preset") return;
          if (key == "seeds") {
            const auto* arr = std::get_if<ConfigValue::Array>(&value.value);
            if (!arr) fail(value.line, "'seeds' must be an array of integers");
            cfg.seeds.clear();
            for (const auto& s : *arr) {
              const auto seed = as_int(s, key);
              if (seed < 0) fail(s.line, "seeds must be non-negative");
              cfg.seeds.push_back(static_cast<std::uint64_t>(seed));
            }
          } else unknown();
        } else if (section.empty()) {
          unknown();
        } else {
          fail(value.line, "unknown section [" + section + "]");
        }
      });
    }
    if (keys.empty() && !section.empty() &&
        section != "data" && section != "split" && section != "training" &&
        section != "importance" && section != "selection" && section != "sampling" &&
        section != "run") {
      throw Error(ErrorCode::kConfig, "unknown section [" + section + "]");
    }
  }
  // Both selection keys in one file is a contradiction, not an override.
  if (const auto sel = table.find("selection");
      sel != table.end() && sel->second.contains("top_q") && sel->second.contains("threshold")) {
    throw Error(ErrorCode::kConfig, "[selection] sets both top_q and threshold");
  }
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), std::move(base));
}

}  // namespace gtselect
