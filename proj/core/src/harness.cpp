#include "tinyguard/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "tinyguard/errors.hpp"
#include "tinyguard/robust.hpp"
#include "tinyguard/rng.hpp"

namespace tinyguard {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

[[noreturn]] void fail_at(std::string_view source, int line, const std::string& msg) {
  throw ConfigError(std::string(source) + ":" + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& v, std::string_view source, int line) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    fail_at(source, line, "expected a number, got '" + v + "'");
  }
}

long long parse_int(const std::string& v, std::string_view source, int line) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    fail_at(source, line, "expected an integer, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& v, std::string_view source, int line) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    fail_at(source, line, "expected an unsigned integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& v, std::string_view source, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail_at(source, line, "expected true/false, got '" + v + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& v, std::string_view source,
                                         int line) {
  std::vector<std::size_t> out;
  std::string token;
  std::stringstream ss(v);
  while (std::getline(ss, token, ',')) {
    token = trim(token);
    if (token.empty()) continue;
    const long long x = parse_int(token, source, line);
    if (x < 1) fail_at(source, line, "list entries must be positive");
    out.push_back(static_cast<std::size_t>(x));
  }
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

struct KeyHandler {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&, std::string_view, int)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<KeyHandler>& key_table() {
  static const std::vector<KeyHandler> table = {
      {"name",
       [](ExperimentConfig& c, const std::string& v, std::string_view, int) { c.name = v; },
       [](const ExperimentConfig& c) { return c.name; }},
      {"clients",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         const long long x = parse_int(v, s, l);
         if (x < 1) fail_at(s, l, "clients must be positive");
         c.n_clients = static_cast<std::size_t>(x);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.n_clients); }},
      {"byzantine_fraction",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.byzantine_fraction = parse_double(v, s, l);
         if (!(c.byzantine_fraction >= 0.0) || c.byzantine_fraction >= 0.5) {
           fail_at(s, l,
                   "byzantine_fraction must lie in [0, 0.5): the threat model assumes "
                   "fewer than half the clients are Byzantine");
         }
       },
       [](const ExperimentConfig& c) { return fmt_double(c.byzantine_fraction); }},
      {"rounds",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         const long long x = parse_int(v, s, l);
         if (x < 0) fail_at(s, l, "rounds must be non-negative");
         c.rounds = static_cast<int>(x);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.rounds); }},
      {"eta",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.eta = parse_double(v, s, l);
         if (!(c.eta > 0.0)) fail_at(s, l, "eta must be positive");
       },
       [](const ExperimentConfig& c) { return fmt_double(c.eta); }},
      {"local_epochs",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         const long long x = parse_int(v, s, l);
         if (x < 1) fail_at(s, l, "local_epochs must be at least 1");
         c.local_epochs = static_cast<int>(x);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.local_epochs); }},
      {"batch_size",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         const long long x = parse_int(v, s, l);
         if (x < 1) fail_at(s, l, "batch_size must be at least 1");
         c.batch_size = static_cast<std::size_t>(x);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.batch_size); }},
      {"seed",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.seed = parse_u64(v, s, l);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      {"dirichlet_alpha",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.dirichlet_alpha = parse_double(v, s, l);
         if (!(c.dirichlet_alpha > 0.0)) fail_at(s, l, "dirichlet_alpha must be positive");
       },
       [](const ExperimentConfig& c) { return fmt_double(c.dirichlet_alpha); }},
      {"model.hidden",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.hidden_widths = parse_size_list(v, s, l);
       },
       [](const ExperimentConfig& c) { return join_sizes(c.hidden_widths); }},
      {"attack.kind",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         try {
           c.attack.kind = attack_kind_from_string(v);
         } catch (const ConfigError& e) {
           fail_at(s, l, e.what());
         }
       },
       [](const ExperimentConfig& c) { return to_string(c.attack.kind); }},
      {"attack.sigma",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.attack.noise_sigma = parse_double(v, s, l);
         if (!(c.attack.noise_sigma > 0.0)) fail_at(s, l, "attack.sigma must be positive");
       },
       [](const ExperimentConfig& c) { return fmt_double(c.attack.noise_sigma); }},
      {"attack.alpha",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.attack.flip_scale = parse_double(v, s, l);
         if (!(c.attack.flip_scale > 0.0)) fail_at(s, l, "attack.alpha must be positive");
       },
       [](const ExperimentConfig& c) { return fmt_double(c.attack.flip_scale); }},
      {"attack.beta",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.attack.scale_factor = parse_double(v, s, l);
         if (!(c.attack.scale_factor > 0.0)) fail_at(s, l, "attack.beta must be positive");
       },
       [](const ExperimentConfig& c) { return fmt_double(c.attack.scale_factor); }},
      {"attack.lambda_s",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.attack.pgd.lambda_s = parse_double(v, s, l);
         if (!(c.attack.pgd.lambda_s >= 0.0)) fail_at(s, l, "attack.lambda_s must be >= 0");
       },
       [](const ExperimentConfig& c) { return fmt_double(c.attack.pgd.lambda_s); }},
      {"attack.lambda_a",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.attack.pgd.lambda_a = parse_double(v, s, l);
         if (!(c.attack.pgd.lambda_a > 0.0)) fail_at(s, l, "attack.lambda_a must be positive");
       },
       [](const ExperimentConfig& c) { return fmt_double(c.attack.pgd.lambda_a); }},
      {"attack.steps",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         const long long x = parse_int(v, s, l);
         if (x < 1) fail_at(s, l, "attack.steps must be at least 1");
         c.attack.pgd.steps = static_cast<int>(x);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.attack.pgd.steps); }},
      {"attack.step_size",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.attack.pgd.step_size = parse_double(v, s, l);
         if (c.attack.pgd.step_size < 0.0) fail_at(s, l, "attack.step_size must be >= 0");
       },
       [](const ExperimentConfig& c) { return fmt_double(c.attack.pgd.step_size); }},
      {"attack.subsample",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         const long long x = parse_int(v, s, l);
         if (x < 1) fail_at(s, l, "attack.subsample must be positive");
         c.attack.pgd.subsample = static_cast<int>(x);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.attack.pgd.subsample); }},
      {"attack.decay",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.attack.pgd.decay = parse_double(v, s, l);
         if (!(c.attack.pgd.decay > 0.0) || c.attack.pgd.decay > 1.0) {
           fail_at(s, l, "attack.decay must lie in (0, 1]");
         }
       },
       [](const ExperimentConfig& c) { return fmt_double(c.attack.pgd.decay); }},
      {"defense.kind",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         try {
           c.defense.kind = aggregator_kind_from_string(v);
         } catch (const ConfigError& e) {
           fail_at(s, l, e.what());
         }
       },
       [](const ExperimentConfig& c) { return to_string(c.defense.kind); }},
      {"defense.krum_f",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.defense.krum_f = static_cast<int>(parse_int(v, s, l));
       },
       [](const ExperimentConfig& c) { return std::to_string(c.defense.krum_f); }},
      {"defense.multikrum_m",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.defense.multikrum_m = static_cast<int>(parse_int(v, s, l));
       },
       [](const ExperimentConfig& c) { return std::to_string(c.defense.multikrum_m); }},
      {"defense.trim_fraction",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.defense.trim_fraction = parse_double(v, s, l);
         if (!(c.defense.trim_fraction >= 0.0) || c.defense.trim_fraction >= 0.5) {
           fail_at(s, l, "defense.trim_fraction must lie in [0, 0.5)");
         }
       },
       [](const ExperimentConfig& c) { return fmt_double(c.defense.trim_fraction); }},
      {"defense.foolsgold_window",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         const long long x = parse_int(v, s, l);
         if (x < 0) fail_at(s, l, "defense.foolsgold_window must be >= 0");
         c.defense.foolsgold_window = static_cast<std::size_t>(x);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.defense.foolsgold_window); }},
      {"defense.weighted",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.defense.sample_weighted = parse_bool(v, s, l);
       },
       [](const ExperimentConfig& c) {
         return std::string(c.defense.sample_weighted ? "true" : "false");
       }},
      {"detector.lambda",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.detector.lambda = parse_double(v, s, l);
         if (!(c.detector.lambda > 0.0)) fail_at(s, l, "detector.lambda must be positive");
       },
       [](const ExperimentConfig& c) { return fmt_double(c.detector.lambda); }},
      {"detector.standardize",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.detector.standardize_features = parse_bool(v, s, l);
       },
       [](const ExperimentConfig& c) {
         return std::string(c.detector.standardize_features ? "true" : "false");
       }},
      {"detector.epsilon",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.detector.epsilon = parse_double(v, s, l);
         if (!(c.detector.epsilon > 0.0)) fail_at(s, l, "detector.epsilon must be positive");
       },
       [](const ExperimentConfig& c) { return fmt_double(c.detector.epsilon); }},
      {"detector.topk",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         const long long x = parse_int(v, s, l);
         if (x < 0) fail_at(s, l, "detector.topk must be >= 0");
         c.detector.topk = static_cast<std::size_t>(x);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.detector.topk); }},
      {"data.source",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         if (v == "synthetic") {
           c.data.kind = DataSource::Kind::synthetic;
         } else if (v == "idx") {
           c.data.kind = DataSource::Kind::idx;
         } else {
           fail_at(s, l, "data.source must be synthetic or idx");
         }
       },
       [](const ExperimentConfig& c) {
         return std::string(c.data.kind == DataSource::Kind::synthetic ? "synthetic" : "idx");
       }},
      {"data.examples",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         const long long x = parse_int(v, s, l);
         if (x < 1) fail_at(s, l, "data.examples must be positive");
         c.data.synthetic.examples = static_cast<std::size_t>(x);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.data.synthetic.examples); }},
      {"data.input_dim",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         const long long x = parse_int(v, s, l);
         if (x < 1) fail_at(s, l, "data.input_dim must be positive");
         c.data.synthetic.input_dim = static_cast<std::size_t>(x);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.data.synthetic.input_dim); }},
      {"data.classes",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         const long long x = parse_int(v, s, l);
         if (x < 1) fail_at(s, l, "data.classes must be positive");
         c.data.synthetic.classes = static_cast<int>(x);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.data.synthetic.classes); }},
      {"data.separation",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.data.synthetic.separation = parse_double(v, s, l);
         if (c.data.synthetic.separation < 0.0) fail_at(s, l, "data.separation must be >= 0");
       },
       [](const ExperimentConfig& c) { return fmt_double(c.data.synthetic.separation); }},
      {"data.noise_sigma",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.data.synthetic.noise_sigma = parse_double(v, s, l);
         if (!(c.data.synthetic.noise_sigma > 0.0)) {
           fail_at(s, l, "data.noise_sigma must be positive");
         }
       },
       [](const ExperimentConfig& c) { return fmt_double(c.data.synthetic.noise_sigma); }},
      {"data.train_images",
       [](ExperimentConfig& c, const std::string& v, std::string_view, int) {
         c.data.train_images = v;
       },
       [](const ExperimentConfig& c) { return c.data.train_images; }},
      {"data.train_labels",
       [](ExperimentConfig& c, const std::string& v, std::string_view, int) {
         c.data.train_labels = v;
       },
       [](const ExperimentConfig& c) { return c.data.train_labels; }},
      {"data.test_images",
       [](ExperimentConfig& c, const std::string& v, std::string_view, int) {
         c.data.test_images = v;
       },
       [](const ExperimentConfig& c) { return c.data.test_images; }},
      {"data.test_labels",
       [](ExperimentConfig& c, const std::string& v, std::string_view, int) {
         c.data.test_labels = v;
       },
       [](const ExperimentConfig& c) { return c.data.test_labels; }},
      {"data.test_fraction",
       [](ExperimentConfig& c, const std::string& v, std::string_view s, int l) {
         c.data.test_fraction = parse_double(v, s, l);
         if (!(c.data.test_fraction >= 0.0) || c.data.test_fraction >= 1.0) {
           fail_at(s, l, "data.test_fraction must lie in [0, 1)");
         }
       },
       [](const ExperimentConfig& c) { return fmt_double(c.data.test_fraction); }},
  };
  return table;
}

const KeyHandler* find_key(const std::string& key) {
  for (const auto& h : key_table()) {
    if (key == h.key) return &h;
  }
  return nullptr;
}

struct KvLine {
  std::string key;
  std::string value;
  int line = 0;
};

std::vector<KvLine> read_kv_lines(std::string_view text, std::string_view source) {
  std::vector<KvLine> out;
  std::map<std::string, int> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos
                                                                          : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      fail_at(source, line_no, "expected 'key = value'");
    }
    KvLine kv;
    kv.key = trim(std::string_view(stripped).substr(0, eq));
    kv.value = trim(std::string_view(stripped).substr(eq + 1));
    kv.line = line_no;
    if (kv.key.empty()) fail_at(source, line_no, "empty key");
    for (char ch : kv.key) {
      if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '.' && ch != '_') {
        fail_at(source, line_no, "invalid character in key '" + kv.key + "'");
      }
    }
    auto [it, inserted] = seen.emplace(kv.key, line_no);
    if (!inserted) {
      fail_at(source, line_no,
              "duplicate key '" + kv.key + "' (first defined on line " +
                  std::to_string(it->second) + ")");
    }
    out.push_back(std::move(kv));
  }
  return out;
}

void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& value,
               std::string_view source, int line) {
  const KeyHandler* h = find_key(key);
  if (!h) fail_at(source, line, "unknown key '" + key + "'");
  h->set(cfg, value, source, line);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open file: " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ConfigError("cannot write file: " + path.string());
  }
  out << content;
}

std::string csv_opt(const std::optional<double>& v) {
  return v ? fmt_double(*v) : std::string();
}

void run_jobs(std::size_t count, int parallel, const std::function<void(std::size_t)>& fn) {
  if (parallel <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(parallel), count);
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace

RunManifest parse_manifest_text(std::string_view text, std::string_view source_name) {
  const auto kvs = read_kv_lines(text, source_name);

  RunManifest manifest;
  std::vector<std::string> entry_order;
  std::map<std::string, std::vector<KvLine>> entry_pairs;
  std::vector<KvLine> base_pairs;

  for (const auto& kv : kvs) {
    if (kv.key == "output_dir") {
      manifest.output_dir = kv.value;
      continue;
    }
    if (kv.key == "repetitions") {
      const long long x = parse_int(kv.value, source_name, kv.line);
      if (x < 1) fail_at(source_name, kv.line, "repetitions must be at least 1");
      manifest.repetitions = static_cast<int>(x);
      continue;
    }
    if (kv.key.rfind("base.", 0) == 0) {
      base_pairs.push_back({kv.key.substr(5), kv.value, kv.line});
      continue;
    }
    if (kv.key.rfind("entry.", 0) == 0) {
      const std::string rest = kv.key.substr(6);
      const std::size_t dot = rest.find('.');
      if (dot == std::string::npos || dot == 0 || dot + 1 >= rest.size()) {
        fail_at(source_name, kv.line, "expected entry.<name>.<key>");
      }
      const std::string name = rest.substr(0, dot);
      if (!entry_pairs.count(name)) entry_order.push_back(name);
      entry_pairs[name].push_back({rest.substr(dot + 1), kv.value, kv.line});
      continue;
    }
    fail_at(source_name, kv.line, "unknown key '" + kv.key + "'");
  }

  if (entry_order.empty()) {
    throw ConfigError(std::string(source_name) + ": manifest defines no entries");
  }

  for (const auto& name : entry_order) {
    ExperimentConfig cfg;
    for (const auto& kv : base_pairs) {
      if (kv.key == "name") fail_at(source_name, kv.line, "entry names come from key paths");
      apply_key(cfg, kv.key, kv.value, source_name, kv.line);
    }
    for (const auto& kv : entry_pairs[name]) {
      if (kv.key == "name") fail_at(source_name, kv.line, "entry names come from key paths");
      apply_key(cfg, kv.key, kv.value, source_name, kv.line);
    }
    cfg.name = name;
    try {
      validate(cfg);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(source_name) + ": entry '" + name + "': " + e.what());
    }
    manifest.entries.push_back(std::move(cfg));
  }
  return manifest;
}

RunManifest parse_manifest_file(const std::filesystem::path& path) {
  return parse_manifest_text(read_text_file(path), path.string());
}

ExperimentConfig parse_experiment_text(std::string_view text, std::string_view source_name) {
  ExperimentConfig cfg;
  for (const auto& kv : read_kv_lines(text, source_name)) {
    apply_key(cfg, kv.key, kv.value, source_name, kv.line);
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig parse_experiment_file(const std::filesystem::path& path) {
  return parse_experiment_text(read_text_file(path), path.string());
}

std::string serialize_config_kv(const ExperimentConfig& config) {
  std::string out;
  for (const auto& h : key_table()) {
    out += h.key;
    out += " = ";
    out += h.get(config);
    out += "\n";
  }
  return out;
}

std::string serialize_manifest(const RunManifest& manifest) {
  std::string out;
  out += "output_dir = " + manifest.output_dir + "\n";
  out += "repetitions = " + std::to_string(manifest.repetitions) + "\n";
  for (const auto& cfg : manifest.entries) {
    out += "\n";
    for (const auto& h : key_table()) {
      if (std::string_view(h.key) == "name") continue;
      out += "entry." + cfg.name + "." + h.key + " = " + h.get(cfg) + "\n";
    }
  }
  return out;
}

std::string result_json(const ExperimentResult& result) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& h : key_table()) {
    cfg[h.key] = h.get(result.config);
  }
  j["config"] = std::move(cfg);
  j["initial_accuracy"] = result.initial_accuracy;
  nlohmann::ordered_json rounds = nlohmann::ordered_json::array();
  for (const auto& r : result.rounds) {
    nlohmann::ordered_json jr;
    jr["round"] = r.round;
    jr["test_accuracy"] = r.test_accuracy;
    jr["test_loss"] = r.test_loss;
    if (r.detection_precision) {
      jr["detection_precision"] = *r.detection_precision;
    } else {
      jr["detection_precision"] = nullptr;
    }
    if (r.detection_recall) {
      jr["detection_recall"] = *r.detection_recall;
    } else {
      jr["detection_recall"] = nullptr;
    }
    jr["flagged_count"] = r.flagged_count;
    jr["flagged"] = r.flagged;
    rounds.push_back(std::move(jr));
  }
  j["rounds"] = std::move(rounds);
  j["final_accuracy"] = result.final_accuracy;
  if (result.mean_detection_precision) {
    j["mean_detection_precision"] = *result.mean_detection_precision;
  } else {
    j["mean_detection_precision"] = nullptr;
  }
  return j.dump(2) + "\n";
}

std::string rounds_csv(const ExperimentResult& result) {
  std::string out =
      "round,test_accuracy,test_loss,detection_precision,detection_recall,"
      "flagged_count,extraction_ms,scoring_ms,aggregation_ms,local_training_ms\n";
  for (const auto& r : result.rounds) {
    out += std::to_string(r.round);
    out += "," + fmt_double(r.test_accuracy);
    out += "," + fmt_double(r.test_loss);
    out += "," + csv_opt(r.detection_precision);
    out += "," + csv_opt(r.detection_recall);
    out += "," + std::to_string(r.flagged_count);
    out += "," + fmt_double(r.timings.extraction_ms);
    out += "," + fmt_double(r.timings.scoring_ms);
    out += "," + fmt_double(r.timings.aggregation_ms);
    out += "," + fmt_double(r.timings.local_training_ms);
    out += "\n";
  }
  return out;
}

void write_experiment_outputs(const ExperimentResult& result,
                              const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "result.json", result_json(result));
  write_text_file(dir / "rounds.csv", rounds_csv(result));
  write_text_file(dir / "config.kv", serialize_config_kv(result.config));
  write_text_file(dir / "runtime.txt", fmt_double(result.total_runtime_ms) + "\n");
}

namespace {

struct StoredOutcome {
  bool ok = false;
  double final_accuracy = 0.0;
  std::optional<double> mean_precision;
  double runtime_ms = 0.0;
};

StoredOutcome load_stored(const std::filesystem::path& dir) {
  StoredOutcome out;
  const auto result_path = dir / "result.json";
  std::ifstream in(result_path);
  if (!in) return out;
  try {
    nlohmann::json j;
    in >> j;
    out.final_accuracy = j.at("final_accuracy").get<double>();
    if (!j.at("mean_detection_precision").is_null()) {
      out.mean_precision = j.at("mean_detection_precision").get<double>();
    }
    out.ok = true;
  } catch (const std::exception&) {
    return out;
  }
  std::ifstream rt(dir / "runtime.txt");
  if (rt) rt >> out.runtime_ms;
  return out;
}

}  // namespace

MatrixSummary run_matrix(const RunManifest& manifest, const std::filesystem::path& out_dir,
                         int seeds_override, int parallel) {
  const int reps = seeds_override > 0 ? seeds_override : manifest.repetitions;
  struct Job {
    std::size_t entry_idx;
    int rep;
    std::filesystem::path dir;
  };
  std::vector<Job> jobs;
  for (std::size_t e = 0; e < manifest.entries.size(); ++e) {
    for (int k = 0; k < reps; ++k) {
      jobs.push_back({e, k,
                      out_dir / manifest.entries[e].name / ("seed" + std::to_string(k))});
    }
  }

  struct JobOutcome {
    bool executed = false;
    bool skipped = false;
    bool failed = false;
    std::string error;
    StoredOutcome stored;
  };
  std::vector<JobOutcome> outcomes(jobs.size());
  std::mutex io_mutex;

  run_jobs(jobs.size(), parallel, [&](std::size_t i) {
    const Job& job = jobs[i];
    JobOutcome& out = outcomes[i];
    if (std::filesystem::exists(job.dir / "result.json")) {
      out.skipped = true;
      out.stored = load_stored(job.dir);
      return;
    }
    try {
      ExperimentConfig cfg = manifest.entries[job.entry_idx];
      cfg.seed = cfg.seed + static_cast<std::uint64_t>(job.rep);
      const ExperimentResult result = run_experiment(cfg);
      {
        std::lock_guard<std::mutex> lock(io_mutex);
        write_experiment_outputs(result, job.dir);
      }
      out.executed = true;
      out.stored.ok = true;
      out.stored.final_accuracy = result.final_accuracy;
      out.stored.mean_precision = result.mean_detection_precision;
      out.stored.runtime_ms = result.total_runtime_ms;
    } catch (const std::exception& e) {
      out.failed = true;
      out.error = manifest.entries[job.entry_idx].name + "/seed" + std::to_string(job.rep) +
                  ": " + e.what();
      try {
        std::lock_guard<std::mutex> lock(io_mutex);
        std::filesystem::create_directories(job.dir);
        write_text_file(job.dir / "error.txt", out.error + "\n");
      } catch (const std::exception&) {
      }
    }
  });

  MatrixSummary summary;
  for (std::size_t e = 0; e < manifest.entries.size(); ++e) {
    EntrySummaryRow row;
    row.entry = manifest.entries[e].name;
    row.attack = to_string(manifest.entries[e].attack.kind);
    row.defense = to_string(manifest.entries[e].defense.kind);
    row.seeds = reps;
    double acc_sum = 0.0, prec_sum = 0.0, rt_sum = 0.0;
    int acc_count = 0, prec_count = 0;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].entry_idx != e) continue;
      const auto& out = outcomes[i];
      row.executed += out.executed ? 1 : 0;
      row.skipped += out.skipped ? 1 : 0;
      row.failed += out.failed ? 1 : 0;
      if (out.failed) summary.errors.push_back(out.error);
      if (out.stored.ok) {
        acc_sum += out.stored.final_accuracy;
        rt_sum += out.stored.runtime_ms;
        ++acc_count;
        if (out.stored.mean_precision) {
          prec_sum += *out.stored.mean_precision;
          ++prec_count;
        }
      }
    }
    if (acc_count > 0) {
      row.mean_final_accuracy = acc_sum / acc_count;
      row.mean_runtime_ms = rt_sum / acc_count;
    }
    if (prec_count > 0) row.mean_detection_precision = prec_sum / prec_count;
    summary.executed += row.executed;
    summary.skipped += row.skipped;
    summary.failed += row.failed;
    summary.rows.push_back(std::move(row));
  }

  std::string csv = "entry,attack,defense,seeds,mean_accuracy,mean_precision,mean_runtime_ms\n";
  for (const auto& row : summary.rows) {
    csv += row.entry + "," + row.attack + "," + row.defense + "," +
           std::to_string(row.seeds) + "," + fmt_double(row.mean_final_accuracy) + "," +
           csv_opt(row.mean_detection_precision) + "," + fmt_double(row.mean_runtime_ms) +
           "\n";
  }
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "summary.csv", csv);
  return summary;
}

ParetoSweep run_pareto_sweep(const ExperimentConfig& base,
                             std::vector<double> lambda_values, int seeds) {
  if (base.attack.kind != AttackKind::adaptive_pgd) {
    throw ConfigError("pareto sweep requires attack.kind = adaptive_pgd");
  }
  if (lambda_values.empty()) throw ConfigError("pareto sweep needs lambda_s values");
  if (seeds < 1) throw ConfigError("pareto sweep needs at least one seed");

  ParetoSweep sweep;
  const FingerprintOptions fopts{base.detector.epsilon, base.detector.topk};
  std::vector<double> honest_medians;

  for (int k = 0; k < seeds; ++k) {
    ExperimentConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(k);
    Simulation sim(cfg);
    if (sim.byzantine_ids().empty()) {
      throw ConfigError("pareto sweep needs a positive byzantine_fraction");
    }
    const auto updates = sim.compute_local_updates();
    std::vector<std::size_t> honest;
    for (std::size_t i = 0; i < updates.size(); ++i) {
      if (!sim.byzantine_ids().count(updates[i].client_id)) honest.push_back(i);
    }
    const GradientUpdate honest_mean = mean_update(updates, honest);
    std::vector<Fingerprint> honest_fps;
    honest_fps.reserve(honest.size());
    for (std::size_t i : honest) {
      honest_fps.push_back(extract_fingerprint(updates[i], fopts));
    }
    const FeatureScaler scaler = FeatureScaler::fit(honest_fps);
    const auto ref_z = scaler.transform(extract_fingerprint(honest_mean, fopts));
    const std::size_t kept = scaler.kept_columns().size();

    std::vector<double> honest_mse;
    honest_mse.reserve(honest_fps.size());
    for (const auto& fp : honest_fps) {
      const auto z = scaler.transform(fp);
      double acc = 0.0;
      for (std::size_t c = 0; c < z.size(); ++c) {
        const double diff = z[c] - ref_z[c];
        acc += diff * diff;
      }
      honest_mse.push_back(kept > 0 ? acc / static_cast<double>(kept) : 0.0);
    }
    honest_medians.push_back(median_of(honest_mse));

    GradientUpdate poison = honest_mean;
    for (auto& v : poison.values) v = -v;

    for (std::size_t li = 0; li < lambda_values.size(); ++li) {
      AdaptivePgdParams params = base.attack.pgd;
      params.lambda_s = lambda_values[li];
      const auto res = adaptive_pgd_attack(
          honest_mean, poison, params, scaler, fopts,
          derive_seed(cfg.seed, "pareto/" + std::to_string(li)));
      sweep.runs.push_back(
          {lambda_values[li], res.fingerprint_mse, res.attack_alignment, cfg.seed});
    }
  }

  double hm = 0.0;
  for (double v : honest_medians) hm += v;
  sweep.honest_mse_median = hm / static_cast<double>(honest_medians.size());

  std::sort(lambda_values.begin(), lambda_values.end());
  lambda_values.erase(std::unique(lambda_values.begin(), lambda_values.end()),
                      lambda_values.end());
  for (double lam : lambda_values) {
    ParetoRow row{lam, 0.0, 0.0, 0};
    int count = 0;
    for (const auto& r : sweep.runs) {
      if (r.lambda_s == lam) {
        row.fingerprint_mse += r.fingerprint_mse;
        row.attack_alignment += r.attack_alignment;
        ++count;
      }
    }
    row.fingerprint_mse /= count;
    row.attack_alignment /= count;
    sweep.frontier.push_back(row);
  }
  return sweep;
}

void write_pareto_outputs(const ParetoSweep& sweep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string runs = "lambda_s,fingerprint_mse,attack_alignment,seed\n";
  for (const auto& r : sweep.runs) {
    runs += fmt_double(r.lambda_s) + "," + fmt_double(r.fingerprint_mse) + "," +
            fmt_double(r.attack_alignment) + "," + std::to_string(r.seed) + "\n";
  }
  write_text_file(dir / "pareto_runs.csv", runs);

  std::string frontier = "lambda_s,fingerprint_mse,attack_alignment\n";
  for (const auto& r : sweep.frontier) {
    frontier += fmt_double(r.lambda_s) + "," + fmt_double(r.fingerprint_mse) + "," +
                fmt_double(r.attack_alignment) + "\n";
  }
  write_text_file(dir / "pareto_frontier.csv", frontier);

  nlohmann::ordered_json meta;
  meta["honest_mse_median"] = sweep.honest_mse_median;
  meta["runs"] = sweep.runs.size();
  write_text_file(dir / "pareto_meta.json", meta.dump(2) + "\n");
}

AblationAxis ablation_axis_from_string(const std::string& name) {
  if (name == "n_clients") return AblationAxis::n_clients;
  if (name == "lambda") return AblationAxis::lambda;
  if (name == "dirichlet_alpha") return AblationAxis::dirichlet_alpha;
  throw ConfigError("unknown ablation axis: " + name +
                    " (expected n_clients, lambda, or dirichlet_alpha)");
}

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::n_clients: return "n_clients";
    case AblationAxis::lambda: return "lambda";
    case AblationAxis::dirichlet_alpha: return "dirichlet_alpha";
  }
  return "n_clients";
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& base, AblationAxis axis,
                                      const std::vector<double>& values, int seeds) {
  if (values.empty()) throw ConfigError("ablation needs at least one axis value");
  if (seeds < 1) throw ConfigError("ablation needs at least one seed");
  std::vector<AblationRow> rows;
  for (double value : values) {
    ExperimentConfig cfg = base;
    switch (axis) {
      case AblationAxis::n_clients: {
        if (value < 1.0) throw ConfigError("n_clients values must be positive");
        cfg.n_clients = static_cast<std::size_t>(value);
        break;
      }
      case AblationAxis::lambda:
        if (!(value > 0.0)) throw ConfigError("lambda values must be positive");
        cfg.detector.lambda = value;
        break;
      case AblationAxis::dirichlet_alpha:
        if (!(value > 0.0)) throw ConfigError("dirichlet_alpha values must be positive");
        cfg.dirichlet_alpha = value;
        break;
    }
    validate(cfg);

    AblationRow row;
    row.value = value;
    double prec_sum = 0.0;
    int prec_count = 0;
    for (int k = 0; k < seeds; ++k) {
      ExperimentConfig run_cfg = cfg;
      run_cfg.seed = cfg.seed + static_cast<std::uint64_t>(k);
      const auto result = run_experiment(run_cfg);
      row.final_accuracy += result.final_accuracy;
      row.runtime_ms += result.total_runtime_ms;
      if (result.mean_detection_precision) {
        prec_sum += *result.mean_detection_precision;
        ++prec_count;
      }
    }
    row.final_accuracy /= seeds;
    row.runtime_ms /= seeds;
    if (prec_count > 0) row.detection_precision = prec_sum / prec_count;
    rows.push_back(row);
  }
  return rows;
}

void write_ablation_csv(AblationAxis axis, const std::vector<AblationRow>& rows,
                        const std::filesystem::path& file) {
  std::string csv = to_string(axis) + ",final_accuracy,detection_precision,runtime_ms\n";
  for (const auto& r : rows) {
    csv += fmt_double(r.value) + "," + fmt_double(r.final_accuracy) + "," +
           csv_opt(r.detection_precision) + "," + fmt_double(r.runtime_ms) + "\n";
  }
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  write_text_file(file, csv);
}

void write_probe_csv(const std::vector<ProbeRow>& rows, const std::filesystem::path& file) {
  std::string csv = "n,defense,median_ms\n";
  for (const auto& r : rows) {
    csv += std::to_string(r.n) + "," + to_string(r.defense) + "," + fmt_double(r.median_ms) +
           "\n";
  }
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  write_text_file(file, csv);
}

}  // namespace tinyguard
