#include "fedkd/config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fedkd {

Method method_from_string(const std::string& name) {
  if (name == "proposed") return Method::proposed;
  if (name == "fedavg_weak_only") return Method::fedavg_weak_only;
  if (name == "fedavg_strong_only") return Method::fedavg_strong_only;
  if (name == "feddf") return Method::feddf;
  if (name == "dsfl") return Method::dsfl;
  if (name == "fedmd") return Method::fedmd;
  throw std::invalid_argument("unknown method \"" + name + "\"");
}

std::string method_to_string(Method m) {
  switch (m) {
    case Method::proposed: return "proposed";
    case Method::fedavg_weak_only: return "fedavg_weak_only";
    case Method::fedavg_strong_only: return "fedavg_strong_only";
    case Method::feddf: return "feddf";
    case Method::dsfl: return "dsfl";
    case Method::fedmd: return "fedmd";
  }
  throw std::logic_error("unreachable method");
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (methods.empty()) fail("methods must list at least one method");
  if (n_clients < 1) fail("n_clients must be >= 1");
  if (strong_fraction < 0.0 || strong_fraction > 1.0) fail("strong_fraction must be in [0, 1]");
  if (!(activation_fraction > 0.0) || activation_fraction > 1.0)
    fail("activation_fraction must be in (0, 1]");
  if (!(dirichlet_alpha > 0.0)) fail("dirichlet_alpha must be > 0");
  if (unlabeled_fraction < 0.0 || unlabeled_fraction > 1.0)
    fail("unlabeled_fraction must be in [0, 1]");
  if (input_dim < 1) fail("input_dim must be >= 1");
  if (hidden_widths.empty()) fail("hidden_widths must list at least one width");
  for (int w : hidden_widths)
    if (w < 1) fail("hidden_widths entries must be >= 1");
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (!(aux_scale > 0.0) || aux_scale > 1.0) fail("aux_scale must be in (0, 1]");
  if (tau < 1) fail("tau must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(base_lr > 0.0)) fail("base_lr must be > 0");
  {
    int prev = -1;
    for (const auto& [epoch, lr] : lr_milestones) {
      if (epoch <= prev) fail("lr_milestones epochs must be strictly increasing");
      if (!(lr > 0.0)) fail("lr_milestones rates must be > 0");
      prev = epoch;
    }
  }
  if (weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (!(temperature > 0.0)) fail("temperature must be > 0");
  if (lambda_max < 0.0) fail("lambda_max must be >= 0");
  if (ramp_threshold < 0) fail("ramp_threshold must be >= 0");
  if (rounds < 1) fail("rounds must be >= 1");
  if (eval_every < 1) fail("eval_every must be >= 1");
  if (num_seeds < 1) fail("num_seeds must be >= 1");
  if (samples_per_class < 1) fail("samples_per_class must be >= 1");
  if (test_per_class < 1) fail("test_per_class must be >= 1");
  if (!(separation > 0.0)) fail("separation must be > 0");
  if (public_pool_size < 0) fail("public_pool_size must be >= 0");
  if (dsfl_sharpen_temperature < 0.0) fail("dsfl_sharpen_temperature must be >= 0");
  if (!(bound_p > 0.0 && bound_p < 1.0)) fail("bound_p must be in (0, 1)");
  for (Method m : methods) {
    const bool needs_pool = m == Method::feddf || m == Method::dsfl || m == Method::fedmd;
    if (needs_pool && public_pool_size == 0)
      fail("public_pool_size must be > 0 for method " + method_to_string(m));
    if (m == Method::fedmd && !public_pool_labeled)
      fail("public_pool_labeled must be true for method fedmd");
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string current;
  std::istringstream in(s);
  while (std::getline(in, current, sep)) parts.push_back(trim(current));
  return parts;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument(key + ": cannot parse \"" + value + "\" as a number");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return static_cast<int>(x);
  } catch (const std::exception&) {
    throw std::invalid_argument(key + ": cannot parse \"" + value + "\" as an integer");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument(key + ": cannot parse \"" + value + "\" as an unsigned integer");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument(key + ": expected true/false, got \"" + value + "\"");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  for (const auto& part : split(value, ',')) {
    if (!part.empty()) out.push_back(parse_int(key, part));
  }
  if (out.empty()) throw std::invalid_argument(key + ": empty list");
  return out;
}

std::vector<std::pair<int, double>> parse_milestones(const std::string& key,
                                                     const std::string& value) {
  std::vector<std::pair<int, double>> out;
  if (trim(value) == "none") return out;
  for (const auto& part : split(value, ',')) {
    if (part.empty()) continue;
    const auto colon = part.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument(key + ": expected epoch:lr pairs, got \"" + part + "\"");
    out.emplace_back(parse_int(key, trim(part.substr(0, colon))),
                     parse_double(key, trim(part.substr(colon + 1))));
  }
  return out;
}

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (seen.count(key))
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": duplicate key \"" + key + "\"");
    seen[key] = line_no;

    if (key == "methods") {
      cfg.methods.clear();
      for (const auto& name : split(value, ',')) {
        if (!name.empty()) cfg.methods.push_back(method_from_string(name));
      }
    } else if (key == "n_clients") {
      cfg.n_clients = parse_int(key, value);
    } else if (key == "strong_fraction") {
      cfg.strong_fraction = parse_double(key, value);
    } else if (key == "activation_fraction") {
      cfg.activation_fraction = parse_double(key, value);
    } else if (key == "dirichlet_alpha") {
      cfg.dirichlet_alpha = parse_double(key, value);
    } else if (key == "unlabeled_fraction") {
      cfg.unlabeled_fraction = parse_double(key, value);
    } else if (key == "input_dim") {
      cfg.input_dim = parse_int(key, value);
    } else if (key == "hidden_widths") {
      cfg.hidden_widths = parse_int_list(key, value);
    } else if (key == "num_classes") {
      cfg.num_classes = parse_int(key, value);
    } else if (key == "aux_scale") {
      cfg.aux_scale = parse_double(key, value);
    } else if (key == "tau") {
      cfg.tau = parse_int(key, value);
    } else if (key == "batch_size") {
      cfg.batch_size = parse_int(key, value);
    } else if (key == "base_lr") {
      cfg.base_lr = parse_double(key, value);
    } else if (key == "lr_milestones") {
      cfg.lr_milestones = parse_milestones(key, value);
    } else if (key == "weight_decay") {
      cfg.weight_decay = parse_double(key, value);
    } else if (key == "temperature") {
      cfg.temperature = parse_double(key, value);
    } else if (key == "lambda_max") {
      cfg.lambda_max = parse_double(key, value);
    } else if (key == "ramp_threshold") {
      cfg.ramp_threshold = parse_int(key, value);
    } else if (key == "apply_t_squared") {
      cfg.apply_t_squared = parse_bool(key, value);
    } else if (key == "rounds") {
      cfg.rounds = parse_int(key, value);
    } else if (key == "eval_every") {
      cfg.eval_every = parse_int(key, value);
    } else if (key == "seed_data") {
      cfg.seed_data = parse_u64(key, value);
    } else if (key == "seed_partition") {
      cfg.seed_partition = parse_u64(key, value);
    } else if (key == "seed_init") {
      cfg.seed_init = parse_u64(key, value);
    } else if (key == "seed_train") {
      cfg.seed_train = parse_u64(key, value);
    } else if (key == "num_seeds") {
      cfg.num_seeds = parse_int(key, value);
    } else if (key == "samples_per_class") {
      cfg.samples_per_class = parse_int(key, value);
    } else if (key == "test_per_class") {
      cfg.test_per_class = parse_int(key, value);
    } else if (key == "separation") {
      cfg.separation = parse_double(key, value);
    } else if (key == "public_pool_size") {
      cfg.public_pool_size = parse_int(key, value);
    } else if (key == "public_pool_labeled") {
      cfg.public_pool_labeled = parse_bool(key, value);
    } else if (key == "all_strong") {
      cfg.all_strong = parse_bool(key, value);
    } else if (key == "kd_phase_includes_ce") {
      cfg.kd_phase_includes_ce = parse_bool(key, value);
    } else if (key == "aux_rounds_enabled") {
      cfg.aux_rounds_enabled = parse_bool(key, value);
    } else if (key == "parallel_clients") {
      cfg.parallel_clients = parse_bool(key, value);
    } else if (key == "feddf_large") {
      cfg.feddf_large = parse_bool(key, value);
    } else if (key == "dsfl_sharpen_temperature") {
      cfg.dsfl_sharpen_temperature = parse_double(key, value);
    } else if (key == "bound_p") {
      cfg.bound_p = parse_double(key, value);
    } else if (key == "bound_discrepancy") {
      cfg.bound_discrepancy = parse_double(key, value);
    } else {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": unknown key \"" + key + "\"");
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string save_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "methods = ";
  for (std::size_t i = 0; i < cfg.methods.size(); ++i) {
    if (i) out << ',';
    out << method_to_string(cfg.methods[i]);
  }
  out << '\n';
  out << "n_clients = " << cfg.n_clients << '\n';
  out << "strong_fraction = " << fmt_double(cfg.strong_fraction) << '\n';
  out << "activation_fraction = " << fmt_double(cfg.activation_fraction) << '\n';
  out << "dirichlet_alpha = " << fmt_double(cfg.dirichlet_alpha) << '\n';
  out << "unlabeled_fraction = " << fmt_double(cfg.unlabeled_fraction) << '\n';
  out << "input_dim = " << cfg.input_dim << '\n';
  out << "hidden_widths = ";
  for (std::size_t i = 0; i < cfg.hidden_widths.size(); ++i) {
    if (i) out << ',';
    out << cfg.hidden_widths[i];
  }
  out << '\n';
  out << "num_classes = " << cfg.num_classes << '\n';
  out << "aux_scale = " << fmt_double(cfg.aux_scale) << '\n';
  out << "tau = " << cfg.tau << '\n';
  out << "batch_size = " << cfg.batch_size << '\n';
  out << "base_lr = " << fmt_double(cfg.base_lr) << '\n';
  out << "lr_milestones = ";
  if (cfg.lr_milestones.empty()) {
    out << "none";
  } else {
    for (std::size_t i = 0; i < cfg.lr_milestones.size(); ++i) {
      if (i) out << ',';
      out << cfg.lr_milestones[i].first << ':' << fmt_double(cfg.lr_milestones[i].second);
    }
  }
  out << '\n';
  out << "weight_decay = " << fmt_double(cfg.weight_decay) << '\n';
  out << "temperature = " << fmt_double(cfg.temperature) << '\n';
  out << "lambda_max = " << fmt_double(cfg.lambda_max) << '\n';
  out << "ramp_threshold = " << cfg.ramp_threshold << '\n';
  out << "apply_t_squared = " << (cfg.apply_t_squared ? "true" : "false") << '\n';
  out << "rounds = " << cfg.rounds << '\n';
  out << "eval_every = " << cfg.eval_every << '\n';
  out << "seed_data = " << cfg.seed_data << '\n';
  out << "seed_partition = " << cfg.seed_partition << '\n';
  out << "seed_init = " << cfg.seed_init << '\n';
  out << "seed_train = " << cfg.seed_train << '\n';
  out << "num_seeds = " << cfg.num_seeds << '\n';
  out << "samples_per_class = " << cfg.samples_per_class << '\n';
  out << "test_per_class = " << cfg.test_per_class << '\n';
  out << "separation = " << fmt_double(cfg.separation) << '\n';
  out << "public_pool_size = " << cfg.public_pool_size << '\n';
  out << "public_pool_labeled = " << (cfg.public_pool_labeled ? "true" : "false") << '\n';
  out << "all_strong = " << (cfg.all_strong ? "true" : "false") << '\n';
  out << "kd_phase_includes_ce = " << (cfg.kd_phase_includes_ce ? "true" : "false") << '\n';
  out << "aux_rounds_enabled = " << (cfg.aux_rounds_enabled ? "true" : "false") << '\n';
  out << "parallel_clients = " << (cfg.parallel_clients ? "true" : "false") << '\n';
  out << "feddf_large = " << (cfg.feddf_large ? "true" : "false") << '\n';
  out << "dsfl_sharpen_temperature = " << fmt_double(cfg.dsfl_sharpen_temperature) << '\n';
  out << "bound_p = " << fmt_double(cfg.bound_p) << '\n';
  if (cfg.bound_discrepancy) {
    out << "bound_discrepancy = " << fmt_double(*cfg.bound_discrepancy) << '\n';
  }
  return out.str();
}

}  // namespace fedkd
