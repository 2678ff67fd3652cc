#include "pidon/cli/config.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "pidon/errors.hpp"

namespace pidon::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::string& Config::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing configuration key '" + key + "'");
  return it->second;
}

double Config::num(const std::string& key) const {
  const std::string& v = str(key);
  std::size_t pos = 0;
  double d = 0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || !std::isfinite(d)) throw ConfigError("key '" + key + "': '" + v + "' is not a number");
  return d;
}

std::size_t Config::count(const std::string& key) const {
  const double d = num(key);
  if (d < 0 || d != std::floor(d) || d > 1e15) throw ConfigError("key '" + key + "' must be a non-negative integer");
  return static_cast<std::size_t>(d);
}

std::uint64_t Config::u64(const std::string& key) const {
  const std::string& v = str(key);
  std::size_t pos = 0;
  std::uint64_t u = 0;
  try {
    u = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-') throw ConfigError("key '" + key + "' must be an unsigned integer");
  return u;
}

bool Config::flag(const std::string& key) const {
  const std::string& v = str(key);
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ConfigError("key '" + key + "' must be true or false");
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second = value;
}

void Config::merge(const Config& overrides) {
  for (const auto& [k, v] : overrides.values()) set(k, v);
}

std::string Config::to_ini(const std::vector<std::string>& comments) const {
  std::ostringstream out;
  for (const auto& c : comments) out << "# " << c << '\n';
  std::string section;
  for (const auto& [k, v] : values_) {
    const auto dot = k.find('.');
    const std::string s = k.substr(0, dot);
    if (s != section) {
      out << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    out << k.substr(dot + 1) << " = " << v << '\n';
  }
  return out.str();
}

Config parse_ini(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto cut = line.find_first_of("#;");
    line = trim(cut == std::string::npos ? line : line.substr(0, cut));
    if (line.empty()) continue;
    const auto where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    if (section.empty()) throw ConfigError(where + ": key outside of any [section]");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    kv[section + "." + key] = trim(line.substr(eq + 1));
  }
  return Config(std::move(kv));
}

Config load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_ini(ss.str(), path.string());
}

// -------------------------------------------------------------------------------

std::vector<std::string> preset_names() { return {"paper-text", "paper-table", "desk"}; }

namespace {

using Map = std::map<std::string, std::string>;

Map common() {
  return {
      {"run.seed", "0"},
      {"run.threads", "1"},
      {"data.n_train", "1000"},
      {"data.n_test", "100"},
      {"data.m", "100"},
      {"data.length_scale", "0.2"},
      {"data.axis_lo", "0.05"},
      {"data.axis_hi", "0.3"},
      {"model.kind", "modified"},
      {"model.width", "100"},
      {"model.depth", "5"},
      {"model.latent", "100"},
      {"train.iterations", "100000"},
      {"train.batch_samples", "100"},
      {"train.boundary_points", "100"},
      {"train.interior_points", "100"},
      {"train.lr", "1e-3"},
      {"train.decay_rate", "0.9"},
      {"train.decay_steps", "2000"},
      {"train.log_every", "100"},
      {"train.checkpoint_every", "1000"},
      {"train.shard_samples", "10"},
      {"train.adaptive", "false"},
      {"train.initial_weights", "1"},
      {"train.weight_interval", "100"},
      {"train.weight_smoothing", "0.9"},
      {"train.probe_samples", "32"},
      {"train.probe_points", "32"},
      {"physics.kappa", "1"},
      {"physics.nu", "0.01"},
      {"physics.final_time", "2"},
      {"control.iterations", "1000"},
      {"control.lr", "1e-3"},
      {"control.decay_rate", "0.9"},
      {"control.decay_steps", "2000"},
      {"control.width", "100"},
      {"control.depth", "5"},
      {"control.seed", "1"},
      {"control.quadrature_nodes", "256"},
      {"control.time_nodes", "64"},
      {"control.grid_nodes", "200"},
      {"control.alpha_reg", "0"},
      {"control.snapshot_every", "0"},
      {"control.target", "closed-form"},
      {"control.a0", "0.12"},
      {"control.sweep_points", "50"},
      {"oracle.intervals", "99"},
      {"oracle.heat_space", "32"},
      {"oracle.heat_steps", "64"},
      {"oracle.test_stride", "4"},
      {"oracle.div_points", "500"},
  };
}

void apply(Map& m, const Map& o) {
  for (const auto& [k, v] : o) m[k] = v;
}

Map poisson(const std::string& name) {
  Map m = common();
  apply(m, {{"run.benchmark", "poisson"},
            {"train.boundary_points", "2"},
            {"control.iterations", "200000"}});
  if (name == "paper-text") {
    apply(m, {{"data.n_train", "50000"}, {"data.n_test", "1000"}});
  } else if (name == "paper-table") {
    apply(m, {{"data.n_train", "10000"}, {"data.n_test", "1000"}});
  } else {
    apply(m, {{"data.n_train", "1000"},
              {"data.n_test", "100"},
              {"model.width", "50"},
              {"model.latent", "50"},
              {"train.iterations", "20000"},
              {"train.batch_samples", "20"},
              {"control.iterations", "20000"}});
  }
  return m;
}

Map heat(const std::string& name) {
  Map m = common();
  apply(m, {{"run.benchmark", "heat"},
            {"model.depth", "7"},
            {"train.iterations", "400000"},
            {"control.target", "manufactured"},
            {"control.time_nodes", "64"},
            {"control.quadrature_nodes", "64"},
            {"oracle.heat_space", "63"},
            {"oracle.heat_steps", "126"},
            {"oracle.test_stride", "7"}});
  if (name == "paper-text") {
    apply(m, {{"data.length_scale", "0.2"}, {"train.boundary_points", "100"}, {"train.interior_points", "100"}});
  } else if (name == "paper-table") {
    apply(m, {{"data.length_scale", "0.5"}, {"train.boundary_points", "100"}, {"train.interior_points", "2000"}});
  } else {
    apply(m, {{"model.width", "50"},
              {"model.depth", "5"},
              {"model.latent", "50"},
              {"train.iterations", "20000"},
              {"train.batch_samples", "20"},
              {"train.boundary_points", "50"},
              {"train.interior_points", "100"},
              {"control.quadrature_nodes", "17"},
              {"control.time_nodes", "33"},
              {"oracle.heat_space", "32"},
              {"oracle.heat_steps", "64"},
              {"oracle.test_stride", "4"}});
  }
  return m;
}

Map stokes(const std::string& name) {
  Map m = common();
  apply(m, {{"run.benchmark", "stokes"},
            {"model.depth", "7"},
            {"train.iterations", "300000"},
            {"train.interior_points", "2000"},
            {"train.adaptive", "true"},
            {"control.iterations", "1000"},
            {"control.lr", "1e-3"}});
  if (name == "paper-text") {
    apply(m, {{"train.interior_points", "2500"}});
  } else if (name == "paper-table") {
    apply(m, {{"train.interior_points", "2000"}});
  } else {
    apply(m, {{"model.width", "50"},
              {"model.depth", "5"},
              {"model.latent", "60"},
              {"train.iterations", "10000"},
              {"train.batch_samples", "10"},
              {"train.boundary_points", "50"},
              {"train.interior_points", "100"},
              {"train.probe_samples", "8"},
              {"train.probe_points", "8"},
              {"control.grid_nodes", "100"}});
  }
  return m;
}

}  // namespace

Config preset(fields::Benchmark b, const std::string& name) {
  bool known = false;
  for (const auto& n : preset_names()) known = known || n == name;
  if (!known) throw ConfigError("unknown preset '" + name + "' (paper-text, paper-table, desk)");
  Map m = b == fields::Benchmark::poisson ? poisson(name) : b == fields::Benchmark::heat ? heat(name) : stokes(name);
  m["run.preset"] = name;
  return Config(std::move(m));
}

// -------------------------------------------------------------------------------

std::string git_blob_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw Error("cannot allocate a hash context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("sha1 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string git_blob_hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return git_blob_hash(ss.str());
}

}  // namespace pidon::cli
