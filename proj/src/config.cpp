#include "lan/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace lan {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw InvalidConfig(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw InvalidConfig(key + ": expected an unsigned integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(out)) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw InvalidConfig(key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InvalidConfig(key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in,
                                                                  const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw InvalidConfig(origin + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw InvalidConfig(origin + ":" + std::to_string(lineno) + ": empty key");
    if (!seen.insert(key).second)
      throw InvalidConfig(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_key_value_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open config " + path.string());
  return parse_key_values(in, path.string());
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {
      "ablate", "ann_ef_construction", "ann_ef_search", "ann_m", "attention_norm",
      "batch_size", "data", "encoder", "epsilon", "gnn", "gnn_layers", "hidden_size", "k",
      "loss_mode", "lr_grid", "max_epochs", "max_len", "mode", "mu1", "mu2", "mu3",
      "normalize_laplacian", "output", "patience", "pool_mode", "pooling_heads", "r",
      "refresh_cadence", "seed", "similarity_heads", "weight_decay"};
  return k;
}

void RunConfig::set(const std::string& key, const std::string& v) {
  ModelConfig& m = model;
  TrainConfig& t = train;
  if (key == "ablate") m.ablation = Ablation::parse(v);
  else if (key == "ann_ef_construction") m.ann.ef_construction = to_size(key, v);
  else if (key == "ann_ef_search") m.ann.ef_search = to_size(key, v);
  else if (key == "ann_m") m.ann.m = to_size(key, v);
  else if (key == "attention_norm") m.attention_norm = parse_attention_norm(v);
  else if (key == "batch_size") t.batch_size = to_size(key, v);
  else if (key == "data") data = v;
  else if (key == "encoder") m.encoder = parse_encoder_kind(v);
  else if (key == "epsilon") m.epsilon = to_double(key, v);
  else if (key == "gnn") m.gnn = parse_gnn_kind(v);
  else if (key == "gnn_layers") m.gnn_layers = to_size(key, v);
  else if (key == "hidden_size") m.hidden_size = to_size(key, v);
  else if (key == "k") m.k = to_size(key, v);
  else if (key == "loss_mode") t.loss_mode = parse_loss_mode(v);
  else if (key == "lr_grid") {
    t.lr_grid.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) t.lr_grid.push_back(to_double(key, trim(item)));
  }
  else if (key == "max_epochs") t.max_epochs = to_size(key, v);
  else if (key == "max_len") m.max_len = to_size(key, v);
  else if (key == "mode") m.mode = parse_detect_mode(v);
  else if (key == "mu1") m.reg.dirichlet = to_double(key, v);
  else if (key == "mu2") m.reg.log_barrier = to_double(key, v);
  else if (key == "mu3") m.reg.frobenius = to_double(key, v);
  else if (key == "normalize_laplacian") m.normalize_laplacian = to_bool(key, v);
  else if (key == "output") output = v;
  else if (key == "patience") t.patience = to_size(key, v);
  else if (key == "pool_mode") m.pool_mode = parse_pool_mode(v);
  else if (key == "pooling_heads") m.pooling_heads = to_size(key, v);
  else if (key == "r") {
    if (v == "auto") t.r.reset();
    else t.r = to_double(key, v);
  }
  else if (key == "refresh_cadence") t.refresh_cadence = to_size(key, v);
  else if (key == "seed") t.seed = to_u64(key, v);
  else if (key == "similarity_heads") m.similarity_heads = to_size(key, v);
  else if (key == "weight_decay") t.weight_decay = to_double(key, v);
  else throw InvalidConfig("unknown config key '" + key + "'");
}

void RunConfig::apply(const std::vector<std::pair<std::string, std::string>>& pairs) {
  for (const auto& [k, v] : pairs) set(k, v);
}

void RunConfig::validate() const {
  if (data.empty()) throw InvalidConfig("missing required config key 'data'");
  if (output.empty()) throw InvalidConfig("missing required config key 'output'");
  train.validate();
  // The vocabulary comes from the type table; check the rest with a stand-in.
  ModelConfig probe = model;
  if (probe.vocab_size == 0) probe.vocab_size = 2;
  probe.validate();
}

std::string RunConfig::to_text() const {
  const ModelConfig& m = model;
  const TrainConfig& t = train;
  std::string grid;
  for (std::size_t i = 0; i < t.lr_grid.size(); ++i)
    grid += (i ? "," : "") + fmt(t.lr_grid[i]);
  const std::map<std::string, std::string> kv = {
      {"ablate", m.ablation.letters()},
      {"ann_ef_construction", std::to_string(m.ann.ef_construction)},
      {"ann_ef_search", std::to_string(m.ann.ef_search)},
      {"ann_m", std::to_string(m.ann.m)},
      {"attention_norm", std::string(to_string(m.attention_norm))},
      {"batch_size", std::to_string(t.batch_size)},
      {"data", data},
      {"encoder", std::string(to_string(m.encoder))},
      {"epsilon", fmt(m.epsilon)},
      {"gnn", std::string(to_string(m.gnn))},
      {"gnn_layers", std::to_string(m.gnn_layers)},
      {"hidden_size", std::to_string(m.hidden_size)},
      {"k", std::to_string(m.k)},
      {"loss_mode", std::string(to_string(t.loss_mode))},
      {"lr_grid", grid},
      {"max_epochs", std::to_string(t.max_epochs)},
      {"max_len", std::to_string(m.max_len)},
      {"mode", std::string(to_string(m.mode))},
      {"mu1", fmt(m.reg.dirichlet)},
      {"mu2", fmt(m.reg.log_barrier)},
      {"mu3", fmt(m.reg.frobenius)},
      {"normalize_laplacian", m.normalize_laplacian ? "true" : "false"},
      {"output", output},
      {"patience", std::to_string(t.patience)},
      {"pool_mode", std::string(to_string(m.pool_mode))},
      {"pooling_heads", std::to_string(m.pooling_heads)},
      {"r", t.r ? fmt(*t.r) : "auto"},
      {"refresh_cadence", std::to_string(t.refresh_cadence)},
      {"seed", std::to_string(t.seed)},
      {"similarity_heads", std::to_string(m.similarity_heads)},
      {"weight_decay", fmt(t.weight_decay)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

RunConfig RunConfig::load(const std::filesystem::path* file,
                          const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  if (file) cfg.apply(read_key_value_file(*file));
  cfg.apply(overrides);
  cfg.validate();
  return cfg;
}

}  // namespace lan
