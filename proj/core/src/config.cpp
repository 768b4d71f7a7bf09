#include "vmudiff/config.hpp"

#include <cctype>
#include <climits>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "vmudiff/error.hpp"

namespace vmudiff {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

long parse_long(const std::string& v, const std::string& where) {
  std::size_t pos = 0;
  long out = 0;
  try {
    out = std::stol(v, &pos);
  } catch (const std::exception&) {
    raise(ErrorKind::Usage, where + ": expected integer, got '" + v + "'");
  }
  require(pos == v.size(), ErrorKind::Usage,
          where + ": trailing characters in integer '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& v, const std::string& where) {
  std::size_t pos = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    raise(ErrorKind::Usage, where + ": expected unsigned integer, got '" + v + "'");
  }
  require(pos == v.size(), ErrorKind::Usage,
          where + ": trailing characters in integer '" + v + "'");
  return out;
}

double parse_double(const std::string& v, const std::string& where) {
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    raise(ErrorKind::Usage, where + ": expected number, got '" + v + "'");
  }
  require(pos == v.size(), ErrorKind::Usage,
          where + ": trailing characters in number '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  raise(ErrorKind::Usage, where + ": expected boolean, got '" + v + "'");
}

int parse_int(const std::string& v, const std::string& where) {
  long l = parse_long(v, where);
  require(l >= INT_MIN && l <= INT_MAX, ErrorKind::Usage, where + ": integer out of range");
  return static_cast<int>(l);
}

}  // namespace

void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value,
                     const std::string& where) {
  const std::string ctx = where + " key '" + key + "'";
  using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
  static const std::map<std::string, Setter> table = {
      {"seed", [](RunConfig& c, const std::string& v, const std::string& x) { c.seed = parse_u64(v, x); }},
      {"data_dir", [](RunConfig& c, const std::string& v, const std::string&) { c.data_dir = v; }},
      {"out_dir", [](RunConfig& c, const std::string& v, const std::string&) { c.out_dir = v; }},
      {"checkpoint", [](RunConfig& c, const std::string& v, const std::string&) { c.checkpoint = v; }},
      {"count", [](RunConfig& c, const std::string& v, const std::string& x) { c.count = parse_long(v, x); }},
      {"train_frac", [](RunConfig& c, const std::string& v, const std::string& x) { c.train_frac = parse_double(v, x); }},
      {"val_frac", [](RunConfig& c, const std::string& v, const std::string& x) { c.val_frac = parse_double(v, x); }},
      {"n_in", [](RunConfig& c, const std::string& v, const std::string& x) { c.n_in = parse_int(v, x); }},
      {"m_out", [](RunConfig& c, const std::string& v, const std::string& x) { c.m_out = parse_int(v, x); }},
      {"h", [](RunConfig& c, const std::string& v, const std::string& x) { c.h = parse_int(v, x); }},
      {"w", [](RunConfig& c, const std::string& v, const std::string& x) { c.w = parse_int(v, x); }},
      {"c_radar", [](RunConfig& c, const std::string& v, const std::string& x) { c.c_radar = parse_int(v, x); }},
      {"c_sat", [](RunConfig& c, const std::string& v, const std::string& x) { c.c_sat = parse_int(v, x); }},
      {"c0", [](RunConfig& c, const std::string& v, const std::string& x) { c.c0 = parse_int(v, x); }},
      {"levels", [](RunConfig& c, const std::string& v, const std::string& x) { c.levels = parse_int(v, x); }},
      {"blocks_per_level", [](RunConfig& c, const std::string& v, const std::string& x) { c.blocks_per_level = parse_int(v, x); }},
      {"n_state", [](RunConfig& c, const std::string& v, const std::string& x) { c.n_state = parse_int(v, x); }},
      {"exact_zoh", [](RunConfig& c, const std::string& v, const std::string& x) { c.exact_zoh = parse_bool(v, x); }},
      {"stdiff_width", [](RunConfig& c, const std::string& v, const std::string& x) { c.stdiff_width = parse_int(v, x); }},
      {"stdiff_blocks", [](RunConfig& c, const std::string& v, const std::string& x) { c.stdiff_blocks = parse_int(v, x); }},
      {"beta1_init", [](RunConfig& c, const std::string& v, const std::string&) { c.beta1_init = v; }},
      {"t_diff", [](RunConfig& c, const std::string& v, const std::string& x) { c.t_diff = parse_int(v, x); }},
      {"ddim_steps", [](RunConfig& c, const std::string& v, const std::string& x) { c.ddim_steps = parse_int(v, x); }},
      {"alpha", [](RunConfig& c, const std::string& v, const std::string& x) { c.alpha = parse_double(v, x); }},
      {"lr", [](RunConfig& c, const std::string& v, const std::string& x) { c.lr = parse_double(v, x); }},
      {"iters", [](RunConfig& c, const std::string& v, const std::string& x) { c.iters = parse_long(v, x); }},
      {"batch", [](RunConfig& c, const std::string& v, const std::string& x) { c.batch = parse_int(v, x); }},
      {"warmup_frac", [](RunConfig& c, const std::string& v, const std::string& x) { c.warmup_frac = parse_double(v, x); }},
      {"ckpt_every", [](RunConfig& c, const std::string& v, const std::string& x) { c.ckpt_every = parse_long(v, x); }},
      {"episode", [](RunConfig& c, const std::string& v, const std::string& x) { c.episode = parse_long(v, x); }},
      {"pgm", [](RunConfig& c, const std::string& v, const std::string& x) { c.pgm = parse_bool(v, x); }},
      {"split", [](RunConfig& c, const std::string& v, const std::string&) { c.split = v; }},
      {"ablate_msfusion", [](RunConfig& c, const std::string& v, const std::string& x) { c.ablate_msfusion = parse_bool(v, x); }},
      {"ablate_stdiff", [](RunConfig& c, const std::string& v, const std::string& x) { c.ablate_stdiff = parse_bool(v, x); }},
  };
  auto it = table.find(key);
  require(it != table.end(), ErrorKind::Usage, where + ": unknown key '" + key + "'");
  it->second(cfg, value, ctx);
}

RunConfig parse_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    std::size_t eq = s.find('=');
    require(eq != std::string::npos, ErrorKind::Usage,
            path + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    require(!key.empty(), ErrorKind::Usage,
            path + ":" + std::to_string(lineno) + ": empty key");
    apply_config_kv(base, key, value, path + ":" + std::to_string(lineno));
  }
  require(in.eof(), ErrorKind::Io, "read error in config file " + path);
  return base;
}

void RunConfig::validate() const {
  require(n_in >= 1 && m_out >= 1, ErrorKind::Usage, "n_in and m_out must be positive");
  require(h >= 1 && w >= 1, ErrorKind::Usage, "h and w must be positive");
  require(c_radar >= 1 && c_sat >= 1, ErrorKind::Usage, "stream widths must be positive");
  require(c0 >= 1 && levels >= 1 && blocks_per_level >= 1, ErrorKind::Usage,
          "c0, levels and blocks_per_level must be positive");
  require(n_state >= 1, ErrorKind::Usage, "n_state must be positive");
  require(stdiff_width >= 1 && stdiff_blocks >= 1, ErrorKind::Usage,
          "stdiff widths must be positive");
  require(beta1_init == "zero" || beta1_init == "uniform", ErrorKind::Usage,
          "beta1_init must be 'zero' or 'uniform'");
  require(t_diff >= 1, ErrorKind::Usage, "t_diff must be positive");
  require(ddim_steps >= 1 && ddim_steps <= t_diff, ErrorKind::Usage,
          "ddim_steps must lie in [1, t_diff]");
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::Usage, "alpha must lie in [0, 1]");
  require(lr > 0.0, ErrorKind::Usage, "lr must be positive");
  require(iters >= 1, ErrorKind::Usage, "iters must be positive");
  require(batch >= 1, ErrorKind::Usage, "batch must be positive");
  require(warmup_frac >= 0.0 && warmup_frac <= 1.0, ErrorKind::Usage,
          "warmup_frac must lie in [0, 1]");
  require(ckpt_every >= 0, ErrorKind::Usage, "ckpt_every must be non-negative");
  require(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac < 1.0,
          ErrorKind::Usage, "split fractions must leave room for a test split");
  require(split == "train" || split == "val" || split == "test", ErrorKind::Usage,
          "split must be train, val or test");
  vmu_config().validate();
  if (!ablate_stdiff) stdiff_config().validate();
}

VmuConfig RunConfig::vmu_config() const {
  VmuConfig vc;
  vc.n_in = n_in;
  vc.m_out = m_out;
  vc.h = h;
  vc.w = w;
  vc.sat_channels = 4;
  vc.c_radar = c_radar;
  vc.c_sat = c_sat;
  vc.c0 = c0;
  vc.levels = levels;
  vc.blocks_per_level = blocks_per_level;
  vc.scan.n_state = n_state;
  vc.scan.exact_zoh = exact_zoh;
  vc.ablate_msfusion = ablate_msfusion;
  return vc;
}

StdiffConfig RunConfig::stdiff_config() const {
  StdiffConfig sc;
  sc.m = m_out;
  sc.h = h;
  sc.w = w;
  sc.width = stdiff_width;
  sc.blocks = stdiff_blocks;
  sc.f_channels = vmu_config().bottleneck_channels();
  sc.f_h = vmu_config().bottleneck_h();
  sc.f_w = vmu_config().bottleneck_w();
  sc.t_diff = t_diff;
  sc.scan.n_state = n_state;
  sc.scan.exact_zoh = exact_zoh;
  sc.beta1_init = beta1_init == "uniform" ? InitKind::Uniform : InitKind::Zero;
  return sc;
}

std::string RunConfig::checkpoint_path() const {
  if (!checkpoint.empty()) return checkpoint;
  return out_dir + "/model.vmck";
}

}  // namespace vmudiff
