#include "gfma/sysmodel.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "gfma/errors.hpp"

namespace gfma {

std::string to_string(CodeKind kind) {
  switch (kind) {
    case CodeKind::UnitModulusRandomPhase: return "unit_modulus_random_phase";
    case CodeKind::ComplexGaussian: return "complex_gaussian";
    case CodeKind::FourierRows: return "fourier_rows";
  }
  return "?";
}

CodeKind code_kind_from_string(const std::string& s) {
  if (s == "unit_modulus_random_phase") return CodeKind::UnitModulusRandomPhase;
  if (s == "complex_gaussian") return CodeKind::ComplexGaussian;
  if (s == "fourier_rows") return CodeKind::FourierRows;
  throw ConfigError("unknown code_kind '" + s + "'");
}

void SystemConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (bs_antennas < 1) fail("N must be >= 1");
  if (subcarriers < 1) fail("M must be >= 1");
  if (total_ues < 1) fail("K must be >= 1");
  if (active_ues < 0 || active_ues > total_ues) fail("Ka must be in [0, K]");
  if (slots < 1) fail("T must be >= 1");
  if (mod_order < 2 || (mod_order & (mod_order - 1)) != 0) fail("L must be a power of two >= 2");
  if (beacon_antenna < 1 || beacon_antenna > bs_antennas) fail("eta must be in [1, N]");
  if (!(null_threshold > 0.0)) fail("h0 must be > 0");
  if (bandwidth_hz <= 0.0) fail("Bs must be > 0");
  if (paths_min < 1 || paths_max < paths_min) fail("need 1 <= paths_min <= paths_max");
  if (!(dist_min_km > 0.0) || dist_max_km < dist_min_km) fail("need 0 < dist_min_km <= dist_max_km");
  if (rho_damp < 0.0 || rho_damp >= 1.0) fail("rho_damp must be in [0, 1)");
  if (coarse_iters < 1) fail("N_coarse must be >= 1");
  if (outer_iters < 0) fail("N_iter must be >= 0");
  if (gmmv_iters < 1) fail("N_gmmv must be >= 1");
}

SystemConfig SystemConfig::desk_scale() {
  SystemConfig c;
  c.bs_antennas = 32;
  c.subcarriers = 40;
  c.total_ues = 100;
  c.active_ues = 10;
  c.slots = 16;
  // the small profile is an easier recovery problem than the full-scale one
  // (M/K = 0.4 vs 0.12), so it operates at a lower transmit power to stay in
  // a regime where the refinement stages have visible work to do
  c.tx_power_dbm = 0.0;
  return c;
}

void Constellation::append_bits(int l, std::vector<uint8_t>& out) const {
  const uint32_t label = bit_map[static_cast<size_t>(l)];
  for (int b = bits_per_symbol - 1; b >= 0; --b)
    out.push_back(static_cast<uint8_t>((label >> b) & 1u));
}

Constellation make_constellation(int order) {
  Constellation c;
  switch (order) {
    case 2:
      c.points = {cxd(1.0, 0.0), cxd(-1.0, 0.0)};
      break;
    case 4: {
      const double s = std::sqrt(0.5);
      c.points = {cxd(s, s), cxd(-s, s), cxd(-s, -s), cxd(s, -s)};
      break;
    }
    case 8:
      for (int l = 0; l < 8; ++l) {
        const double ang = 2.0 * kPi * l / 8.0;
        c.points.emplace_back(std::cos(ang), std::sin(ang));
      }
      break;
    default:
      throw UnsupportedOrder(order);
  }
  c.bits_per_symbol = static_cast<int>(std::lround(std::log2(order)));
  c.bit_map.resize(c.points.size());
  // Adjacent points differ in one bit (the point orders above walk the
  // constellation ring), so the reflected Gray code labels them directly.
  for (size_t l = 0; l < c.points.size(); ++l)
    c.bit_map[l] = static_cast<uint32_t>(l ^ (l >> 1));
  return c;
}

SpreadingCodes generate_spreading_codes(Rng& rng, CodeKind kind, int subcarriers, int total_ues) {
  if (subcarriers < 1 || total_ues < 1)
    throw ConfigError("spreading codes need M >= 1 and K >= 1");
  SpreadingCodes codes;
  codes.kind = kind;
  codes.S.resize(subcarriers, total_ues);
  switch (kind) {
    case CodeKind::UnitModulusRandomPhase:
      for (int k = 0; k < total_ues; ++k)
        for (int m = 0; m < subcarriers; ++m) {
          const double ph = rng.uniform(0.0, 2.0 * kPi);
          codes.S(m, k) = cxd(std::cos(ph), std::sin(ph));
        }
      break;
    case CodeKind::ComplexGaussian:
      for (int k = 0; k < total_ues; ++k)
        for (int m = 0; m < subcarriers; ++m) codes.S(m, k) = rng.cgaussian();
      break;
    case CodeKind::FourierRows:
      // Each UE gets one row of the M x M DFT matrix (entries stay unit
      // modulus). Rows are drawn with replacement; a per-UE phase rotation
      // keeps reused rows distinct.
      for (int k = 0; k < total_ues; ++k) {
        const auto row = static_cast<double>(rng.uniform_int(static_cast<uint64_t>(subcarriers)));
        const double ph = rng.uniform(0.0, 2.0 * kPi);
        for (int m = 0; m < subcarriers; ++m) {
          const double ang = -2.0 * kPi * row * m / subcarriers + ph;
          codes.S(m, k) = cxd(std::cos(ang), std::sin(ang));
        }
      }
      break;
  }
  return codes;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::map<std::string, std::string> parse_key_value_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
    if (!kv.emplace(key, val).second)
      throw ConfigError("duplicate key '" + key + "'");
  }
  return kv;
}

std::map<std::string, std::string> read_key_value_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_key_value_text(ss.str());
}

namespace {

template <typename T, typename Parse>
void take(std::map<std::string, std::string>& kv, const std::string& key, T& field, Parse parse) {
  auto it = kv.find(key);
  if (it == kv.end()) return;
  try {
    field = parse(it->second);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': cannot parse value '" + it->second + "'");
  }
  kv.erase(it);
}

int to_int(const std::string& s) {
  size_t pos = 0;
  const int v = std::stoi(s, &pos);
  if (pos != s.size()) throw ConfigError("trailing characters");
  return v;
}

double to_double(const std::string& s) {
  size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw ConfigError("trailing characters");
  return v;
}

uint64_t to_u64(const std::string& s) {
  size_t pos = 0;
  const uint64_t v = std::stoull(s, &pos);
  if (pos != s.size()) throw ConfigError("trailing characters");
  return v;
}

}  // namespace

SystemConfig apply_system_keys(std::map<std::string, std::string>& kv) {
  SystemConfig c;
  take(kv, "N", c.bs_antennas, to_int);
  take(kv, "M", c.subcarriers, to_int);
  take(kv, "K", c.total_ues, to_int);
  take(kv, "Ka", c.active_ues, to_int);
  take(kv, "T", c.slots, to_int);
  take(kv, "L", c.mod_order, to_int);
  take(kv, "eta", c.beacon_antenna, to_int);
  take(kv, "h0", c.null_threshold, to_double);
  take(kv, "code_kind", c.code_kind, code_kind_from_string);
  take(kv, "Bs", c.bandwidth_hz, to_double);
  take(kv, "noise_psd", c.noise_psd_dbm_hz, to_double);
  take(kv, "tx_power_dbm", c.tx_power_dbm, to_double);
  take(kv, "angle_spread_deg", c.angle_spread_deg, to_double);
  take(kv, "paths_min", c.paths_min, to_int);
  take(kv, "paths_max", c.paths_max, to_int);
  take(kv, "dist_min_km", c.dist_min_km, to_double);
  take(kv, "dist_max_km", c.dist_max_km, to_double);
  take(kv, "rho_damp", c.rho_damp, to_double);
  take(kv, "N_coarse", c.coarse_iters, to_int);
  take(kv, "N_iter", c.outer_iters, to_int);
  take(kv, "N_gmmv", c.gmmv_iters, to_int);
  take(kv, "seed", c.seed, to_u64);
  c.validate();
  return c;
}

}  // namespace gfma
