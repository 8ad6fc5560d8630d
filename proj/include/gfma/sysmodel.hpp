#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gfma/rng.hpp"
#include "gfma/types.hpp"

namespace gfma {

enum class CodeKind { UnitModulusRandomPhase, ComplexGaussian, FourierRows };

std::string to_string(CodeKind kind);
CodeKind code_kind_from_string(const std::string& s);

// Scenario dimensions, receiver hyperparameters and physical constants for
// one experiment. Defaults mirror the full-scale simulation setup; see
// desk_scale() for the small profile used by the fast regression runs.
struct SystemConfig {
  int bs_antennas = 128;       // N
  int subcarriers = 60;        // M (spreading code length)
  int total_ues = 500;         // K
  int active_ues = 50;         // Ka per frame
  int slots = 20;              // T OFDM symbols per frame
  int mod_order = 4;           // L
  int beacon_antenna = 1;      // eta, 1-based
  double null_threshold = 0.2; // h0
  CodeKind code_kind = CodeKind::ComplexGaussian;
  double bandwidth_hz = 10e6;        // Bs
  double noise_psd_dbm_hz = -174.0;  // noise PSD
  double tx_power_dbm = 7.0;         // rho
  double angle_spread_deg = 7.5;     // Delta
  int paths_min = 8;
  int paths_max = 12;
  double dist_min_km = 0.1;
  double dist_max_km = 1.0;
  double rho_damp = 0.3;
  int coarse_iters = 50;   // N_coarse
  int outer_iters = 3;     // N_iter
  int gmmv_iters = 100;    // N_gmmv
  uint64_t seed = 1;

  void validate() const;  // throws ConfigError on violated invariants

  static SystemConfig desk_scale();
};

// Unit-average-power constellation with Gray bit labels.
struct Constellation {
  std::vector<cxd> points;        // a_1 .. a_L
  int bits_per_symbol = 0;        // log2(L)
  std::vector<uint32_t> bit_map;  // bit_map[l] = Gray label of points[l]

  int order() const { return static_cast<int>(points.size()); }
  // MSB-first bits of symbol index l.
  void append_bits(int l, std::vector<uint8_t>& out) const;
};

Constellation make_constellation(int order);

struct SpreadingCodes {
  CMat S;  // M x K, column k is UE k's code
  CodeKind kind = CodeKind::ComplexGaussian;
};

SpreadingCodes generate_spreading_codes(Rng& rng, CodeKind kind, int subcarriers, int total_ues);

// Flat "key = value" text file with '#' comments. Returns the raw pairs;
// duplicate keys are an error.
std::map<std::string, std::string> read_key_value_file(const std::string& path);
std::map<std::string, std::string> parse_key_value_text(const std::string& text);

// Consumes the SystemConfig keys from kv (erasing them); keys left behind
// belong to the caller. Values that fail to parse throw ConfigError.
SystemConfig apply_system_keys(std::map<std::string, std::string>& kv);

}  // namespace gfma
