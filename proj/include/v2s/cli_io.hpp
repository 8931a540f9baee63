#pragma once

#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "v2s/coherent_husimi.hpp"
#include "v2s/fock.hpp"
#include "v2s/fourier_hierarchy.hpp"
#include "v2s/potentials.hpp"
#include "v2s/vlasov.hpp"

namespace v2s {

// ---- run configuration ----

struct PotentialSpec {
  std::string kind = "zero";  // zero | gaussian | band_limited
  double amplitude = 0.0;
  double width = 1.0;  // gaussian width or band

  Potential build(int d) const;
};

/// One experiment. Text form: one `section.key = value` per line, `#` comments.
struct RunConfig {
  ScalingContext scaling{1, 1, 1};
  LatticeConfig lattice{16, 0.5, 1};
  PotentialSpec v11, v22, v12;
  std::string profile = "cosine_bump";
  double R1_length = 1.0;
  int n_p = 0;                // 0: one point per lattice site
  double p_max_momentum = 0.0;  // 0: full Brillouin zone
  int q_stride = 1;

  // Slater orbitals: gaussian packets around (q_alpha, p_alpha), spaced along q
  double species1_q = -1.0, species1_p = 0.3;
  double species2_q = 1.0, species2_p = -0.3;
  double packet_sigma_length = 0.5;
  double packet_spacing_length = 1.0;

  double quantum_T_time = 0.5;
  double quantum_dt_time = 0.05;
  std::vector<double> quantum_snapshots_time{0.0, 0.5};
  std::string kinetic = "central";  // central | spectral
  std::string quantum_initial = "slater";  // slater | random (seeded)

  double vlasov_L_length = 8.0;
  int vlasov_nq = 128;
  int vlasov_np = 128;
  double vlasov_p_max_momentum = 4.0;
  double vlasov_dt_time = 0.01;
  double vlasov_T_time = 1.0;
  std::vector<double> vlasov_snapshots_time{0.0, 1.0};
  double vlasov_sq_length = 0.5;
  double vlasov_sp_momentum = 0.5;
  bool vlasov_convergence = false;

  int hierarchy_K_max = 2;
  std::vector<std::pair<int, int>> hierarchy_orders{{1, 0}, {0, 1}};
  double hierarchy_t_time = 0.2;
  double hierarchy_h_time = 0.01;

  int picard_L = 4;
  double picard_t_time = 0.2;
  double picard_xi_max = 4.0;
  int picard_nodes = 5;

  int compare_blocks_q = 16;
  int compare_blocks_p = 16;
  std::string compare_mode = "quantum";  // quantum | vlasov_self
  std::vector<int> compare_sweep_N;      // empty: the configured scaling only
  bool compare_scale_lattice = true;

  std::uint64_t seed = 1;
  std::string output_dir = "out";

  PotentialSet potentials() const;
  void validate() const;  // InvalidInput / ConfigError
};

RunConfig parse_config(const std::string& text);  // ConfigError on unknown keys or bad values
RunConfig load_config(const std::string& path);
// Every key with its resolved value; parse_config(render_config(c)) reproduces c.
std::string render_config(const RunConfig& cfg);

// ---- binary arrays ----
// "V2S1", 4-byte subtype tag, dtype (1 real64, 2 complex128), rank, shape,
// ScalingContext, subtype metadata, row-major little-endian payload.

void save_state(const std::string& path, const ManyBodyState& s, const LatticeConfig& lat);
ManyBodyState load_state(const std::string& path, const FockSpace& space);
void save_density_matrix(const std::string& path, const ReducedDensityMatrix& g);
ReducedDensityMatrix load_density_matrix(const std::string& path);
void save_husimi(const std::string& path, const HusimiMeasure& m);
HusimiMeasure load_husimi(const std::string& path);
void save_distribution(const std::string& path, const SpeciesPairDistribution& d);
SpeciesPairDistribution load_distribution(const std::string& path);

// (q..., p..., value) per row, slots in storage order.
void write_husimi_csv(const std::string& path, const HusimiMeasure& m);

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  CsvWriter& operator<<(double v);
  CsvWriter& operator<<(const std::string& v);
  void end_row();

 private:
  std::ofstream out_;
  std::size_t columns_;
  std::size_t filled_ = 0;
};

std::uint64_t fnv1a_file(const std::string& path);

// ---- commands ----

struct Summary {
  std::vector<std::pair<std::string, std::string>> entries;

  void add(const std::string& key, const std::string& value) { entries.emplace_back(key, value); }
  void add(const std::string& key, double value);
  void flag(const std::string& key, bool value) { add(key, value ? "true" : "false"); }
  const std::string& get(const std::string& key) const;  // InvalidInput when absent
  void print(std::ostream& os) const;
};

/// One-particle measures of both species on one phase grid at a time.
struct SpeciesMeasures {
  double t = 0.0;
  PhaseGrid grid;
  RealVec m1, m2;
};

// W1 of each species between aggregations of two measure sets on equal grids.
std::pair<double, double> species_w1(const SpeciesMeasures& a, const SpeciesMeasures& b,
                                     int blocks_q, int blocks_p);

struct ComparisonRow {
  double t = 0.0;
  double w1_species1 = 0.0;
  double w1_species2 = 0.0;
  int N = 0;
  double hbar = 0.0;
};

// Quantum m^(1,0), m^(0,1) against Vlasov solutions started from the quantum
// Husimi measures at t = 0, on the quantum phase grid.
std::vector<ComparisonRow> compare_quantum_vlasov(const RunConfig& cfg);

// Configuration for total particle number N: N1 = ceil(N/2), N2 = floor(N/2);
// with compare_scale_lattice the box length is kept and M grows like N.
RunConfig config_for_N(const RunConfig& base, int N);

Summary cmd_quantum(const RunConfig& cfg);
Summary cmd_vlasov(const RunConfig& cfg);
Summary cmd_compare(const RunConfig& cfg);
Summary cmd_hierarchy(const RunConfig& cfg);
Summary cmd_picard(const RunConfig& cfg);

// Exit-code map for errors escaping a command.
int exit_code_for(const std::exception& e);

}  // namespace v2s
