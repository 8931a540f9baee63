#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "v2s/cli_io.hpp"
#include "v2s/hierarchy.hpp"

using namespace v2s;
namespace fs = std::filesystem;

namespace {

std::string scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "v2s_cli_io_test";
  fs::create_directories(dir);
  return (dir / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_config(const std::string& out) {
  RunConfig c = parse_config(
      "scaling.N1 = 1\n"
      "scaling.N2 = 1\n"
      "lattice.M = 8\n"
      "lattice.dx_length = 0.5\n"
      "quantum.T_time = 0.2\n"
      "quantum.snapshots_time = 0, 0.2\n"
      "vlasov.nq = 32\n"
      "vlasov.np = 32\n"
      "vlasov.T_time = 0.2\n"
      "vlasov.dt_time = 0.05\n"
      "vlasov.snapshots_time = 0, 0.1, 0.2\n"
      "compare.blocks_q = 8\n"
      "compare.blocks_p = 8\n");
  c.output_dir = scratch(out);
  return c;
}

}  // namespace

TEST_CASE("config text round trip and rejection of unknown keys") {
  const std::string text =
      "# comment line\n"
      "scaling.N1 = 2   # trailing comment\n"
      "scaling.N2 = 3\n"
      "lattice.M = 16\n"
      "potentials.v12_kind = gaussian\n"
      "potentials.v12_amplitude = -0.5\n"
      "quantum.snapshots_time = 0, 0.25, 0.5\n"
      "hierarchy.orders = 2,0; 1,1\n"
      "compare.sweep_N = 2, 3, 4\n"
      "vlasov.convergence = true\n"
      "seed = 42\n";
  const RunConfig c = parse_config(text);
  CHECK(c.scaling.N1 == 2);
  CHECK(c.scaling.N2 == 3);
  CHECK(c.v12.kind == "gaussian");
  CHECK(c.v12.amplitude == -0.5);
  CHECK(c.quantum_snapshots_time == std::vector<double>{0.0, 0.25, 0.5});
  CHECK(c.hierarchy_orders == std::vector<std::pair<int, int>>{{2, 0}, {1, 1}});
  CHECK(c.compare_sweep_N == std::vector<int>{2, 3, 4});
  CHECK(c.vlasov_convergence);
  CHECK(c.seed == 42);
  const std::string rendered = render_config(c);
  CHECK(render_config(parse_config(rendered)) == rendered);
  CHECK(render_config(parse_config("lattice.dx_length = 0.1\n")).find("lattice.dx_length = 0.10000000000000001") !=
        std::string::npos);

  CHECK_THROWS_AS(parse_config("scaling.N3 = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("lattice.M = 8.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("lattice.dx_length = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("lattice.M = 8\nlattice.M = 9\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("just words\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("vlasov.convergence = yes\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("seed = -1\n"), ConfigError);
  try {
    parse_config("bogus.key = 1\n");
  } catch (const std::exception& e) {
    CHECK(exit_code_for(e) == 2);
  }
}

TEST_CASE("validation failures map to the config exit code") {
  RunConfig c = parse_config("scaling.N1 = 20\nlattice.M = 16\n");
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  try {
    c.validate();
  } catch (const std::exception& e) {
    CHECK(exit_code_for(e) == 2);
  }
  CHECK_THROWS_AS(parse_config("quantum.kinetic = magic\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("potentials.v11_kind = coulomb\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("quantum.snapshots_time = 0, 2\n").validate(), InvalidInput);
  CHECK_NOTHROW(RunConfig{}.validate());
  CHECK(exit_code_for(BlowUp("x")) == 4);
  CHECK(exit_code_for(CapacityExceeded("x")) == 3);
  CHECK(exit_code_for(std::runtime_error("x")) == 5);
}

TEST_CASE("binary artifacts reload bit-identically") {
  const LatticeConfig lat{8, 0.5, 1};
  const ScalingContext ctx{2, 1, 1};
  const FockSpace space(lat);
  const auto s = random_state(space, ctx, 11);
  save_state(scratch("s.v2s"), s, lat);
  const auto s2 = load_state(scratch("s.v2s"), space);
  CHECK(s2.N1 == 2);
  CHECK(s2.ctx.N2 == 1);
  CHECK(s2.amp == s.amp);
  save_state(scratch("s2.v2s"), s2, lat);
  CHECK(slurp(scratch("s.v2s")) == slurp(scratch("s2.v2s")));
  CHECK(slurp(scratch("s.v2s")).substr(0, 8) == "V2S1STAT");
  CHECK_THROWS_AS(load_state(scratch("s.v2s"), FockSpace(LatticeConfig{10, 0.5, 1})), InvalidInput);

  const auto g = reduced_density(space, s, 1, 1);
  save_density_matrix(scratch("g.v2s"), g);
  const auto g2 = load_density_matrix(scratch("g.v2s"));
  CHECK(g2.kernel == g.kernel);
  CHECK(g2.k == 1);
  CHECK(g2.cell == g.cell);

  const CoherentFamily fam(lat, ctx.hbar());
  const auto m = husimi_transform(g, fam, husimi_grid(lat, ctx.hbar()));
  save_husimi(scratch("m.v2s"), m);
  const auto m2 = load_husimi(scratch("m.v2s"));
  CHECK(m2.values == m.values);
  CHECK(m2.grid.dp == m.grid.dp);
  CHECK(m2.grid.p_periodic == m.grid.p_periodic);
  CHECK(m2.order() == 2);
  save_husimi(scratch("m2.v2s"), m2);
  CHECK(slurp(scratch("m.v2s")) == slurp(scratch("m2.v2s")));
  CHECK_THROWS_AS(load_distribution(scratch("m.v2s")), InvalidInput);

  TwoBlobScenario sc;
  sc.nq = sc.np = 32;
  auto d = two_blob_initial(sc, ScalingContext{1, 1, 1});
  d.t = 0.375;
  save_distribution(scratch("d.v2s"), d);
  const auto d2 = load_distribution(scratch("d.v2s"));
  CHECK(d2.m1 == d.m1);
  CHECK(d2.m2 == d.m2);
  CHECK(d2.t == d.t);
  CHECK(d2.grid.q0 == d.grid.q0);

  // truncated file
  const std::string bytes = slurp(scratch("d.v2s"));
  std::ofstream(scratch("cut.v2s"), std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(load_distribution(scratch("cut.v2s")), InvalidInput);

  write_husimi_csv(scratch("m.csv"), m2);
  std::ifstream csv(scratch("m.csv"));
  std::string head;
  std::getline(csv, head);
  CHECK(head == "q1,q2,p1,p2,value");
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  CHECK(rows == m.values.size());
}

TEST_CASE("CSV writer enforces its column count") {
  CsvWriter w(scratch("t.csv"), {"a", "b"});
  w << 1.5 << std::string("x");
  w.end_row();
  CHECK_THROWS_AS(w.end_row(), InternalError);
  w << 2.0;
  CHECK_THROWS_AS(w.end_row(), InternalError);
}

TEST_CASE("W1 between measure sets") {
  TwoBlobScenario sc;
  sc.nq = sc.np = 32;
  const auto d = two_blob_initial(sc, ScalingContext{1, 1, 1});
  const SpeciesMeasures a{0.0, d.grid, d.m1, d.m2};
  const auto [w1, w2] = species_w1(a, a, 8, 8);
  CHECK(w1 == 0.0);
  CHECK(w2 == 0.0);
  const SpeciesMeasures swapped{0.0, d.grid, d.m2, d.m1};
  const auto [x1, x2] = species_w1(a, swapped, 8, 8);
  CHECK(x1 > 1.0);  // the blobs sit two length units and 0.6 momentum units apart
  CHECK(x1 == doctest::Approx(x2));
  TwoBlobScenario other = sc;
  other.L = 10.0;
  const auto e = two_blob_initial(other, ScalingContext{1, 1, 1});
  CHECK_THROWS_AS(species_w1(a, SpeciesMeasures{0.0, e.grid, e.m1, e.m2}, 8, 8), InvalidInput);
}

TEST_CASE("config for a particle sweep keeps the box") {
  RunConfig base;
  base.scaling = {1, 1, 1};
  base.lattice = {16, 0.5, 1};
  const auto c3 = config_for_N(base, 3);
  CHECK(c3.scaling.N1 == 2);
  CHECK(c3.scaling.N2 == 1);
  CHECK(c3.lattice.M == 24);
  CHECK(c3.lattice.M * c3.lattice.dx == doctest::Approx(8.0));
  base.compare_scale_lattice = false;
  CHECK(config_for_N(base, 4).lattice.M == 16);
}

TEST_CASE("quantum command on a free particle") {
  RunConfig c = small_config("quantum_free");
  c.scaling = {1, 0, 1};
  c.hierarchy_K_max = 1;
  const auto sum = cmd_quantum(c);
  CHECK(sum.get("marginals_all") == "true");
  CHECK(sum.get("number_moment_worst_dev") == "0");
  CHECK(fs::exists(fs::path(c.output_dir) / "husimi_10_1.v2s"));
  CHECK(fs::exists(fs::path(c.output_dir) / "manifest.csv"));
  const auto resolved = slurp((fs::path(c.output_dir) / "config_resolved.txt").string());
  CHECK(resolved.find("scaling.N2 = 0") != std::string::npos);
  // the run config written next to the outputs reproduces the run
  const auto again = parse_config(resolved);
  CHECK(render_config(again) == render_config(c));
  const auto st = load_state((fs::path(c.output_dir) / "state_1.v2s").string(), FockSpace(c.lattice));
  CHECK(st.normalized());
}

TEST_CASE("vlasov command: aligned free transport, determinism, blow-up") {
  RunConfig c = parse_config(
      "vlasov.L_length = 8\nvlasov.nq = 64\nvlasov.np = 32\nvlasov.p_max_momentum = 4\n"
      "vlasov.dt_time = 2\nvlasov.T_time = 2\nvlasov.snapshots_time = 0, 2\n");
  c.output_dir = scratch("vlasov_free");
  {
    const auto sum = cmd_vlasov(c);
    CHECK(sum.get("aligned_advection_exact") == "true");
  }
  const auto manifest = slurp((fs::path(c.output_dir) / "manifest.csv").string());
  cmd_vlasov(c);
  CHECK(slurp((fs::path(c.output_dir) / "manifest.csv").string()) == manifest);
  c.vlasov_dt_time = 0.3;
  c.vlasov_T_time = 0.3;
  c.vlasov_snapshots_time = {0.3};
  CHECK(cmd_vlasov(c).get("aligned_advection_exact") == "not_aligned");

  RunConfig b = c;
  b.scaling = {1, 0, 1};
  b.v11 = {"gaussian", 1e308, 0.1};
  b.vlasov_np = 16;
  b.vlasov_nq = 128;
  b.vlasov_dt_time = 0.1;
  b.vlasov_T_time = 1.0;
  b.vlasov_snapshots_time = {1.0};
  try {
    cmd_vlasov(b);
    FAIL("expected a blow-up");
  } catch (const std::exception& e) {
    CHECK(dynamic_cast<const BlowUp*>(&e) != nullptr);
    CHECK(exit_code_for(e) == 4);
  }
}

TEST_CASE("compare command") {
  RunConfig c = small_config("compare_self");
  c.compare_mode = "vlasov_self";
  CHECK(cmd_compare(c).get("max_w1") == "0");

  RunConfig q = small_config("compare_quantum");
  q.p_max_momentum = 3.0;
  q.n_p = 16;
  const auto rows = compare_quantum_vlasov(q);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].w1_species1 < 1e-12);
  CHECK(rows[1].w1_species1 > 0.0);
  CHECK(rows[1].N == 2);
  CHECK(rows[1].hbar == 0.5);
  q.p_max_momentum = 0.0;
  CHECK_THROWS_AS(compare_quantum_vlasov(q), InvalidInput);
}

TEST_CASE("hierarchy command without interaction and picard with a gaussian") {
  RunConfig c = small_config("hierarchy_free");
  c.hierarchy_t_time = 0.05;
  c.hierarchy_h_time = 0.01;
  const auto sum = cmd_hierarchy(c);
  CHECK(sum.get("collisions_zero") == "true");
  CHECK(sum.get("factorized_worst_residual") != "");

  RunConfig p = small_config("picard_gauss");
  p.v11 = {"gaussian", 1.0, 0.8};
  try {
    cmd_picard(p);
    FAIL("expected BandLimitRequired");
  } catch (const std::exception& e) {
    CHECK(dynamic_cast<const BandLimitRequired*>(&e) != nullptr);
    CHECK(exit_code_for(e) == 2);
  }
}
