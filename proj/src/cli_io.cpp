#include "v2s/cli_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>

#include "v2s/hierarchy.hpp"
#include "v2s/metrics.hpp"

namespace v2s {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

Potential PotentialSpec::build(int d) const {
  const PotentialKind k = potential_kind_from_string(kind);
  if (k == PotentialKind::Zero) return Potential::zero(d);
  return Potential(k, amplitude, width, d);
}

PotentialSet RunConfig::potentials() const {
  return {v11.build(scaling.d), v22.build(scaling.d), v12.build(scaling.d)};
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos == v.size() && std::isfinite(x)) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "' expects an integer, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("key '" + key + "' expects true or false, got '" + v + "'");
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Acc>
Field real_field(std::string key, Acc acc) {
  return {key, [key, acc](RunConfig& c, const std::string& v) { acc(c) = to_double(key, v); },
          [acc](const RunConfig& c) { return fmt(acc(const_cast<RunConfig&>(c))); }};
}

template <class Acc>
Field int_field(std::string key, Acc acc) {
  return {key,
          [key, acc](RunConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(acc(c))>;
            const long long x = to_int(key, v);
            if constexpr (std::is_unsigned_v<T>)
              if (x < 0) throw ConfigError("key '" + key + "' must be non-negative");
            acc(c) = static_cast<T>(x);
          },
          [acc](const RunConfig& c) { return std::to_string(acc(const_cast<RunConfig&>(c))); }};
}

template <class Acc>
Field text_field(std::string key, Acc acc) {
  return {key, [acc](RunConfig& c, const std::string& v) { acc(c) = v; },
          [acc](const RunConfig& c) { return acc(const_cast<RunConfig&>(c)); }};
}

template <class Acc>
Field bool_field(std::string key, Acc acc) {
  return {key, [key, acc](RunConfig& c, const std::string& v) { acc(c) = to_bool(key, v); },
          [acc](const RunConfig& c) -> std::string { return acc(const_cast<RunConfig&>(c)) ? "true" : "false"; }};
}

template <class Acc>
Field times_field(std::string key, Acc acc) {
  return {key,
          [key, acc](RunConfig& c, const std::string& v) {
            std::vector<double> out;
            for (const auto& t : split(v, ',')) out.push_back(to_double(key, t));
            acc(c) = out;
          },
          [acc](const RunConfig& c) {
            std::string s;
            for (double t : acc(const_cast<RunConfig&>(c))) s += (s.empty() ? "" : ", ") + fmt(t);
            return s;
          }};
}

std::vector<Field> potential_fields(const std::string& name, PotentialSpec RunConfig::*spec) {
  return {text_field("potentials." + name + "_kind", [spec](RunConfig& c) -> std::string& { return (c.*spec).kind; }),
          real_field("potentials." + name + "_amplitude", [spec](RunConfig& c) -> double& { return (c.*spec).amplitude; }),
          real_field("potentials." + name + "_width", [spec](RunConfig& c) -> double& { return (c.*spec).width; })};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    using C = RunConfig;
    std::vector<Field> f = {
        int_field("scaling.N1", [](C& c) -> int& { return c.scaling.N1; }),
        int_field("scaling.N2", [](C& c) -> int& { return c.scaling.N2; }),
        int_field("scaling.d", [](C& c) -> int& { return c.scaling.d; }),
        int_field("lattice.M", [](C& c) -> int& { return c.lattice.M; }),
        real_field("lattice.dx_length", [](C& c) -> double& { return c.lattice.dx; }),
    };
    for (auto& x : potential_fields("v11", &C::v11)) f.push_back(x);
    for (auto& x : potential_fields("v22", &C::v22)) f.push_back(x);
    for (auto& x : potential_fields("v12", &C::v12)) f.push_back(x);
    const std::vector<Field> rest = {
        text_field("coherent.profile", [](C& c) -> std::string& { return c.profile; }),
        real_field("coherent.R1_length", [](C& c) -> double& { return c.R1_length; }),
        int_field("phase_grid.n_p", [](C& c) -> int& { return c.n_p; }),
        real_field("phase_grid.p_max_momentum", [](C& c) -> double& { return c.p_max_momentum; }),
        int_field("phase_grid.q_stride", [](C& c) -> int& { return c.q_stride; }),
        real_field("initial.species1_q_length", [](C& c) -> double& { return c.species1_q; }),
        real_field("initial.species1_p_momentum", [](C& c) -> double& { return c.species1_p; }),
        real_field("initial.species2_q_length", [](C& c) -> double& { return c.species2_q; }),
        real_field("initial.species2_p_momentum", [](C& c) -> double& { return c.species2_p; }),
        real_field("initial.packet_sigma_length", [](C& c) -> double& { return c.packet_sigma_length; }),
        real_field("initial.packet_spacing_length", [](C& c) -> double& { return c.packet_spacing_length; }),
        real_field("quantum.T_time", [](C& c) -> double& { return c.quantum_T_time; }),
        real_field("quantum.dt_time", [](C& c) -> double& { return c.quantum_dt_time; }),
        times_field("quantum.snapshots_time", [](C& c) -> std::vector<double>& { return c.quantum_snapshots_time; }),
        text_field("quantum.kinetic", [](C& c) -> std::string& { return c.kinetic; }),
        text_field("quantum.initial", [](C& c) -> std::string& { return c.quantum_initial; }),
        real_field("vlasov.L_length", [](C& c) -> double& { return c.vlasov_L_length; }),
        int_field("vlasov.nq", [](C& c) -> int& { return c.vlasov_nq; }),
        int_field("vlasov.np", [](C& c) -> int& { return c.vlasov_np; }),
        real_field("vlasov.p_max_momentum", [](C& c) -> double& { return c.vlasov_p_max_momentum; }),
        real_field("vlasov.dt_time", [](C& c) -> double& { return c.vlasov_dt_time; }),
        real_field("vlasov.T_time", [](C& c) -> double& { return c.vlasov_T_time; }),
        times_field("vlasov.snapshots_time", [](C& c) -> std::vector<double>& { return c.vlasov_snapshots_time; }),
        real_field("vlasov.sq_length", [](C& c) -> double& { return c.vlasov_sq_length; }),
        real_field("vlasov.sp_momentum", [](C& c) -> double& { return c.vlasov_sp_momentum; }),
        bool_field("vlasov.convergence", [](C& c) -> bool& { return c.vlasov_convergence; }),
        int_field("hierarchy.K_max", [](C& c) -> int& { return c.hierarchy_K_max; }),
        Field{"hierarchy.orders",
              [](C& c, const std::string& v) {
                c.hierarchy_orders.clear();
                for (const auto& tok : split(v, ';')) {
                  const auto kl = split(tok, ',');
                  if (kl.size() != 2) throw ConfigError("hierarchy.orders expects 'k,l; k,l; ...'");
                  c.hierarchy_orders.emplace_back(static_cast<int>(to_int("hierarchy.orders", kl[0])),
                                                  static_cast<int>(to_int("hierarchy.orders", kl[1])));
                }
              },
              [](const C& c) {
                std::string s;
                for (auto [k, l] : c.hierarchy_orders)
                  s += (s.empty() ? "" : "; ") + std::to_string(k) + "," + std::to_string(l);
                return s;
              }},
        real_field("hierarchy.t_time", [](C& c) -> double& { return c.hierarchy_t_time; }),
        real_field("hierarchy.h_time", [](C& c) -> double& { return c.hierarchy_h_time; }),
        int_field("picard.L", [](C& c) -> int& { return c.picard_L; }),
        real_field("picard.t_time", [](C& c) -> double& { return c.picard_t_time; }),
        real_field("picard.xi_max", [](C& c) -> double& { return c.picard_xi_max; }),
        int_field("picard.nodes", [](C& c) -> int& { return c.picard_nodes; }),
        int_field("compare.blocks_q", [](C& c) -> int& { return c.compare_blocks_q; }),
        int_field("compare.blocks_p", [](C& c) -> int& { return c.compare_blocks_p; }),
        text_field("compare.mode", [](C& c) -> std::string& { return c.compare_mode; }),
        Field{"compare.sweep_N",
              [](C& c, const std::string& v) {
                c.compare_sweep_N.clear();
                for (const auto& t : split(v, ','))
                  c.compare_sweep_N.push_back(static_cast<int>(to_int("compare.sweep_N", t)));
              },
              [](const C& c) {
                std::string s;
                for (int n : c.compare_sweep_N) s += (s.empty() ? "" : ", ") + std::to_string(n);
                return s;
              }},
        bool_field("compare.scale_lattice", [](C& c) -> bool& { return c.compare_scale_lattice; }),
        int_field("seed", [](C& c) -> std::uint64_t& { return c.seed; }),
        text_field("output_dir", [](C& c) -> std::string& { return c.output_dir; }),
    };
    f.insert(f.end(), rest.begin(), rest.end());
    return f;
  }();
  return table;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::vector<std::string> seen;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& tab = fields();
    const auto it = std::find_if(tab.begin(), tab.end(), [&](const Field& f) { return f.key == key; });
    if (it == tab.end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    seen.push_back(key);
    it->set(cfg, value);
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string render_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

void RunConfig::validate() const {
  scaling.validate();
  if (scaling.d != 1) throw InvalidInput("the drivers support d = 1");
  LatticeConfig lat = lattice;
  lat.d = scaling.d;
  lat.validate(scaling);
  (void)potentials();
  (void)profile_kind_from_string(profile);
  if (!(R1_length > 0.0)) throw InvalidInput("coherent.R1_length must be positive");
  if (n_p < 0 || q_stride < 1) throw InvalidInput("phase grid sizes must be positive");
  if (p_max_momentum < 0.0) throw InvalidInput("phase_grid.p_max_momentum must be non-negative");
  if (!(packet_sigma_length > 0.0)) throw InvalidInput("initial.packet_sigma_length must be positive");
  if (kinetic != "central" && kinetic != "spectral") throw ConfigError("quantum.kinetic is central or spectral");
  if (quantum_initial != "slater" && quantum_initial != "random")
    throw ConfigError("quantum.initial is slater or random");
  if (!(quantum_dt_time > 0.0) || quantum_T_time < 0.0) throw InvalidInput("quantum times must be positive");
  for (double t : quantum_snapshots_time)
    if (t < 0.0 || t > quantum_T_time + 1e-12) throw InvalidInput("quantum snapshot outside [0, T]");
  if (!(vlasov_dt_time > 0.0) || vlasov_T_time < 0.0) throw InvalidInput("vlasov times must be positive");
  for (double t : vlasov_snapshots_time)
    if (t < 0.0 || t > vlasov_T_time + 1e-12) throw InvalidInput("vlasov snapshot outside [0, T]");
  if (vlasov_nq < 4 || vlasov_np < 4 || !(vlasov_L_length > 0.0) || !(vlasov_p_max_momentum > 0.0))
    throw InvalidInput("vlasov grid is too small");
  if (!(vlasov_sq_length > 0.0) || !(vlasov_sp_momentum > 0.0)) throw InvalidInput("vlasov blob widths must be positive");
  if (hierarchy_K_max < 1) throw InvalidInput("hierarchy.K_max must be at least 1");
  for (auto [k, l] : hierarchy_orders)
    if (k < 0 || l < 0 || k + l < 1) throw InvalidInput("hierarchy orders need k, l >= 0 and k + l >= 1");
  if (!(hierarchy_h_time > 0.0) || hierarchy_t_time < hierarchy_h_time)
    throw InvalidInput("hierarchy needs 0 < h_time <= t_time");
  if (picard_L < 1 || picard_nodes < 2 || !(picard_xi_max > 0.0) || picard_t_time < 0.0)
    throw InvalidInput("picard settings out of range");
  if (compare_blocks_q < 1 || compare_blocks_p < 1) throw InvalidInput("compare blocks must be positive");
  if (compare_mode != "quantum" && compare_mode != "vlasov_self") throw ConfigError("compare.mode is quantum or vlasov_self");
  for (int n : compare_sweep_N)
    if (n < 1) throw InvalidInput("compare.sweep_N entries must be positive");
}

// ---------------------------------------------------------------- binary arrays

namespace {

constexpr char kMagic[4] = {'V', '2', 'S', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    if constexpr (std::endian::native == std::endian::little) {
      buf_.insert(buf_.end(), c, c + n);
    } else {
      for (std::size_t i = n; i-- > 0;) buf_.push_back(c[i]);
    }
  }
  void raw(const char* s, std::size_t n) { buf_.insert(buf_.end(), s, s + n); }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void i32(std::int32_t v) { bytes(&v, 4); }
  void f64(double v) { bytes(&v, 8); }
  void c128(cplx v) {
    f64(v.real());
    f64(v.imag());
  }
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw InvalidInput("write failed for '" + path + "'");
  }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot read '" + path + "'");
    buf_.assign(std::istreambuf_iterator<char>(in), {});
  }
  void bytes(void* p, std::size_t n) {
    need(n);
    auto* c = static_cast<unsigned char*>(p);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(c, buf_.data() + pos_, n);
    } else {
      for (std::size_t i = 0; i < n; ++i) c[n - 1 - i] = static_cast<unsigned char>(buf_[pos_ + i]);
    }
    pos_ += n;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  std::int32_t i32() { return get<std::int32_t>(); }
  double f64() { return get<double>(); }
  cplx c128() {
    const double re = f64();
    return {re, f64()};
  }
  void finish() const {
    if (pos_ != buf_.size()) throw InvalidInput("trailing bytes in '" + path_ + "'");
  }

 private:
  template <class T>
  T get() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw InvalidInput("truncated array file '" + path_ + "'");
  }
  std::string path_;
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

enum DType : std::uint8_t { kReal = 1, kComplex = 2 };

void header(Writer& w, const char* tag, DType dt, const std::vector<std::uint64_t>& shape,
            const ScalingContext& ctx) {
  w.raw(kMagic, 4);
  w.raw(tag, 4);
  w.u8(dt);
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (auto s : shape) w.u64(s);
  w.i32(ctx.N1);
  w.i32(ctx.N2);
  w.i32(ctx.d);
}

std::vector<std::uint64_t> read_header(Reader& r, const char* tag, DType dt, ScalingContext& ctx) {
  if (r.raw(4) != std::string(kMagic, 4)) throw InvalidInput("not a V2S1 array file");
  const std::string t = r.raw(4);
  if (t != std::string(tag, 4)) throw InvalidInput("array subtype '" + t + "', expected '" + std::string(tag, 4) + "'");
  if (r.u8() != dt) throw InvalidInput("unexpected dtype code");
  const std::uint32_t rank = r.u32();
  if (rank > 16) throw InvalidInput("implausible array rank");
  std::vector<std::uint64_t> shape(rank);
  for (auto& s : shape) s = r.u64();
  ctx.N1 = r.i32();
  ctx.N2 = r.i32();
  ctx.d = r.i32();
  return shape;
}

std::uint64_t product(const std::vector<std::uint64_t>& shape) {
  std::uint64_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

void write_grid(Writer& w, const PhaseGrid& g) {
  w.i32(g.d);
  w.i32(g.nq);
  w.f64(g.q0);
  w.f64(g.dq);
  w.i32(g.np);
  w.f64(g.p0);
  w.f64(g.dp);
  w.i32(g.q_stride);
  w.u8(g.p_periodic ? 1 : 0);
}

PhaseGrid read_grid(Reader& r) {
  PhaseGrid g;
  g.d = r.i32();
  g.nq = r.i32();
  g.q0 = r.f64();
  g.dq = r.f64();
  g.np = r.i32();
  g.p0 = r.f64();
  g.dp = r.f64();
  g.q_stride = r.i32();
  g.p_periodic = r.u8() != 0;
  g.validate();
  return g;
}

}  // namespace

void save_state(const std::string& path, const ManyBodyState& s, const LatticeConfig& lat) {
  Writer w;
  header(w, "STAT", kComplex, {static_cast<std::uint64_t>(s.amp.size())}, s.ctx);
  w.i32(s.N1);
  w.i32(s.N2);
  w.i32(lat.M);
  w.f64(lat.dx);
  w.i32(lat.d);
  for (Eigen::Index i = 0; i < s.amp.size(); ++i) w.c128(s.amp[i]);
  w.save(path);
}

ManyBodyState load_state(const std::string& path, const FockSpace& space) {
  Reader r(path);
  ScalingContext ctx;
  const auto shape = read_header(r, "STAT", kComplex, ctx);
  if (shape.size() != 1) throw InvalidInput("state arrays have rank 1");
  const int N1 = r.i32(), N2 = r.i32();
  LatticeConfig lat;
  lat.M = r.i32();
  lat.dx = r.f64();
  lat.d = r.i32();
  const auto& sl = space.lattice();
  if (lat.M != sl.M || lat.dx != sl.dx || lat.d != sl.d) throw InvalidInput("state belongs to a different lattice");
  ManyBodyState s = zero_state(space, ctx, N1, N2);
  if (static_cast<std::uint64_t>(s.amp.size()) != shape[0]) throw InvalidInput("state length differs from the sector dimension");
  for (Eigen::Index i = 0; i < s.amp.size(); ++i) s.amp[i] = r.c128();
  r.finish();
  return s;
}

void save_density_matrix(const std::string& path, const ReducedDensityMatrix& g) {
  Writer w;
  header(w, "GAMM", kComplex, {static_cast<std::uint64_t>(g.kernel.rows()), static_cast<std::uint64_t>(g.kernel.cols())},
         g.ctx);
  w.i32(g.k);
  w.i32(g.l);
  w.i32(g.sites);
  w.f64(g.cell);
  for (Eigen::Index i = 0; i < g.kernel.rows(); ++i)
    for (Eigen::Index j = 0; j < g.kernel.cols(); ++j) w.c128(g.kernel(i, j));
  w.save(path);
}

ReducedDensityMatrix load_density_matrix(const std::string& path) {
  Reader r(path);
  ReducedDensityMatrix g;
  const auto shape = read_header(r, "GAMM", kComplex, g.ctx);
  if (shape.size() != 2) throw InvalidInput("density matrices have rank 2");
  g.k = r.i32();
  g.l = r.i32();
  g.sites = r.i32();
  g.cell = r.f64();
  g.kernel.resize(static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1]));
  for (Eigen::Index i = 0; i < g.kernel.rows(); ++i)
    for (Eigen::Index j = 0; j < g.kernel.cols(); ++j) g.kernel(i, j) = r.c128();
  r.finish();
  return g;
}

void save_husimi(const std::string& path, const HusimiMeasure& m) {
  Writer w;
  std::vector<std::uint64_t> shape;
  for (int s = 0; s < m.order(); ++s) {
    shape.push_back(m.grid.q_points());
    shape.push_back(m.grid.p_points());
  }
  if (product(shape) != m.values.size()) throw InvalidInput("Husimi values do not match the grid");
  header(w, "HUSI", kReal, shape, m.ctx);
  w.i32(m.k);
  w.i32(m.l);
  write_grid(w, m.grid);
  for (double v : m.values) w.f64(v);
  w.save(path);
}

HusimiMeasure load_husimi(const std::string& path) {
  Reader r(path);
  HusimiMeasure m;
  const auto shape = read_header(r, "HUSI", kReal, m.ctx);
  m.k = r.i32();
  m.l = r.i32();
  m.grid = read_grid(r);
  if (static_cast<int>(shape.size()) != 2 * m.order()) throw InvalidInput("Husimi rank differs from the order");
  m.values.resize(product(shape));
  for (double& v : m.values) v = r.f64();
  r.finish();
  return m;
}

void save_distribution(const std::string& path, const SpeciesPairDistribution& d) {
  Writer w;
  const std::vector<std::uint64_t> shape = {2, static_cast<std::uint64_t>(d.grid.nq), static_cast<std::uint64_t>(d.grid.np)};
  if (d.m1.size() != d.grid.points() || d.m2.size() != d.grid.points()) throw InvalidInput("distribution size mismatch");
  header(w, "VLAS", kReal, shape, d.ctx);
  w.f64(d.t);
  write_grid(w, d.grid);
  for (double v : d.m1) w.f64(v);
  for (double v : d.m2) w.f64(v);
  w.save(path);
}

SpeciesPairDistribution load_distribution(const std::string& path) {
  Reader r(path);
  SpeciesPairDistribution d;
  const auto shape = read_header(r, "VLAS", kReal, d.ctx);
  if (shape.size() != 3 || shape[0] != 2) throw InvalidInput("distribution arrays have shape [2, nq, np]");
  d.t = r.f64();
  d.grid = read_grid(r);
  if (shape[1] != static_cast<std::uint64_t>(d.grid.nq) || shape[2] != static_cast<std::uint64_t>(d.grid.np))
    throw InvalidInput("distribution shape differs from its grid");
  d.m1.resize(d.grid.points());
  d.m2.resize(d.grid.points());
  for (double& v : d.m1) v = r.f64();
  for (double& v : d.m2) v = r.f64();
  r.finish();
  return d;
}

// ---------------------------------------------------------------- CSV

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : out_(path), columns_(header.size()) {
  if (!out_) throw InvalidInput("cannot write '" + path + "'");
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
  out_ << "\n";
}

CsvWriter& CsvWriter::operator<<(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return *this << std::string(buf);
}

CsvWriter& CsvWriter::operator<<(const std::string& v) {
  if (filled_ >= columns_) throw InternalError("too many CSV columns");
  out_ << (filled_ ? "," : "") << v;
  ++filled_;
  return *this;
}

void CsvWriter::end_row() {
  if (filled_ != columns_) throw InternalError("incomplete CSV row");
  out_ << "\n";
  filled_ = 0;
}

void write_husimi_csv(const std::string& path, const HusimiMeasure& m) {
  std::vector<std::string> head;
  const int n = m.order();
  for (int s = 0; s < n; ++s) head.push_back("q" + std::to_string(s + 1));
  for (int s = 0; s < n; ++s) head.push_back("p" + std::to_string(s + 1));
  head.push_back("value");
  CsvWriter csv(path, head);
  const std::size_t P = m.grid.points();
  std::vector<std::size_t> z(n);
  for (std::size_t idx = 0; idx < m.values.size(); ++idx) {
    std::size_t rest = idx;
    for (int s = n - 1; s >= 0; --s) {
      z[s] = rest % P;
      rest /= P;
    }
    for (int s = 0; s < n; ++s) csv << m.grid.q(z[s]);
    for (int s = 0; s < n; ++s) csv << m.grid.p(z[s]);
    csv << m.values[idx];
    csv.end_row();
  }
}

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read '" + path + "'");
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

// ---------------------------------------------------------------- summaries

void Summary::add(const std::string& key, double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  add(key, std::string(buf));
}

const std::string& Summary::get(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  throw InvalidInput("summary has no entry '" + key + "'");
}

void Summary::print(std::ostream& os) const {
  for (const auto& [k, v] : entries) os << k << ": " << v << "\n";
}

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return err->exit_code();
  return static_cast<int>(ErrorFamily::Internal);
}

// ---------------------------------------------------------------- drivers

namespace {

/// Output directory with the resolved config and a hash manifest.
class Outputs {
 public:
  Outputs(const RunConfig& cfg, const std::string& command) : dir_(cfg.output_dir) {
    fs::create_directories(dir_);
    const std::string p = path("config_resolved.txt");
    std::ofstream out(p);
    out << "# command: " << command << "\n" << render_config(cfg);
  }
  std::string path(const std::string& name) {
    files_.push_back(name);
    return (fs::path(dir_) / name).string();
  }
  void finish(Summary& sum) {
    const std::string mp = (fs::path(dir_) / "manifest.csv").string();
    CsvWriter csv(mp, {"file", "bytes", "fnv1a64"});
    for (const auto& f : files_) {
      const std::string p = (fs::path(dir_) / f).string();
      char hex[20];
      std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a_file(p)));
      csv << f << std::to_string(fs::file_size(p)) << std::string(hex);
      csv.end_row();
    }
    sum.add("output_dir", dir_);
  }

 private:
  std::string dir_;
  std::vector<std::string> files_;
};

std::vector<double> sorted_times(std::vector<double> t) {
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

/// Lattice, Hamiltonian, coherent family and initial state of one quantum run.
struct QuantumRun {
  LatticeConfig lat;
  ScalingContext ctx;
  std::unique_ptr<FockSpace> space;
  PotentialSet pots;
  std::unique_ptr<CoherentFamily> fam;
  PhaseGrid grid;
  SparseHamiltonian H;
  ManyBodyState psi0;
  double dt = 0.05;

  explicit QuantumRun(const RunConfig& cfg, bool full_zone = false) {
    cfg.validate();
    ctx = cfg.scaling;
    lat = cfg.lattice;
    lat.d = ctx.d;
    space = std::make_unique<FockSpace>(lat);
    pots = cfg.potentials();
    const double hbar = ctx.hbar();
    fam = std::make_unique<CoherentFamily>(lat, hbar, profile_kind_from_string(cfg.profile), cfg.R1_length);
    grid = full_zone ? husimi_grid(lat, hbar) : husimi_grid(lat, hbar, cfg.n_p, cfg.p_max_momentum, cfg.q_stride);
    auto basis = space->sector(ctx.N1, ctx.N2);
    if (!basis) throw InvalidInput("empty particle-number sector");
    H = build_hamiltonian(lat, ctx, pots, *basis,
                          cfg.kinetic == "spectral" ? KineticScheme::Spectral : KineticScheme::CentralDifference);
    dt = cfg.quantum_dt_time;
    if (cfg.quantum_initial == "random") {
      psi0 = random_state(*space, ctx, cfg.seed);
    } else {
      auto orbitals = [&](int n, double q, double p) {
        std::vector<CplxVec> out;
        for (int j = 0; j < n; ++j)
          out.push_back(gaussian_packet(lat, q + (j - 0.5 * (n - 1)) * cfg.packet_spacing_length,
                                        cfg.packet_sigma_length, p, hbar));
        return out;
      };
      psi0 = slater_initial_state(*space, ctx, orbitals(ctx.N1, cfg.species1_q, cfg.species1_p),
                                  orbitals(ctx.N2, cfg.species2_q, cfg.species2_p));
    }
  }

  // States at the requested (sorted, distinct) times.
  std::vector<ManyBodyState> states(const std::vector<double>& times) const {
    std::vector<ManyBodyState> out;
    ManyBodyState cur = psi0;
    double t = 0.0;
    for (double target : times) {
      const double span = target - t;
      if (span < -1e-12) throw InvalidInput("times must be sorted and non-negative");
      if (span > 1e-14) {
        const int steps = std::max(1, static_cast<int>(std::ceil(span / dt - 1e-9)));
        cur = evolve(cur, H, span, steps);
        t = target;
      }
      out.push_back(cur);
    }
    return out;
  }

  HusimiMeasure one_particle(const ManyBodyState& s, int species) const {
    const int k = species == 1 ? 1 : 0;
    return husimi_transform(reduced_density(*space, s, k, 1 - k), *fam, grid);
  }
};

SpeciesPairDistribution blob_initial(const RunConfig& cfg) {
  const auto grid = vlasov_grid(cfg.vlasov_L_length, cfg.vlasov_nq, cfg.vlasov_p_max_momentum, cfg.vlasov_np);
  auto blob = [&](double q0, double p0) {
    return [=, L = cfg.vlasov_L_length, sq = cfg.vlasov_sq_length, sp = cfg.vlasov_sp_momentum](double q, double p) {
      const double a = min_image(q - q0, L) / sq, b = (p - p0) / sp;
      return std::exp(-0.5 * (a * a + b * b));
    };
  };
  return make_distribution(grid, cfg.scaling, blob(cfg.species1_q, cfg.species1_p),
                           blob(cfg.species2_q, cfg.species2_p));
}

double l1_distance(const SpeciesPairDistribution& a, const SpeciesPairDistribution& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.m1.size(); ++i) s += std::abs(a.m1[i] - b.m1[i]) + std::abs(a.m2[i] - b.m2[i]);
  return s * a.grid.weight();
}

bool same_grid(const PhaseGrid& a, const PhaseGrid& b) {
  return a.d == b.d && a.nq == b.nq && a.np == b.np && a.q0 == b.q0 && a.dq == b.dq && a.p0 == b.p0 &&
         a.dp == b.dp;
}

}  // namespace

std::pair<double, double> species_w1(const SpeciesMeasures& a, const SpeciesMeasures& b, int bq, int bp) {
  if (!same_grid(a.grid, b.grid)) throw InvalidInput("compared measures live on different phase grids");
  auto one = [&](const RealVec& x, const RealVec& y) {
    if (x.empty() && y.empty()) return 0.0;
    if (x.size() != a.grid.points() || y.size() != a.grid.points()) throw InvalidInput("measure size differs from its grid");
    auto ax = aggregate(x, a.grid, bq, bp), ay = aggregate(y, a.grid, bq, bp);
    // round-off negatives from interpolation or the Husimi sums
    for (auto* m : {&ax.measure, &ay.measure}) {
      double mass = 0.0;
      for (double w : m->weights) mass += std::abs(w);
      for (double& w : m->weights)
        if (w < 0.0) {
          if (w < -1e-8 * mass) throw InvalidInput("measure has a significant negative part");
          w = 0.0;
        }
    }
    if (ax.measure.total_mass() <= 0.0 && ay.measure.total_mass() <= 0.0) return 0.0;
    return wasserstein1(ax.measure, ay.measure).value;
  };
  return {one(a.m1, b.m1), one(a.m2, b.m2)};
}

RunConfig config_for_N(const RunConfig& base, int N) {
  if (N < 1) throw InvalidInput("particle number must be positive");
  RunConfig c = base;
  c.scaling.N1 = (N + 1) / 2;
  c.scaling.N2 = N / 2;
  if (base.compare_scale_lattice) {
    const double L = base.lattice.M * base.lattice.dx;
    const int M = std::max(4, static_cast<int>(std::lround(static_cast<double>(base.lattice.M) * N / base.scaling.N())));
    c.lattice.M = M;
    c.lattice.dx = L / M;
  }
  return c;
}

std::vector<ComparisonRow> compare_quantum_vlasov(const RunConfig& cfg) {
  if (!(cfg.p_max_momentum > 0.0)) throw InvalidInput("comparison needs phase_grid.p_max_momentum > 0");
  const QuantumRun qr(cfg);
  const auto times = sorted_times(cfg.quantum_snapshots_time);
  const auto states = qr.states(times);
  std::vector<SpeciesMeasures> quantum;
  for (std::size_t i = 0; i < times.size(); ++i) {
    SpeciesMeasures m{times[i], qr.grid, {}, {}};
    if (qr.ctx.N1 > 0) m.m1 = qr.one_particle(states[i], 1).values;
    if (qr.ctx.N2 > 0) m.m2 = qr.one_particle(states[i], 2).values;
    quantum.push_back(std::move(m));
  }
  // Vlasov from the quantum Husimi measures at t = 0
  const auto first = qr.states({0.0}).front();
  SpeciesPairDistribution d0;
  d0.grid = qr.grid;
  d0.ctx = qr.ctx;
  d0.m1 = qr.ctx.N1 > 0 ? qr.one_particle(first, 1).values : RealVec(qr.grid.points(), 0.0);
  d0.m2 = qr.ctx.N2 > 0 ? qr.one_particle(first, 2).values : RealVec(qr.grid.points(), 0.0);
  const double T = times.empty() ? 0.0 : times.back();
  const auto traj = run(d0, qr.pots, T, cfg.vlasov_dt_time, times);
  std::vector<ComparisonRow> rows;
  for (std::size_t i = 0; i < times.size(); ++i) {
    SpeciesMeasures v{times[i], qr.grid, traj.snapshots[i].m1, traj.snapshots[i].m2};
    if (qr.ctx.N1 == 0) v.m1.clear();
    if (qr.ctx.N2 == 0) v.m2.clear();
    const auto [w1, w2] = species_w1(quantum[i], v, cfg.compare_blocks_q, cfg.compare_blocks_p);
    rows.push_back({times[i], w1, w2, qr.ctx.N(), qr.ctx.hbar()});
  }
  return rows;
}

Summary cmd_quantum(const RunConfig& cfg) {
  Summary sum;
  const QuantumRun qr(cfg);
  Outputs out(cfg, "quantum");
  const auto times = sorted_times(cfg.quantum_snapshots_time);
  const auto states = qr.states(times);
  CsvWriter marg(out.path("marginals.csv"), {"t", "k", "l", "l1_value", "l1_expected", "l1_rel_err", "min", "max",
                                            "symmetry_dev", "recursion1_dev", "recursion2_dev", "passive"});
  CsvWriter ident(out.path("kinetic_identity.csv"), {"t", "species", "lhs", "rhs", "rel_gap", "rel_gap_stencil"});
  CsvWriter moments(out.path("number_moments.csv"), {"t", "max_moment_dev"});
  bool l1_ok = true, rec_ok = true, passive_ok = true, sym_ok = true;
  double worst_identity = 0.0, worst_moment = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const auto& s = states[i];
    const std::string tag = std::to_string(i);
    save_state(out.path("state_" + tag + ".v2s"), s, qr.lat);
    for (int alpha = 1; alpha <= 2; ++alpha) {
      if ((alpha == 1 ? qr.ctx.N1 : qr.ctx.N2) == 0) continue;
      const int k = alpha == 1 ? 1 : 0;
      save_density_matrix(out.path("gamma" + std::to_string(k) + std::to_string(1 - k) + "_" + tag + ".v2s"),
                          reduced_density(*qr.space, s, k, 1 - k));
    }
    const auto fam = husimi_family(*qr.space, s, *qr.fam, qr.grid, cfg.hierarchy_K_max);
    for (const auto& [key, m] : fam.levels) {
      const auto [k, l] = key;
      save_husimi(out.path("husimi_" + std::to_string(k) + std::to_string(l) + "_" + tag + ".v2s"), m);
      const HusimiMeasure* low1 = k >= 1 && m.order() > 1 && fam.has(k - 1, l) ? &fam.at(k - 1, l) : nullptr;
      const HusimiMeasure* low2 = l >= 1 && m.order() > 1 && fam.has(k, l - 1) ? &fam.at(k, l - 1) : nullptr;
      const auto rep = check_marginal_properties(m, qr.ctx, low1, low2);
      marg << times[i] << k << l << rep.l1_value << rep.l1_expected << rep.l1_rel_err << rep.min_value
            << rep.max_value << rep.symmetry_dev << rep.recursion1_dev << rep.recursion2_dev
            << std::string(rep.passive ? "true" : "false");
      marg.end_row();
      l1_ok = l1_ok && rep.l1_rel_err <= 1e-4;
      rec_ok = rec_ok && (!rep.has_recursion1 || rep.recursion1_dev <= 1e-4) &&
               (!rep.has_recursion2 || rep.recursion2_dev <= 1e-4);
      passive_ok = passive_ok && rep.passive;
      sym_ok = sym_ok && rep.symmetry_dev <= 1e-10;
    }
    for (int alpha = 1; alpha <= 2; ++alpha) {
      const int k = alpha == 1 ? 1 : 0;
      if (!fam.has(k, 1 - k) || (alpha == 1 ? qr.ctx.N1 : qr.ctx.N2) == 0) continue;
      const auto rep = kinetic_identity(*qr.space, s, fam.at(k, 1 - k), *qr.fam, alpha);
      ident << times[i] << alpha << rep.lhs << rep.rhs << rep.rel_gap << rep.rel_gap_stencil;
      ident.end_row();
      worst_identity = std::max(worst_identity, rep.rel_gap);
    }
    double dev = 0.0;
    for (int k = 0; k <= (qr.ctx.N1 > 0 ? 3 : 0); ++k)
      for (int l = 0; l <= (qr.ctx.N2 > 0 ? 3 : 0); ++l) dev = std::max(dev, std::abs(expect_number_moments(s, k, l) - 1.0));
    moments << times[i] << dev;
    moments.end_row();
    worst_moment = std::max(worst_moment, dev);
  }
  sum.add("snapshots", static_cast<double>(times.size()));
  sum.add("energy_initial", expect_energy(qr.psi0, qr.H));
  sum.add("energy_final", expect_energy(states.back(), qr.H));
  sum.flag("marginals_l1", l1_ok);
  sum.flag("marginals_recursion", rec_ok);
  sum.flag("marginals_passive", passive_ok);
  sum.flag("marginals_symmetry", sym_ok);
  sum.flag("marginals_all", l1_ok && rec_ok && passive_ok && sym_ok);
  sum.add("kinetic_identity_worst_rel_gap", worst_identity);
  sum.add("number_moment_worst_dev", worst_moment);
  out.finish(sum);
  return sum;
}

Summary cmd_vlasov(const RunConfig& cfg) {
  cfg.validate();
  Summary sum;
  const auto pots = cfg.potentials();
  const auto d0 = blob_initial(cfg);
  const auto times = sorted_times(cfg.vlasov_snapshots_time);
  const auto traj = run(d0, pots, cfg.vlasov_T_time, cfg.vlasov_dt_time, times);
  Outputs out(cfg, "vlasov");
  for (std::size_t i = 0; i < traj.snapshots.size(); ++i)
    save_distribution(out.path("vlasov_" + std::to_string(i) + ".v2s"), traj.snapshots[i]);
  {
    CsvWriter csv(out.path("conservation.csv"), {"t", "mass1", "mass2", "momentum", "energy", "clipped_mass"});
    for (const auto& r : traj.log) {
      csv << r.t << r.c.mass1 << r.c.mass2 << r.c.momentum << r.c.energy << r.clipped_mass;
      csv.end_row();
    }
  }
  const auto& first = traj.log.front().c;
  double mass_step = 0.0, mom = 0.0, en = 0.0;
  const double mass0 = first.mass1 + first.mass2;
  const double mom_scale = std::max(std::abs(first.momentum), mass0 * cfg.vlasov_sp_momentum);
  for (std::size_t i = 1; i < traj.log.size(); ++i) {
    const auto& a = traj.log[i - 1].c;
    const auto& b = traj.log[i].c;
    mass_step = std::max(mass_step, std::abs(b.mass1 + b.mass2 - a.mass1 - a.mass2) / mass0);
    mom = std::max(mom, std::abs(b.momentum - first.momentum) / mom_scale);
    en = std::max(en, std::abs(b.energy - first.energy) / std::abs(first.energy));
  }
  sum.add("steps", static_cast<double>(traj.log.size() - 1));
  sum.add("mass_drift_per_step", mass_step);
  sum.add("momentum_drift", mom);
  sum.add("energy_drift", en);
  if (pots.all_zero()) {
    // exact answer by index shifts when every p row moves a whole number of cells
    const auto& g = d0.grid;
    const double T = cfg.vlasov_T_time;
    const long n = T == 0.0 ? 0 : static_cast<long>(std::ceil(T / cfg.vlasov_dt_time - 1e-9));
    bool aligned = n > 0;
    for (int j = 0; j < g.np && aligned; ++j) {
      const double s = (g.p0 + j * g.dp) * 0.5 * T / n / g.dq;  // cells per half step
      aligned = std::abs(s - std::nearbyint(s)) < 1e-9;
    }
    if (aligned) {
      const auto fin = run(d0, pots, T, cfg.vlasov_dt_time, {T}).snapshots.front();
      bool exact = true;
      for (int i = 0; i < g.nq; ++i)
        for (int j = 0; j < g.np; ++j) {
          const long s = std::lround((g.p0 + j * g.dp) * T / g.dq);
          const long src = ((i - s) % g.nq + g.nq) % g.nq;
          const std::size_t a = static_cast<std::size_t>(i) * g.np + j, b = static_cast<std::size_t>(src) * g.np + j;
          exact = exact && fin.m1[a] == d0.m1[b] && fin.m2[a] == d0.m2[b];
        }
      sum.flag("aligned_advection_exact", exact);
    } else {
      sum.add("aligned_advection_exact", "not_aligned");
    }
  }
  if (cfg.vlasov_convergence) {
    const double T = cfg.vlasov_T_time, dt = cfg.vlasov_dt_time;
    const auto a = run(d0, pots, T, dt, {T}).snapshots.front();
    const auto b = run(d0, pots, T, dt / 2, {T}).snapshots.front();
    const auto c = run(d0, pots, T, dt / 4, {T}).snapshots.front();
    const double ratio = l1_distance(a, b) / l1_distance(b, c);
    sum.add("dt_convergence_ratio", ratio);
    sum.flag("dt_order2", std::abs(ratio - 4.0) <= 0.3 * 4.0);
  }
  out.finish(sum);
  return sum;
}

Summary cmd_compare(const RunConfig& cfg) {
  cfg.validate();
  Summary sum;
  std::vector<ComparisonRow> rows;
  if (cfg.compare_mode == "vlasov_self") {
    const auto d0 = blob_initial(cfg);
    const auto times = sorted_times(cfg.vlasov_snapshots_time);
    const auto a = run(d0, cfg.potentials(), cfg.vlasov_T_time, cfg.vlasov_dt_time, times);
    const auto b = run(d0, cfg.potentials(), cfg.vlasov_T_time, cfg.vlasov_dt_time, times);
    for (std::size_t i = 0; i < a.snapshots.size(); ++i) {
      const SpeciesMeasures x{times[i], d0.grid, a.snapshots[i].m1, a.snapshots[i].m2};
      const SpeciesMeasures y{times[i], d0.grid, b.snapshots[i].m1, b.snapshots[i].m2};
      const auto [w1, w2] = species_w1(x, y, cfg.compare_blocks_q, cfg.compare_blocks_p);
      rows.push_back({times[i], w1, w2, cfg.scaling.N(), cfg.scaling.hbar()});
    }
  } else if (cfg.compare_sweep_N.empty()) {
    rows = compare_quantum_vlasov(cfg);
  } else {
    std::vector<double> terminal;
    for (int N : cfg.compare_sweep_N) {
      const auto r = compare_quantum_vlasov(config_for_N(cfg, N));
      terminal.push_back(r.back().w1_species1);
      sum.add("terminal_w1_N" + std::to_string(N), r.back().w1_species1);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    bool mono = true;
    for (std::size_t i = 1; i < terminal.size(); ++i) mono = mono && terminal[i] < terminal[i - 1];
    sum.flag("terminal_w1_monotone", mono);
  }
  Outputs out(cfg, "compare");
  CsvWriter csv(out.path("compare.csv"), {"t", "W1_species1", "W1_species2", "N", "hbar"});
  double worst = 0.0;
  for (const auto& r : rows) {
    csv << r.t << r.w1_species1 << r.w1_species2 << r.N << r.hbar;
    csv.end_row();
    worst = std::max({worst, r.w1_species1, r.w1_species2});
  }
  sum.add("rows", static_cast<double>(rows.size()));
  sum.add("max_w1", worst);
  out.finish(sum);
  return sum;
}

Summary cmd_hierarchy(const RunConfig& cfg) {
  Summary sum;
  const QuantumRun qr(cfg, true);
  Outputs out(cfg, "hierarchy");
  const double t = cfg.hierarchy_t_time, h = cfg.hierarchy_h_time;
  const auto st = qr.states({t - h, t, t + h});
  CsvWriter cons(out.path("consistency.csv"), {"k", "l", "gap", "gap_without", "scale", "remainder_weak"});
  CsvWriter rem(out.path("remainders.csv"), {"k", "l", "name", "weak", "l1"});
  CsvWriter col(out.path("collisions.csv"), {"k", "l", "name", "slot", "weak", "l1"});
  double worst_gap = 0.0, collision_norm = 0.0;
  bool gap_grows = true;
  for (auto [k, l] : cfg.hierarchy_orders) {
    const auto c = bbgky_consistency(*qr.space, st[0], st[1], st[2], h, *qr.fam, qr.grid, k, l, qr.pots);
    cons << k << l << c.gap << c.gap_without << c.scale << c.remainder_weak;
    cons.end_row();
    worst_gap = std::max(worst_gap, c.gap);
    gap_grows = gap_grows && c.gap_without > c.gap;
    const auto r = quantum_remainders(*qr.space, st[1], *qr.fam, qr.grid, k, l, qr.pots);
    for (const auto& n : r.norms) {
      rem << k << l << n.name << n.weak << n.l1;
      rem.end_row();
    }
    const int slots = k + l;
    for (const auto& term : r.collisions) {
      double weak = 0.0, l1 = 0.0;
      for (int b = 0; b < TestBattery::kSize; ++b) weak = std::max(weak, std::abs(weak_pairing(term, qr.grid, slots, b)));
      for (double v : term.values) l1 += std::abs(v);
      l1 *= std::pow(qr.grid.weight() / (2 * kPi), slots);
      col << k << l << term.name << term.slot << weak << l1;
      col.end_row();
      collision_norm = std::max({collision_norm, weak, l1});
    }
  }
  // limit hierarchy residual on the Vlasov solution of the blob data
  CsvWriter fac(out.path("factorized_residual.csv"), {"k", "l", "residual"});
  const auto d0 = blob_initial(cfg);
  const auto mid = run(d0, qr.pots, t, cfg.vlasov_dt_time, {t}).snapshots.front();
  double worst_fac = 0.0;
  for (auto [k, l] : std::vector<std::pair<int, int>>{{1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}}) {
    const auto r = factorized_residual(mid, qr.pots, k, l, 1e-3);
    fac << k << l << r.residual;
    fac.end_row();
    worst_fac = std::max(worst_fac, r.residual);
  }
  sum.add("consistency_worst_gap", worst_gap);
  sum.flag("gap_grows_without_remainders", gap_grows);
  sum.add("collision_max_norm", collision_norm);
  sum.flag("collisions_zero", collision_norm == 0.0);
  sum.add("factorized_worst_residual", worst_fac);
  out.finish(sum);
  return sum;
}

Summary cmd_picard(const RunConfig& cfg) {
  cfg.validate();
  Summary sum;
  const auto pots = cfg.potentials();
  const FourierGrid fg{cfg.picard_xi_max, cfg.picard_nodes};
  fg.validate();
  const int L = cfg.picard_L;
  auto pc = picard_config(pots, fg, cfg.picard_t_time, L + 1);  // BandLimitRequired / InvalidInput
  const double t = cfg.picard_t_time;
  if (t > pc.horizon) throw InvalidInput("picard.t_time exceeds the horizon tau");
  const double B = pc.constants.B;
  const double eta_half = cfg.picard_xi_max + (L + 1) * B + 0.5;
  const double xi_half = cfg.picard_xi_max + (L + 1) * B * t + eta_half * t + 0.5;
  const double spacing = 0.05;
  const auto d0 = blob_initial(cfg);
  const OneParticleChar c1(d0.m1, d0.grid, cfg.scaling.n1(), xi_half, eta_half, spacing);
  const OneParticleChar c2(d0.m2, d0.grid, cfg.scaling.n2(), xi_half, eta_half, spacing);
  const FactorizedSource src(cfg.scaling.N1 > 0 ? &c1 : nullptr, cfg.scaling.N2 > 0 ? &c2 : nullptr, 0.0);
  const int k = cfg.scaling.N1 > 0 ? 1 : 0;
  const auto probes = probe_box(fg, 1);
  const auto res = picard_iterate(src, k, 1 - k, probes, pc, pots, cfg.scaling);
  Outputs out(cfg, "picard");
  CsvWriter csv(out.path("picard_bound.csv"), {"L", "measured_difference", "bound", "within"});
  bool within = true;
  for (int depth = 1; depth <= L; ++depth) {
    auto cl = pc;
    cl.depth = depth;
    const double meas = res.term_sup(depth);
    const double bound = delta_L_bound(cl, k, 1 - k);
    csv << depth << meas << bound << std::string(meas <= bound ? "true" : "false");
    csv.end_row();
    within = within && meas <= bound;
  }
  // Vlasov characteristic function at t in the interaction picture
  const auto dT = run(d0, pots, t, cfg.vlasov_dt_time, {t}).snapshots.front();
  const OneParticleChar cT(dT.species(k == 1 ? 1 : 2), dT.grid, k == 1 ? cfg.scaling.n1() : cfg.scaling.n2(),
                           cfg.picard_xi_max * (1 + t) + 0.5, cfg.picard_xi_max + 0.5, spacing);
  double match = 0.0;
  for (std::size_t p = 0; p < probes.size(); ++p)
    match = std::max(match, std::abs(res.sum[p] - cT.at(probes[p][0], probes[p][1], t)));
  sum.add("horizon_tau", pc.horizon);
  sum.add("eta_quadrature_error", res.eta_quadrature_error);
  sum.flag("differences_within_bound", within);
  sum.add("vlasov_match_sup", match);
  out.finish(sum);
  return sum;
}

}  // namespace v2s
