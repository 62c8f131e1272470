#include "ihmm/io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "ihmm/errors.hpp"
#include "ihmm/rng.hpp"

namespace ihmm::io {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const char* const kEventKeys[] = {"user_id", "t",    "y",   "cont", "rcv",  "crep", "rep",
                                  "rnk",     "drnk", "bdg", "tag",  "cbdg", "ctag"};

double num(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_number()) throw DataError(std::string(key) + " is not a number");
  return v.get<double>();
}

void fill3(const json& j, const char* key, std::array<double, 3>& out) {
  const json& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw DataError(std::string(key) + " is not a 3-array");
  for (int i = 0; i < 3; ++i) {
    if (!a[i].is_number()) throw DataError(std::string(key) + " entry is not a number");
    out[i] = a[i].get<double>();
  }
}

std::vector<double> fill_n(const json& j, const char* key, int n) {
  const json& a = j.at(key);
  if (!a.is_array()) throw DataError(std::string(key) + " is not an array");
  if (n >= 0 && static_cast<int>(a.size()) != n)
    throw DataError(std::string(key) + " has length " + std::to_string(a.size()) +
                    ", expected " + std::to_string(n));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) throw DataError(std::string(key) + " entry is not a number");
    out[i] = a[i].get<double>();
  }
  return out;
}

ObservationRecord parse_event_line(const json& j, const CovariateLayout& layout, bool strict) {
  if (!j.is_object()) throw DataError("line is not a JSON object");
  if (strict) {
    for (const auto& item : j.items()) {
      bool known = false;
      for (const char* k : kEventKeys) known = known || item.key() == k;
      if (!known) throw DataError("unknown field '" + item.key() + "'");
    }
  }
  ObservationRecord rec;
  const json& uid = j.at("user_id");
  if (!uid.is_string()) throw DataError("user_id is not a string");
  rec.user_id = uid.get<std::string>();
  const json& jt = j.at("t");
  if (!jt.is_number_integer() || jt.get<long>() < 1)
    throw DataError("t is not a positive integer");
  rec.t = jt.get<long>();
  const json& jy = j.at("y");
  if (!jy.is_number_integer() || (jy.get<int>() != 0 && jy.get<int>() != 1))
    throw DataError("y is not 0 or 1");
  rec.y = jy.get<int>();

  RawEventFields& f = rec.raw;
  f.intercept = 1.0;
  f.day = static_cast<double>((rec.t - 1) % 7) / 6.0;
  f.cont = num(j, "cont");
  f.rcv = num(j, "rcv");
  f.crep = num(j, "crep");
  f.rep = num(j, "rep");
  f.rnk = num(j, "rnk");
  f.drnk = num(j, "drnk");
  fill3(j, "bdg", f.bdg);
  fill3(j, "cbdg", f.cbdg);
  f.tag = fill_n(j, "tag", layout.n_tags);
  f.ctag = fill_n(j, "ctag", layout.n_tags);
  rec.x = build_covariates(f, layout);
  return rec;
}

}  // namespace

std::vector<ObservationRecord> read_events(std::istream& in, CovariateLayout& layout,
                                           const IngestOptions& opts, IngestReport& rep) {
  std::vector<ObservationRecord> out;
  std::map<std::string, long> last_t;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    ++rep.lines;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    std::string err;
    if (j.is_discarded()) {
      err = "invalid JSON";
    } else {
      if (layout.n_tags < 0 && j.is_object() && j.contains("tag") && j["tag"].is_array())
        layout.n_tags = static_cast<int>(j["tag"].size());
      try {
        ObservationRecord rec = parse_event_line(j, layout, opts.strict);
        auto [it, fresh] = last_t.try_emplace(rec.user_id, 0L);
        if (!fresh && rec.t <= it->second) {
          err = "out-of-order t for user " + rec.user_id;
        } else {
          it->second = rec.t;
          out.push_back(std::move(rec));
          ++rep.accepted;
          continue;
        }
      } catch (const std::exception& e) {
        err = e.what();
      }
    }
    std::string msg = "line " + std::to_string(lineno) + ": " + err;
    if (opts.strict) throw DataError(msg);
    ++rep.skipped;
    rep.diagnostics.push_back(msg);
  }
  return out;
}

std::vector<ObservationRecord> read_events_file(const std::string& path, CovariateLayout& layout,
                                                const IngestOptions& opts, IngestReport& rep) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open events file: " + path);
  return read_events(in, layout, opts, rep);
}

void write_events(std::ostream& out, const std::vector<ObservationRecord>& events) {
  for (const ObservationRecord& r : events) {
    ordered_json j;
    j["user_id"] = r.user_id;
    j["t"] = r.t;
    j["y"] = r.y;
    j["cont"] = r.raw.cont;
    j["rcv"] = r.raw.rcv;
    j["crep"] = r.raw.crep;
    j["rep"] = r.raw.rep;
    j["rnk"] = r.raw.rnk;
    j["drnk"] = r.raw.drnk;
    j["bdg"] = r.raw.bdg;
    j["tag"] = r.raw.tag;
    j["cbdg"] = r.raw.cbdg;
    j["ctag"] = r.raw.ctag;
    out << j.dump() << '\n';
  }
}

void write_events_file(const std::string& path, const std::vector<ObservationRecord>& events) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for write: " + path);
  write_events(out, events);
}

std::vector<hier::Demographics> read_demographics(std::istream& in) {
  std::vector<hier::Demographics> out;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("user_id") || !j.contains("D"))
      throw DataError("demographics line " + std::to_string(lineno) + ": bad record");
    hier::Demographics d;
    d.user_id = j["user_id"].get<std::string>();
    std::vector<double> v = fill_n(j, "D", -1);
    d.D = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<hier::Demographics> read_demographics_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open demographics file: " + path);
  return read_demographics(in);
}

void write_demographics(std::ostream& out, const std::vector<hier::Demographics>& demo) {
  for (const hier::Demographics& d : demo) {
    ordered_json j;
    j["user_id"] = d.user_id;
    j["D"] = std::vector<double>(d.D.data(), d.D.data() + d.D.size());
    out << j.dump() << '\n';
  }
}

void write_truth(std::ostream& out, const sim::Population& pop) {
  {
    ordered_json j;
    std::vector<std::vector<double>> delta(pop.truth.delta.rows());
    for (Eigen::Index r = 0; r < pop.truth.delta.rows(); ++r)
      delta[r].assign(pop.truth.delta.row(r).begin(), pop.truth.delta.row(r).end());
    j["delta"] = delta;
    out << j.dump() << '\n';
  }
  for (std::size_t i = 0; i < pop.demographics.size(); ++i) {
    ordered_json j;
    j["user_id"] = pop.demographics[i].user_id;
    j["segment"] = pop.truth.segment[i];
    std::vector<std::vector<double>> gm;
    for (const Eigen::VectorXd& g : pop.truth.gamma[i])
      gm.emplace_back(g.data(), g.data() + g.size());
    j["gamma"] = gm;
    j["D"] = std::vector<double>(pop.demographics[i].D.data(),
                                 pop.demographics[i].D.data() + pop.demographics[i].D.size());
    j["states"] = pop.states[i];
    out << j.dump() << '\n';
  }
}

// ---- checkpoint ----

namespace {

constexpr char kMagic[8] = {'I', 'H', 'M', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t hash_bytes(const char* p, std::size_t n) {
  return fnv1a64(std::string_view(p, n));
}

struct ByteWriter {
  std::string buf;
  void bytes(const void* p, std::size_t n) { buf.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void i64(long v) { u64(static_cast<std::uint64_t>(v)); }
  void i32(int v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  void flag(bool v) { u32(v ? 1u : 0u); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void vec(const Eigen::VectorXd& v) {
    u64(static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v[i]);
  }
  void mat(const Eigen::MatrixXd& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) f64(m(r, c));
  }
  void ivec(const std::vector<int>& v) {
    u64(v.size());
    for (int x : v) i32(x);
  }
  void dvec(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
};

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;
  explicit ByteReader(const std::string& b) : buf(b) {}
  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw CorruptCheckpoint("checkpoint truncated");
  }
  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  long i64() { return static_cast<long>(u64()); }
  int i32() { return static_cast<int>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool flag() { return u32() != 0; }
  std::string str() {
    std::uint64_t n = u64();
    need(n);
    std::string s(buf.data() + pos, n);
    pos += n;
    return s;
  }
  std::size_t count(std::uint64_t n, std::size_t elem_bytes) {
    if (n > (buf.size() - pos) / elem_bytes + 1) throw CorruptCheckpoint("bad element count");
    return static_cast<std::size_t>(n);
  }
  Eigen::VectorXd vec() {
    std::size_t n = count(u64(), 8);
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = f64();
    return v;
  }
  Eigen::MatrixXd mat() {
    std::size_t r = count(u64(), 8);
    std::size_t c = count(u64(), 8);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (std::size_t j = 0; j < c; ++j)
      for (std::size_t i = 0; i < r; ++i)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f64();
    return m;
  }
  std::vector<int> ivec() {
    std::size_t n = count(u64(), 4);
    std::vector<int> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i32();
    return v;
  }
  std::vector<double> dvec() {
    std::size_t n = count(u64(), 8);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = f64();
    return v;
  }
};

void put_hp(ByteWriter& w, const HyperParams& hp) {
  w.f64(hp.a_lambda);
  w.f64(hp.b_lambda);
  w.f64(hp.a_alpha);
  w.f64(hp.b_alpha);
  w.vec(hp.mu_lambda0);
  w.mat(hp.sigma_lambda0);
  w.f64(hp.a_v0);
  w.f64(hp.b_v0);
  w.vec(hp.nw_mean0);
  w.f64(hp.nw_beta0);
  w.f64(hp.nw_dof0);
  w.mat(hp.nw_scale0);
  w.mat(hp.mu_delta0);
  w.f64(hp.var_delta0);
  w.i32(hp.particles);
  w.i32(hp.k_trunc);
  w.i64(hp.barrier_period);
  w.u64(hp.seed);
  w.flag(hp.fidelity_weights);
  w.flag(hp.systematic_resample);
}

HyperParams get_hp(ByteReader& r) {
  HyperParams hp;
  hp.a_lambda = r.f64();
  hp.b_lambda = r.f64();
  hp.a_alpha = r.f64();
  hp.b_alpha = r.f64();
  hp.mu_lambda0 = r.vec();
  hp.sigma_lambda0 = r.mat();
  hp.a_v0 = r.f64();
  hp.b_v0 = r.f64();
  hp.nw_mean0 = r.vec();
  hp.nw_beta0 = r.f64();
  hp.nw_dof0 = r.f64();
  hp.nw_scale0 = r.mat();
  hp.mu_delta0 = r.mat();
  hp.var_delta0 = r.f64();
  hp.particles = r.i32();
  hp.k_trunc = r.i32();
  hp.barrier_period = r.i64();
  hp.seed = r.u64();
  hp.fidelity_weights = r.flag();
  hp.systematic_resample = r.flag();
  return hp;
}

void put_stats(ByteWriter& w, const conj::SufficientStats& st) {
  w.i64(st.n);
  w.mat(st.Sxx);
  w.vec(st.SxU);
  w.vec(st.xbar);
  w.f64(st.ubar);
  w.mat(st.cxx);
  w.vec(st.cxu);
  w.f64(st.cuu);
}

conj::SufficientStats get_stats(ByteReader& r) {
  conj::SufficientStats st;
  st.n = r.i64();
  st.Sxx = r.mat();
  st.SxU = r.vec();
  st.xbar = r.vec();
  st.ubar = r.f64();
  st.cxx = r.mat();
  st.cxu = r.vec();
  st.cuu = r.f64();
  return st;
}

void put_particle(ByteWriter& w, const Particle& p) {
  w.i32(p.s);
  w.i32(p.L);
  w.mat(p.n);
  w.vec(p.beta);
  w.f64(p.alpha);
  w.f64(p.lambda);
  w.u64(p.gamma.size());
  for (const Eigen::VectorXd& v : p.gamma) w.vec(v);
  w.u64(p.Lambda.size());
  for (const Eigen::VectorXd& v : p.Lambda) w.vec(v);
  w.ivec(p.c);
  w.u64(p.stats.size());
  for (const conj::SufficientStats& st : p.stats) put_stats(w, st);
  w.mat(p.aux.m);
  w.f64(p.aux.phi);
  w.vec(p.aux.g);
  w.vec(p.aux.h);
  w.f64(p.aux.u);
  w.i32(p.aux.z);
  w.f64(p.aux.du);
  w.f64(p.aux.eu);
}

Particle get_particle(ByteReader& r) {
  Particle p;
  p.s = r.i32();
  p.L = r.i32();
  p.n = r.mat();
  p.beta = r.vec();
  p.alpha = r.f64();
  p.lambda = r.f64();
  p.gamma.resize(r.count(r.u64(), 16));
  for (Eigen::VectorXd& v : p.gamma) v = r.vec();
  p.Lambda.resize(r.count(r.u64(), 16));
  for (Eigen::VectorXd& v : p.Lambda) v = r.vec();
  p.c = r.ivec();
  p.stats.resize(r.count(r.u64(), 16));
  for (conj::SufficientStats& st : p.stats) st = get_stats(r);
  p.aux.m = r.mat();
  p.aux.phi = r.f64();
  p.aux.g = r.vec();
  p.aux.h = r.vec();
  p.aux.u = r.f64();
  p.aux.z = r.i32();
  p.aux.du = r.f64();
  p.aux.eu = r.f64();
  return p;
}

void put_cloud(ByteWriter& w, const pf::ParticleCloud& c) {
  w.str(c.user_id);
  w.u64(c.user_hash);
  w.i64(c.t);
  w.vec(c.delta_shift);
  w.u64(c.particles.size());
  for (const Particle& p : c.particles) put_particle(w, p);
}

pf::ParticleCloud get_cloud(ByteReader& r) {
  pf::ParticleCloud c;
  c.user_id = r.str();
  c.user_hash = r.u64();
  c.t = r.i64();
  c.delta_shift = r.vec();
  c.particles.resize(r.count(r.u64(), 64));
  for (Particle& p : c.particles) p = get_particle(r);
  return c;
}

void put_vp(ByteWriter& w, const vb::VariationalPosterior& vp) {
  w.i32(vp.K);
  w.mat(vp.phi);
  w.vec(vp.gamma1);
  w.vec(vp.gamma2);
  w.u64(vp.m.size());
  for (const Eigen::VectorXd& v : vp.m) w.vec(v);
  w.vec(vp.beta);
  w.vec(vp.a);
  w.u64(vp.B.size());
  for (const Eigen::MatrixXd& m : vp.B) w.mat(m);
  w.f64(vp.a_v);
  w.f64(vp.b_v);
  w.dvec(vp.elbo_trace);
}

vb::VariationalPosterior get_vp(ByteReader& r) {
  vb::VariationalPosterior vp;
  vp.K = r.i32();
  vp.phi = r.mat();
  vp.gamma1 = r.vec();
  vp.gamma2 = r.vec();
  vp.m.resize(r.count(r.u64(), 16));
  for (Eigen::VectorXd& v : vp.m) v = r.vec();
  vp.beta = r.vec();
  vp.a = r.vec();
  vp.B.resize(r.count(r.u64(), 16));
  for (Eigen::MatrixXd& m : vp.B) m = r.mat();
  vp.a_v = r.f64();
  vp.b_v = r.f64();
  vp.elbo_trace = r.dvec();
  return vp;
}

void put_delta(ByteWriter& w, const hier::DeltaPosterior& d) {
  w.mat(d.mean);
  w.mat(d.var);
  w.u64(d.cov_chol.size());
  for (const Eigen::MatrixXd& m : d.cov_chol) w.mat(m);
}

hier::DeltaPosterior get_delta(ByteReader& r) {
  hier::DeltaPosterior d;
  d.mean = r.mat();
  d.var = r.mat();
  d.cov_chol.resize(r.count(r.u64(), 16));
  for (Eigen::MatrixXd& m : d.cov_chol) m = r.mat();
  return d;
}

}  // namespace

void checkpoint_save(const std::string& path, const CheckpointState& st) {
  ByteWriter w;
  put_hp(w, st.hp);
  w.i32(st.layout.n_tags);
  w.f64(st.layout.cont_mean);
  w.f64(st.layout.rcv_mean);
  w.i64(st.global_t);
  w.i64(st.barrier_count);
  w.flag(st.vb_valid);
  if (st.vb_valid) put_vp(w, st.vp);
  w.flag(st.delta_valid);
  if (st.delta_valid) put_delta(w, st.delta);
  w.u64(st.clouds.size());
  for (const pf::ParticleCloud& c : st.clouds) put_cloud(w, c);
  w.u64(st.demo.size());
  for (const Eigen::VectorXd& d : st.demo) w.vec(d);
  w.dvec(st.total_lp);
  w.dvec(st.last_ess);
  w.u64(st.barrier_log.size());
  for (const BarrierRow& b : st.barrier_log) {
    w.i64(b.index);
    w.i64(b.tick);
    w.f64(b.elbo);
    w.i32(b.clusters);
    w.i32(b.rows);
  }
  w.u64(st.diagnostics.size());
  for (const std::string& s : st.diagnostics) w.str(s);

  std::string file;
  file.append(kMagic, 8);
  std::uint32_t ver = kVersion;
  file.append(reinterpret_cast<const char*>(&ver), 4);
  file += w.buf;
  std::uint64_t h = hash_bytes(w.buf.data(), w.buf.size());
  file.append(reinterpret_cast<const char*>(&h), 8);

  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for write: " + tmp);
    out.write(file.data(), static_cast<std::streamsize>(file.size()));
    if (!out) throw DataError("short write: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

CheckpointState checkpoint_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string file = ss.str();

  if (file.size() < 8 + 4 + 8) throw CorruptCheckpoint("checkpoint too small");
  if (std::memcmp(file.data(), kMagic, 8) != 0) throw CorruptCheckpoint("bad checkpoint magic");
  std::uint32_t ver;
  std::memcpy(&ver, file.data() + 8, 4);
  if (ver != kVersion)
    throw CorruptCheckpoint("unsupported checkpoint version " + std::to_string(ver));
  std::uint64_t stored;
  std::memcpy(&stored, file.data() + file.size() - 8, 8);
  std::string payload = file.substr(12, file.size() - 20);
  if (hash_bytes(payload.data(), payload.size()) != stored)
    throw CorruptCheckpoint("checkpoint content hash mismatch");

  ByteReader r(payload);
  CheckpointState st;
  st.hp = get_hp(r);
  st.layout.n_tags = r.i32();
  st.layout.cont_mean = r.f64();
  st.layout.rcv_mean = r.f64();
  st.global_t = r.i64();
  st.barrier_count = r.i64();
  st.vb_valid = r.flag();
  if (st.vb_valid) st.vp = get_vp(r);
  st.delta_valid = r.flag();
  if (st.delta_valid) st.delta = get_delta(r);
  st.clouds.resize(r.count(r.u64(), 64));
  for (pf::ParticleCloud& c : st.clouds) c = get_cloud(r);
  st.demo.resize(r.count(r.u64(), 8));
  for (Eigen::VectorXd& d : st.demo) d = r.vec();
  st.total_lp = r.dvec();
  st.last_ess = r.dvec();
  st.barrier_log.resize(r.count(r.u64(), 32));
  for (BarrierRow& b : st.barrier_log) {
    b.index = r.i64();
    b.tick = r.i64();
    b.elbo = r.f64();
    b.clusters = r.i32();
    b.rows = r.i32();
  }
  st.diagnostics.resize(r.count(r.u64(), 8));
  for (std::string& s : st.diagnostics) s = r.str();
  if (r.pos != payload.size()) throw CorruptCheckpoint("trailing bytes in checkpoint");
  return st;
}

}  // namespace ihmm::io
