#include "app/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "mfg_lqg/errors.hpp"

namespace mfg_lqg::app {

using nlohmann::json;

namespace {

std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config: `" + path + "` " + what);
}

// Object with a fixed key set; unknown keys are rejected on construction.
class Section {
 public:
  Section(const json& j, std::string path,
          std::initializer_list<const char*> allowed)
      : j_(j), path_(std::move(path)) {
    if (!j.is_object()) fail(path_.empty() ? "<root>" : path_, "must be an object");
    for (const auto& item : j.items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || item.key() == a;
      if (!ok) {
        throw ConfigError("config: unknown key `" + child(item.key()) + "`");
      }
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  std::string child(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  const json& required(const char* key) const {
    if (!j_.contains(key)) {
      throw ConfigError("config: missing required field `" + child(key) + "`");
    }
    return j_.at(key);
  }
  const json& at(const char* key) const { return j_.at(key); }

 private:
  const json& j_;
  std::string path_;
};

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "must be finite");
  return v;
}

std::int64_t integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "must be an integer");
  return j.get<std::int64_t>();
}

bool boolean(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "must be true or false");
  return j.get<bool>();
}

int depth(const json& j) {
  int d = 0;
  const json* cur = &j;
  while (cur->is_array() && !cur->empty()) {
    ++d;
    cur = &cur->front();
  }
  return d;
}

VectorXd vector_of(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty() || depth(j) != 1) {
    fail(path, "must be a non-empty array of numbers");
  }
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) =
        number(j[i], path + "[" + std::to_string(i) + "]");
  }
  return v;
}

MatrixXd matrix_of(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty() || depth(j) != 2) {
    fail(path, "must be a matrix (array of equal-length rows of numbers)");
  }
  const std::size_t cols = j.front().size();
  MatrixXd m(static_cast<Eigen::Index>(j.size()),
             static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const std::string rp = path + "[" + std::to_string(r) + "]";
    if (!j[r].is_array() || j[r].size() != cols) {
      fail(rp, "must have " + std::to_string(cols) + " entries");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          number(j[r][c], rp + "[" + std::to_string(c) + "]");
    }
  }
  return m;
}

void expect_shape(const MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                  const std::string& path) {
  if (m.rows() != rows || m.cols() != cols) {
    fail(path, "must be " + shape_str(rows, cols) + ", got " +
                   shape_str(m.rows(), m.cols()));
  }
}

// n-vector, constant or sampled at every grid node.
GridFunction grid_vector(const json& j, const std::string& path,
                         const TimeGrid& grid, Eigen::Index n) {
  const int d = depth(j);
  if (d == 1) {
    const VectorXd v = vector_of(j, path);
    expect_shape(v, n, 1, path);
    return GridFunction::constant(grid, v);
  }
  if (d == 2) {
    if (static_cast<int>(j.size()) != grid.num_nodes()) {
      fail(path, "sampled values need one entry per grid node (" +
                     std::to_string(grid.num_nodes()) + ")");
    }
    std::vector<MatrixXd> values;
    for (std::size_t i = 0; i < j.size(); ++i) {
      const std::string ip = path + "[" + std::to_string(i) + "]";
      const VectorXd v = vector_of(j[i], ip);
      expect_shape(v, n, 1, ip);
      values.emplace_back(v);
    }
    return GridFunction(grid, std::move(values));
  }
  fail(path, "must be a vector or an array of per-node vectors");
}

// n x r matrix, constant or sampled at every grid node.
GridFunction grid_matrix(const json& j, const std::string& path,
                         const TimeGrid& grid, Eigen::Index n) {
  const int d = depth(j);
  if (d == 2) {
    const MatrixXd m = matrix_of(j, path);
    expect_shape(m, n, m.cols(), path);
    return GridFunction::constant(grid, m);
  }
  if (d == 3) {
    if (static_cast<int>(j.size()) != grid.num_nodes()) {
      fail(path, "sampled values need one entry per grid node (" +
                     std::to_string(grid.num_nodes()) + ")");
    }
    std::vector<MatrixXd> values;
    for (std::size_t i = 0; i < j.size(); ++i) {
      const std::string ip = path + "[" + std::to_string(i) + "]";
      MatrixXd m = matrix_of(j[i], ip);
      if (!values.empty()) {
        expect_shape(m, n, values.front().cols(), ip);
      } else {
        expect_shape(m, n, m.cols(), ip);
      }
      values.push_back(std::move(m));
    }
    return GridFunction(grid, std::move(values));
  }
  fail(path, "must be a matrix or an array of per-node matrices");
}

MatrixXd square(const Section& s, const char* key, Eigen::Index n) {
  const MatrixXd m = matrix_of(s.required(key), s.child(key));
  expect_shape(m, n, n, s.child(key));
  return m;
}

MatrixXd square_or_zero(const Section& s, const char* key, Eigen::Index n) {
  return s.has(key) ? square(s, key, n) : MatrixXd::Zero(n, n);
}

MatrixXd shaped_or_zero(const Section& s, const char* key, Eigen::Index r,
                        Eigen::Index c) {
  if (!s.has(key)) return MatrixXd::Zero(r, c);
  const MatrixXd m = matrix_of(s.at(key), s.child(key));
  expect_shape(m, r, c, s.child(key));
  return m;
}

VectorXd vector_or_zero(const Section& s, const char* key, Eigen::Index n) {
  if (!s.has(key)) return VectorXd::Zero(n);
  const VectorXd v = vector_of(s.at(key), s.child(key));
  expect_shape(v, n, 1, s.child(key));
  return v;
}

GridFunction drift_or_zero(const Section& s, const char* key,
                           const TimeGrid& grid, Eigen::Index n) {
  if (!s.has(key)) return GridFunction::constant(grid, VectorXd::Zero(n));
  return grid_vector(s.at(key), s.child(key), grid, n);
}

GridFunction noise_or_zero(const Section& s, const char* key,
                           const TimeGrid& grid, Eigen::Index n) {
  if (!s.has(key)) return GridFunction::constant(grid, MatrixXd::Zero(n, n));
  return grid_matrix(s.at(key), s.child(key), grid, n);
}

// State dimension from A, control dimension from B.
void dims(const Section& s, Eigen::Index& n, Eigen::Index& m) {
  const MatrixXd a = matrix_of(s.required("A"), s.child("A"));
  if (a.rows() != a.cols()) fail(s.child("A"), "must be square");
  n = a.rows();
  const MatrixXd b = matrix_of(s.required("B"), s.child("B"));
  if (b.rows() != n) {
    fail(s.child("B"), "must have " + std::to_string(n) + " rows");
  }
  m = b.cols();
}

std::vector<int> int_list(const json& j, const std::string& path, int min) {
  if (!j.is_array() || j.empty()) fail(path, "must be a non-empty array");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string ip = path + "[" + std::to_string(i) + "]";
    const std::int64_t v = integer(j[i], ip);
    if (v < min || v > 1000000) {
      fail(ip, "must be an integer >= " + std::to_string(min));
    }
    out.push_back(static_cast<int>(v));
  }
  return out;
}

TimeGrid parse_horizon(const json& doc) {
  if (!doc.contains("horizon")) return TimeGrid();
  const Section h(doc.at("horizon"), "horizon", {"T", "steps"});
  const double t = h.has("T") ? number(h.at("T"), "horizon.T") : 1.0;
  const std::int64_t steps =
      h.has("steps") ? integer(h.at("steps"), "horizon.steps") : 400;
  if (!(t > 0.0)) fail("horizon.T", "must be positive");
  if (steps < 1 || steps > 10000000) fail("horizon.steps", "must be >= 1");
  return TimeGrid(t, static_cast<int>(steps));
}

LqgProblem parse_lqg(const json& j, const TimeGrid& grid, double rho) {
  const Section s(j, "lqg",
                  {"A", "B", "b", "sigma", "Qhat", "Q", "N", "R", "eta", "n",
                   "x0"});
  Eigen::Index n = 0, m = 0;
  dims(s, n, m);
  LqgProblem p;
  p.grid = grid;
  p.rho = rho;
  p.A = matrix_of(s.at("A"), "lqg.A");
  p.B = matrix_of(s.at("B"), "lqg.B");
  p.Q = square(s, "Q", n);
  p.R = square(s, "R", m);
  p.Qhat = square_or_zero(s, "Qhat", n);
  p.N_cross = shaped_or_zero(s, "N", n, m);
  p.eta = vector_or_zero(s, "eta", n);
  p.n_lin = vector_or_zero(s, "n", m);
  p.x0 = vector_or_zero(s, "x0", n);
  p.b = drift_or_zero(s, "b", grid, n);
  p.sigma = noise_or_zero(s, "sigma", grid, n);
  return p;
}

MajorParams parse_major(const json& j, const TimeGrid& grid, Eigen::Index& n,
                        Eigen::Index& m) {
  const Section s(j, "major",
                  {"A", "F", "B", "b", "sigma", "Qhat", "Q", "N", "R", "H",
                   "eta"});
  dims(s, n, m);
  MajorParams mj;
  mj.A = matrix_of(s.at("A"), "major.A");
  mj.B = matrix_of(s.at("B"), "major.B");
  mj.F = square_or_zero(s, "F", n);
  mj.Q = square(s, "Q", n);
  mj.R = square(s, "R", m);
  mj.Qhat = square_or_zero(s, "Qhat", n);
  mj.N = shaped_or_zero(s, "N", n, m);
  mj.H = square_or_zero(s, "H", n);
  mj.eta = vector_or_zero(s, "eta", n);
  mj.b = drift_or_zero(s, "b", grid, n);
  mj.sigma = noise_or_zero(s, "sigma", grid, n);
  return mj;
}

MinorTypeParams parse_minor(const json& j, const std::string& path,
                            const TimeGrid& grid, Eigen::Index n,
                            Eigen::Index m) {
  const Section s(j, path,
                  {"A", "F", "G", "B", "b", "sigma", "Qhat", "Q", "N", "R",
                   "H", "Hhat", "eta"});
  MinorTypeParams mk;
  mk.A = square(s, "A", n);
  mk.B = matrix_of(s.required("B"), s.child("B"));
  expect_shape(mk.B, n, m, s.child("B"));
  mk.F = square_or_zero(s, "F", n);
  mk.G = square_or_zero(s, "G", n);
  mk.Q = square(s, "Q", n);
  mk.R = square(s, "R", m);
  mk.Qhat = square_or_zero(s, "Qhat", n);
  mk.N = shaped_or_zero(s, "N", n, m);
  mk.H = square_or_zero(s, "H", n);
  mk.Hhat = square_or_zero(s, "Hhat", n);
  mk.eta = vector_or_zero(s, "eta", n);
  mk.b = drift_or_zero(s, "b", grid, n);
  mk.sigma = noise_or_zero(s, "sigma", grid, n);
  return mk;
}

MmMfgProblem parse_game(const json& doc, const TimeGrid& grid, double rho) {
  MmMfgProblem p;
  p.grid = grid;
  p.rho = rho;
  Eigen::Index n = 0, m = 0;
  p.major = parse_major(doc.at("major"), grid, n, m);

  if (!doc.contains("minor_types")) {
    throw ConfigError("config: missing required field `minor_types`");
  }
  const json& types = doc.at("minor_types");
  if (!types.is_array() || types.empty()) {
    fail("minor_types", "must be a non-empty array of objects");
  }
  for (std::size_t k = 0; k < types.size(); ++k) {
    p.minors.push_back(parse_minor(
        types[k], "minor_types[" + std::to_string(k) + "]", grid, n, m));
  }

  const int K = p.K();
  if (doc.contains("pi")) {
    p.pi = vector_of(doc.at("pi"), "pi");
    if (p.pi.size() != K) {
      fail("pi", "must have one entry per minor type (" + std::to_string(K) +
                     ")");
    }
    if (p.pi.minCoeff() < 0.0 || std::abs(p.pi.sum() - 1.0) > 1e-9) {
      fail("pi", "must be a probability vector (nonnegative, summing to 1)");
    }
  } else if (K == 1) {
    p.pi = VectorXd::Ones(1);
  } else {
    throw ConfigError("config: missing required field `pi`");
  }

  p.initial_mean = VectorXd::Zero(n);
  if (doc.contains("initial_mean")) {
    p.initial_mean = vector_of(doc.at("initial_mean"), "initial_mean");
    expect_shape(p.initial_mean, n, 1, "initial_mean");
  }
  p.initial_cov = MatrixXd::Zero(n, n);
  if (doc.contains("initial_cov")) {
    p.initial_cov = matrix_of(doc.at("initial_cov"), "initial_cov");
    expect_shape(p.initial_cov, n, n, "initial_cov");
  }
  return p;
}

}  // namespace

RunConfig parse_config(const json& doc) {
  const Section root(doc, "",
                     {"description", "horizon", "rho", "infinite_horizon",
                      "lqg", "major", "minor_types", "pi", "initial_mean",
                      "initial_cov", "solver", "population",
                      "convergence_study", "nash_gap"});
  RunConfig cfg;
  cfg.document = doc;
  if (root.has("description") && !doc.at("description").is_string()) {
    fail("description", "must be a string");
  }
  const TimeGrid grid = parse_horizon(doc);
  const double rho = root.has("rho") ? number(doc.at("rho"), "rho") : 0.0;
  if (rho < 0.0) fail("rho", "must be nonnegative");
  if (root.has("infinite_horizon")) {
    cfg.infinite_horizon = boolean(doc.at("infinite_horizon"), "infinite_horizon");
  }

  const bool has_lqg = root.has("lqg"), has_game = root.has("major");
  if (has_lqg == has_game) {
    throw ConfigError(
        "config: exactly one of `lqg` (single agent) or `major` (game) is "
        "required");
  }
  if (has_lqg) {
    for (const char* key : {"minor_types", "pi", "initial_mean", "initial_cov",
                            "population", "convergence_study", "nash_gap"}) {
      if (root.has(key)) {
        throw ConfigError(std::string("config: `") + key +
                          "` only applies to games");
      }
    }
    cfg.lqg = parse_lqg(doc.at("lqg"), grid, rho);
  } else {
    cfg.game = parse_game(doc, grid, rho);
  }

  if (root.has("solver")) {
    const Section s(doc.at("solver"), "solver", {"damping", "tol", "max_iters"});
    if (s.has("damping")) cfg.solver.damping = number(s.at("damping"), "solver.damping");
    if (s.has("tol")) cfg.solver.tol = number(s.at("tol"), "solver.tol");
    if (s.has("max_iters")) {
      cfg.solver.max_iters =
          static_cast<int>(integer(s.at("max_iters"), "solver.max_iters"));
    }
    check_fixed_point_config(cfg.solver);
  }

  if (root.has("population")) {
    const Section s(doc.at("population"), "population",
                    {"N", "types", "seed", "num_paths", "initial_cov", "xbar0",
                     "write_paths"});
    PopulationConfig& pc = cfg.population;
    if (s.has("N")) {
      const std::int64_t v = integer(s.at("N"), "population.N");
      if (v < 1 || v > 10000000) fail("population.N", "must be >= 1");
      pc.N = static_cast<int>(v);
    }
    if (s.has("types")) {
      // 1-based type labels in the file.
      for (int t : int_list(s.at("types"), "population.types", 1)) {
        if (t > cfg.game->K()) {
          fail("population.types", "labels must lie in 1.." +
                                       std::to_string(cfg.game->K()));
        }
        pc.types.push_back(t - 1);
      }
      if (static_cast<int>(pc.types.size()) != pc.N) {
        fail("population.types", "must have N entries");
      }
    }
    if (s.has("seed")) {
      const json& seed = s.at("seed");
      if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
        fail("population.seed", "must be a nonnegative 64-bit integer");
      }
      pc.master_seed = seed.get<std::uint64_t>();
    }
    if (s.has("num_paths")) {
      const std::int64_t v = integer(s.at("num_paths"), "population.num_paths");
      if (v < 1 || v > 100000000) fail("population.num_paths", "must be >= 1");
      pc.num_paths = static_cast<int>(v);
    }
    const Eigen::Index n = cfg.game->n();
    if (s.has("initial_cov")) {
      pc.initial_cov = matrix_of(s.at("initial_cov"), "population.initial_cov");
      expect_shape(*pc.initial_cov, n, n, "population.initial_cov");
    }
    if (s.has("xbar0")) {
      pc.xbar0 = vector_of(s.at("xbar0"), "population.xbar0");
      expect_shape(*pc.xbar0, cfg.game->nK(), 1, "population.xbar0");
    }
    if (s.has("write_paths")) {
      const std::int64_t v = integer(s.at("write_paths"), "population.write_paths");
      if (v < 0) fail("population.write_paths", "must be >= 0");
      cfg.write_paths = static_cast<int>(v);
    }
  }

  if (root.has("convergence_study")) {
    const Section s(doc.at("convergence_study"), "convergence_study",
                    {"N", "num_paths"});
    cfg.study_N = int_list(s.required("N"), "convergence_study.N", 1);
    if (s.has("num_paths")) {
      const std::int64_t v =
          integer(s.at("num_paths"), "convergence_study.num_paths");
      if (v < 1) fail("convergence_study.num_paths", "must be >= 1");
      cfg.study_paths = static_cast<int>(v);
    }
  }

  if (root.has("nash_gap")) {
    const Section s(doc.at("nash_gap"), "nash_gap", {"N"});
    cfg.gap_N = int_list(s.required("N"), "nash_gap.N", 1);
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path,
                      std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json doc;
  try {
    doc = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  // Single-agent problems have no randomness to seed.
  if (seed_override && doc.is_object() && doc.contains("major")) {
    doc["population"]["seed"] = *seed_override;
  }
  return parse_config(doc);
}

std::uint64_t config_hash(const json& doc) {
  const std::string bytes = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace mfg_lqg::app
