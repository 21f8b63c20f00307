#include "lqdelay/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "lqdelay/transfer_function.hpp"

namespace lqd {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ParseError((where.empty() ? std::string("/") : where) + ": " + what);
}

const Json& require(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object()) fail(where, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) fail(where, std::string("missing field '") + key + "'");
  return *it;
}

double number(const Json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  return j.get<double>();
}

double number_or(const Json& j, const char* key, double fallback,
                 const std::string& where) {
  const auto it = j.find(key);
  return it == j.end() ? fallback : number(*it, where + "/" + key);
}

std::vector<double> coefficients(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) fail(where, "expected a coefficient list");
  // A list of lists is a product of factors.
  if (j.front().is_array()) {
    std::vector<double> out{1.0};
    for (std::size_t i = 0; i < j.size(); ++i) {
      out = poly_multiply(
          out, coefficients(j[i], where + "/" + std::to_string(i)));
    }
    return out;
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(number(j[i], where + "/" + std::to_string(i)));
  }
  return out;
}

void check_schema(const Json& j, const std::string& where) {
  const auto it = j.find("schema_version");
  if (it == j.end()) return;
  if (!it->is_number_integer() || it->get<int>() != kSchemaVersion) {
    fail(where + "/schema_version",
         "unsupported schema version (expected " +
             std::to_string(kSchemaVersion) + ")");
  }
}

SisoDelayChannel channel_from_json(const Json& j, const std::string& where) {
  if (!j.is_object()) fail(where, "expected a channel object");
  const double delay = number_or(j, "delay", 0.0, where);
  try {
    if (j.contains("num") || j.contains("den")) {
      TransferFunction tf{coefficients(require(j, "num", where), where + "/num"),
                          coefficients(require(j, "den", where), where + "/den"),
                          delay};
      return tf_realize(tf);
    }
    SisoDelayChannel ch;
    ch.a_c = matrix_from_json(require(j, "a", where), where + "/a");
    ch.b_c = matrix_from_json(require(j, "b", where), where + "/b");
    ch.c_c = matrix_from_json(require(j, "c", where), where + "/c");
    ch.d_c = number_or(j, "d", 0.0, where);
    ch.tau = delay;
    ch.validate();
    return ch;
  } catch (const std::invalid_argument& e) {
    fail(where, e.what());
  }
}

NoiseChannel noise_from_json(const Json& j, const std::string& where) {
  const auto& out = require(j, "output", where);
  if (!out.is_number_integer()) fail(where + "/output", "expected an index");
  const auto output = out.get<Eigen::Index>();
  try {
    if (j.contains("num") || j.contains("den")) {
      TransferFunction tf{coefficients(require(j, "num", where), where + "/num"),
                          coefficients(require(j, "den", where), where + "/den"),
                          0.0};
      return noise_channel_from_tf(tf, output);
    }
  } catch (const std::invalid_argument& e) {
    fail(where, e.what());
  }
  return {output, matrix_from_json(require(j, "a", where), where + "/a"),
          matrix_from_json(require(j, "b", where), where + "/b"),
          matrix_from_json(require(j, "c", where), where + "/c")};
}

Vector bound_vector(const Json& j, Eigen::Index n, const std::string& where) {
  if (j.is_number()) return Vector::Constant(n, j.get<double>());
  Vector v = vector_from_json(j, where);
  if (v.size() != n) fail(where, "expected " + std::to_string(n) + " entries");
  return v;
}

// A flat list is read as the diagonal.
Matrix covariance_from_json(const Json& j, const std::string& where) {
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (j.is_array() && !j.empty() && j.front().is_number()) {
    return vector_from_json(j, where).asDiagonal();
  }
  return matrix_from_json(j, where);
}

}  // namespace

Json parse_json(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte, text.size());
    for (std::size_t i = 0; i + 1 < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(source + ":" + std::to_string(line) + ":" +
                     std::to_string(col) + ": invalid JSON");
  }
}

Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json(ss.str(), path);
}

Matrix matrix_from_json(const Json& j, const std::string& where) {
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (!j.is_array()) fail(where, "expected a matrix");
  if (j.empty()) return Matrix(0, 0);
  if (j.front().is_number()) {
    const Vector v = vector_from_json(j, where);
    return v.transpose();
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    const auto rw = where + "/" + std::to_string(r);
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      fail(rw, "rows must have equal length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = number(row[static_cast<std::size_t>(c)],
                       rw + "/" + std::to_string(c));
    }
  }
  return m;
}

Vector vector_from_json(const Json& j, const std::string& where) {
  if (j.is_number()) return Vector::Constant(1, j.get<double>());
  if (!j.is_array()) fail(where, "expected a list of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) =
        number(j[i], where + "/" + std::to_string(i));
  }
  return v;
}

Json matrix_to_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

MimoDelaySystem system_from_json(const Json& j) {
  const std::string where = "/system";
  check_schema(j, where);
  MimoDelaySystem sys;
  sys.sample_time = number(require(j, "sample_time", where), where + "/sample_time");
  const auto& grid = require(j, "channels", where);
  if (!grid.is_array() || grid.empty()) {
    fail(where + "/channels", "expected a non-empty grid");
  }
  for (std::size_t r = 0; r < grid.size(); ++r) {
    const auto rw = where + "/channels/" + std::to_string(r);
    if (!grid[r].is_array()) fail(rw, "expected a row of channels");
    std::vector<SisoDelayChannel> row;
    for (std::size_t c = 0; c < grid[r].size(); ++c) {
      row.push_back(channel_from_json(grid[r][c], rw + "/" + std::to_string(c)));
    }
    sys.channels.push_back(std::move(row));
  }
  if (const auto it = j.find("noise_channels"); it != j.end()) {
    for (std::size_t i = 0; i < it->size(); ++i) {
      sys.noise_channels.push_back(noise_from_json(
          (*it)[i], where + "/noise_channels/" + std::to_string(i)));
    }
  }
  if (const auto it = j.find("g_c"); it != j.end()) {
    sys.g_c = matrix_from_json(*it, where + "/g_c");
  }
  try {
    sys.validate();
  } catch (const std::invalid_argument& e) {
    fail(where, e.what());
  }
  return sys;
}

ContinuousLqProblem problem_from_json(const Json& j) {
  const std::string where = "/problem";
  check_schema(j, "");
  ContinuousLqProblem p;
  p.system = system_from_json(require(j, "system", ""));
  const auto n_z = p.system.outputs();
  p.q_c = j.contains("q_c") ? covariance_from_json(j["q_c"], "/q_c")
                            : Matrix(Matrix::Identity(n_z, n_z));
  if (const auto it = j.find("w_z"); it != j.end()) {
    p.q_c = ContinuousLqProblem::weight_from_wz(matrix_from_json(*it, "/w_z"));
  }
  const auto& h = require(j, "horizon", "");
  if (!h.is_number_integer()) fail("/horizon", "expected an integer");
  p.horizon_steps = h.get<int>();
  if (p.horizon_steps < 1) fail("/horizon", "must be at least 1");
  if (const auto it = j.find("references"); it != j.end()) {
    p.references = matrix_from_json(*it, "/references");
  } else {
    const Vector r = j.contains("reference")
                         ? vector_from_json(j["reference"], "/reference")
                         : Vector(Vector::Zero(n_z));
    if (r.size() != n_z) fail("/reference", "size must equal the outputs");
    p.references = r.replicate(1, p.horizon_steps);
  }
  if (const auto it = j.find("x0"); it != j.end()) {
    p.x0 = vector_from_json(*it, "/x0");
  }
  if (const auto it = j.find("p0"); it != j.end()) {
    p.p0 = covariance_from_json(*it, "/p0");
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    fail(where, e.what());
  }
  return p;
}

ScenarioBundle scenario_from_json(const Json& j) {
  check_schema(j, "");
  ScenarioBundle b;
  b.control_model = system_from_json(require(j, "control_model", ""));
  b.plant_model = system_from_json(require(j, "plant_model", ""));
  auto& sc = b.scenario;
  const auto n_u = b.control_model.inputs();
  const auto n_z = b.control_model.outputs();
  if (const auto it = j.find("name"); it != j.end() && it->is_string()) {
    sc.name = it->get<std::string>();
  }
  sc.sim_time = number(require(j, "sim_time", ""), "/sim_time");
  sc.ts = number_or(j, "ts", b.control_model.sample_time, "");
  sc.u_s = vector_from_json(require(j, "u_s", ""), "/u_s");
  sc.z_s = vector_from_json(require(j, "z_s", ""), "/z_s");
  if (const auto it = j.find("disturbance"); it != j.end()) {
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto w = "/disturbance/" + std::to_string(i);
      const auto& e = (*it)[i];
      sc.disturbance.push_back({number(require(e, "start", w), w + "/start"),
                                number(require(e, "end", w), w + "/end"),
                                number(require(e, "value", w), w + "/value")});
    }
  }
  if (const auto it = j.find("reference_events"); it != j.end()) {
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto w = "/reference_events/" + std::to_string(i);
      const auto& e = (*it)[i];
      sc.reference_events.push_back(
          {number(require(e, "time", w), w + "/time"),
           vector_from_json(require(e, "z_bar", w), w + "/z_bar")});
    }
  }
  const auto& c = require(j, "constraints", "");
  sc.bounds.u_min = bound_vector(require(c, "u_min", "/constraints"), n_u,
                                 "/constraints/u_min");
  sc.bounds.u_max = bound_vector(require(c, "u_max", "/constraints"), n_u,
                                 "/constraints/u_max");
  sc.bounds.du_min = bound_vector(require(c, "du_min", "/constraints"), n_u,
                                  "/constraints/du_min");
  sc.bounds.du_max = bound_vector(require(c, "du_max", "/constraints"), n_u,
                                  "/constraints/du_max");
  const auto& nz = require(j, "noise", "");
  if (const auto it = nz.find("enabled"); it != nz.end()) {
    if (!it->is_boolean()) fail("/noise/enabled", "expected true or false");
    sc.noise = it->get<bool>();
  }
  sc.r_ww = number_or(nz, "r_ww", 1.0, "/noise");
  sc.r_vv = covariance_from_json(require(nz, "r_vv", "/noise"), "/noise/r_vv");
  if (const auto it = nz.find("seed"); it != nz.end()) {
    if (!it->is_number_unsigned()) fail("/noise/seed", "expected an integer");
    sc.seed = it->get<std::uint64_t>();
  }
  sc.model_noise_intensity =
      number_or(nz, "model_intensity", sc.model_noise_intensity, "/noise");
  if (const auto it = j.find("horizon"); it != j.end()) {
    if (!it->is_number_integer()) fail("/horizon", "expected an integer");
    sc.horizon = it->get<int>();
  }
  sc.q_c = j.contains("q_c") ? covariance_from_json(j["q_c"], "/q_c")
                             : Matrix(Matrix::Identity(n_z, n_z));
  sc.p0_scale = number_or(j, "p0_scale", sc.p0_scale, "");
  if (const auto it = j.find("settle"); it != j.end()) {
    sc.settle_limit = number_or(*it, "limit", sc.settle_limit, "/settle");
    sc.settle_fraction = number_or(*it, "fraction", sc.settle_fraction, "/settle");
  }
  try {
    sc.validate(n_u, n_z);
  } catch (const std::invalid_argument& e) {
    fail("/scenario", e.what());
  }
  return b;
}

Json discretization_to_json(const DiscretizationResult& r,
                            const AugmentedDiscreteSystem& sys) {
  Json out;
  out["schema_version"] = kSchemaVersion;
  out["method"] = to_string(r.method);
  out["n_steps"] = r.n_steps;
  out["a"] = matrix_to_json(r.a);
  out["b_o"] = matrix_to_json(r.b_o);
  out["q"] = matrix_to_json(r.q);
  out["m"] = matrix_to_json(r.m);
  out["r_ww"] = matrix_to_json(r.r_ww);
  out["rho_w"] = r.rho_w;
  out["a_tilde"] = matrix_to_json(sys.a_tilde);
  out["b_tilde"] = matrix_to_json(sys.b_tilde);
  out["c_tilde"] = matrix_to_json(sys.c_tilde);
  out["d_tilde"] = matrix_to_json(sys.d_tilde);
  out["m_bar"] = sys.m_bar;
  out["wall_time_s"] = r.wall_time.count();
  return out;
}

Json summary_to_json(const RunSummary& s) {
  Json out;
  out["max_output_deviation"] = s.max_output_deviation;
  out["max_input_deviation"] = s.max_input_deviation;
  out["max_constraint_violation"] = s.max_violation;
  out["max_kkt_residual"] = s.max_kkt_residual;
  out["ridge_applied"] = s.ridge_applied;
  Json events = Json::array();
  for (const auto& e : s.events) {
    Json ev;
    ev["kind"] = e.kind;
    ev["time"] = e.time;
    ev["peak"] = vector_to_json(e.peak);
    Json settle = Json::array();
    for (Eigen::Index i = 0; i < e.settle.size(); ++i) {
      if (std::isnan(e.settle(i))) settle.push_back(nullptr);
      else settle.push_back(e.settle(i));
    }
    ev["settle"] = settle;
    ev["settled"] = e.settled;
    events.push_back(std::move(ev));
  }
  out["events"] = events;
  return out;
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_matrix_csv(std::ostream& os, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) os << ',';
      os << format_double(m(r, c));
    }
    os << '\n';
  }
}

void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& rec) {
  const auto n_u = rec.u.rows(), n_z = rec.z.rows();
  os << 't';
  for (Eigen::Index i = 1; i <= n_u; ++i) os << ",u" << i;
  for (Eigen::Index i = 1; i <= n_z; ++i) os << ",z" << i;
  for (Eigen::Index i = 1; i <= n_z; ++i) os << ",y" << i;
  for (Eigen::Index i = 1; i <= n_z; ++i) os << ",zbar" << i;
  os << ",d\n";
  for (Eigen::Index k = 0; k < rec.t.size(); ++k) {
    os << format_double(rec.t(k));
    for (Eigen::Index i = 0; i < n_u; ++i) os << ',' << format_double(rec.u(i, k));
    for (Eigen::Index i = 0; i < n_z; ++i) os << ',' << format_double(rec.z(i, k));
    for (Eigen::Index i = 0; i < n_z; ++i) os << ',' << format_double(rec.y(i, k));
    for (Eigen::Index i = 0; i < n_z; ++i) {
      os << ',' << format_double(rec.z_bar(i, k));
    }
    os << ',' << format_double(rec.d(k)) << '\n';
  }
}

}  // namespace lqd
