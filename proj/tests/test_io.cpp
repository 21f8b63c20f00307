#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "lqdelay/io.hpp"
#include "lqdelay/transfer_function.hpp"
#include "support.hpp"

using namespace lqd;
using lqd::testing::max_abs;

namespace {

std::string data_path(const std::string& name) {
  return std::string(LQDELAY_DATA_DIR) + "/" + name;
}

std::string error_of(const std::string& text) {
  try {
    system_from_json(parse_json(text, "input.json"));
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("syntax errors report the line") {
  const std::string text = "{\n  \"sample_time\": 1.0,\n  \"channels\": [ oops ]\n}";
  try {
    parse_json(text, "broken.json");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("broken.json:3:") != std::string::npos);
  }
  CHECK_THROWS_AS(load_json(data_path("does_not_exist.json")), ParseError);
}

TEST_CASE("semantic errors name the offending field") {
  const auto msg = error_of(
      R"({"schema_version": 1, "sample_time": 2.0,
          "channels": [[{"num": [1.0], "den": "x"}]]})");
  CHECK(msg.find("/channels/0/0/den") != std::string::npos);
  CHECK(error_of(R"({"schema_version": 1, "channels": []})")
            .find("sample_time") != std::string::npos);
  CHECK(error_of(R"({"schema_version": 99, "sample_time": 1.0, "channels": []})")
            .find("schema") != std::string::npos);
}

TEST_CASE("systems from transfer functions and state space") {
  const auto sys = system_from_json(parse_json(
      R"({"schema_version": 1, "sample_time": 2.0,
          "channels": [[
            {"num": [60.0], "den": [[30.0, 1.0], [20.0, 1.0]], "delay": 3.0},
            {"a": [[-0.5]], "b": [[1.0]], "c": [[2.0]], "d": 0.25}
          ]],
          "noise_channels": [{"output": 0, "num": [1.0], "den": [10.0, 1.0, 0.0]}]})",
      "inline"));
  CHECK(sys.sample_time == 2.0);
  REQUIRE(sys.outputs() == 1);
  REQUIRE(sys.inputs() == 2);
  const auto ref = tf_realize(TransferFunction::second_order(60.0, 30.0, 20.0, 3.0));
  CHECK(sys.channels[0][0].a_c == ref.a_c);
  CHECK(sys.channels[0][0].c_c == ref.c_c);
  CHECK(sys.channels[0][0].tau == 3.0);
  CHECK(sys.channels[0][1].d_c == 0.25);
  REQUIRE(sys.noise_channels.size() == 1);
  CHECK(sys.noise_channels[0].states() == 2);
}

TEST_CASE("matrices and doubles survive a text round trip") {
  std::mt19937_64 rng(1);
  const Matrix m = lqd::testing::randn(rng, 3, 4);
  const auto text = matrix_to_json(m).dump();
  const Matrix back = matrix_from_json(Json::parse(text), "m");
  CHECK(back == m);
  const Vector v = lqd::testing::randn(rng, 5, 1);
  CHECK(vector_from_json(Json::parse(vector_to_json(v).dump()), "v") == v);
  for (double x : {0.1, 1.0 / 3.0, -2.718281828459045, 1e-300, 6.02e23}) {
    CHECK(std::stod(format_double(x)) == x);
  }
  std::ostringstream os;
  write_matrix_csv(os, m);
  std::istringstream is(os.str());
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 3);
  CHECK_THROWS_AS(matrix_from_json(Json::parse("[[1, 2], [3]]"), "ragged"),
                  ParseError);
}

TEST_CASE("bundled data files load") {
  const auto sys = system_from_json(load_json(data_path("cement_mill_system.json")));
  CHECK(sys.outputs() == 2);
  CHECK(sys.inputs() == 2);
  const auto p = problem_from_json(load_json(data_path("cement_mill_problem.json")));
  CHECK(p.horizon_steps == 100);
  CHECK(p.q_c == Matrix::Identity(2, 2));
  const auto b = scenario_from_json(load_json(data_path("cement_mill_scenario.json")));
  CHECK(b.scenario.steps() == 360);
  CHECK(b.plant_model.inputs() == 3);
  CHECK(b.scenario.bounds.u_max(0) == 20.0);
  CHECK(b.scenario.bounds.du_max(1) == 2.0);
  CHECK(b.scenario.r_vv(1, 1) == 50.0);
  const auto eq =
      scenario_from_json(load_json(data_path("cement_mill_equilibrium.json")));
  CHECK(eq.scenario.disturbance.empty());
  CHECK_FALSE(eq.scenario.noise);
}

TEST_CASE("trajectory CSV layout") {
  TrajectoryRecord rec;
  rec.t = Vector::LinSpaced(2, 0.0, 2.0);
  rec.u = Matrix::Ones(2, 2);
  rec.z = Matrix::Ones(2, 2);
  rec.y = Matrix::Ones(2, 2);
  rec.z_bar = Matrix::Ones(2, 2);
  rec.d = Vector::Zero(2);
  std::ostringstream os;
  write_trajectory_csv(os, rec);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  CHECK(header == "t,u1,u2,z1,z2,y1,y2,zbar1,zbar2,d");
}

TEST_CASE("summary JSON writes missing settling times as null") {
  RunSummary s;
  EventSummary ev;
  ev.kind = "reference";
  ev.peak = Vector::Ones(1);
  ev.settle = Vector::Constant(1, std::numeric_limits<double>::quiet_NaN());
  s.events.push_back(ev);
  const auto j = summary_to_json(s);
  CHECK(j["events"][0]["settle"][0].is_null());
  CHECK(j["events"][0]["kind"] == "reference");
}
