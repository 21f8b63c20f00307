#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "lqdelay/closed_loop.hpp"
#include "lqdelay/lq_api.hpp"

namespace lqd {

using Json = nlohmann::json;

/// Malformed input file; `what()` carries the file name and line or the
/// JSON path of the offending field.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kSchemaVersion = 1;

Json load_json(const std::string& path);
Json parse_json(const std::string& text, const std::string& source);

Matrix matrix_from_json(const Json& j, const std::string& where);
Vector vector_from_json(const Json& j, const std::string& where);
Json matrix_to_json(const Matrix& m);
Json vector_to_json(const Vector& v);

MimoDelaySystem system_from_json(const Json& j);
ContinuousLqProblem problem_from_json(const Json& j);
/// Reads the scenario plus its control and plant models.
struct ScenarioBundle {
  ScenarioConfig scenario;
  MimoDelaySystem control_model;
  MimoDelaySystem plant_model;
};
ScenarioBundle scenario_from_json(const Json& j);

Json discretization_to_json(const DiscretizationResult& r,
                            const AugmentedDiscreteSystem& sys);
Json summary_to_json(const RunSummary& s);

/// %.17g, so that values survive a text round trip.
std::string format_double(double x);
void write_matrix_csv(std::ostream& os, const Matrix& m);
void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& rec);

}  // namespace lqd
