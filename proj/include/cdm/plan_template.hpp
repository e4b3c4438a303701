#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cdm {

enum class MetricTag { d_mean, d_max, d_min, d_pct, d_cc, v_pct, v_gy };

// One DVH metric. `param` is x in D_x%, D_xcc, V_x% and V_xGy and unused otherwise.
struct MetricKind {
  MetricTag tag = MetricTag::d_mean;
  double param = 0.0;

  static MetricKind d_mean() { return {MetricTag::d_mean, 0.0}; }
  static MetricKind d_max() { return {MetricTag::d_max, 0.0}; }
  static MetricKind d_min() { return {MetricTag::d_min, 0.0}; }
  static MetricKind d_pct(double x) { return {MetricTag::d_pct, x}; }
  static MetricKind d_cc(double x) { return {MetricTag::d_cc, x}; }
  static MetricKind v_pct(double x) { return {MetricTag::v_pct, x}; }
  static MetricKind v_gy(double x) { return {MetricTag::v_gy, x}; }

  bool is_volume() const { return tag == MetricTag::v_pct || tag == MetricTag::v_gy; }
  bool is_dose() const { return !is_volume(); }
  // Metrics defined by a single order statistic.
  bool is_selection() const { return tag == MetricTag::d_max || tag == MetricTag::d_min || tag == MetricTag::d_pct || tag == MetricTag::d_cc; }
  bool has_param() const { return tag != MetricTag::d_mean && tag != MetricTag::d_max && tag != MetricTag::d_min; }

  std::string json_name() const;  // "D_mean", "D_pct", ...
  std::string label() const;      // "D_mean", "D_2%", "D_0.03cc", "V_95%", "V_20Gy"
  bool operator==(const MetricKind&) const = default;
};

enum class BoundOp { le, ge };
enum class BoundUnit { pct_presc, gy, pct_volume };
enum class RoiClass { ptv, oar };

struct Bound {
  BoundOp op = BoundOp::le;
  double value = 0.0;
  BoundUnit unit = BoundUnit::gy;

  // Inclusive; `v` must already be in `unit`.
  bool satisfied_by(double v) const;
  // Signed distance to the bound in `unit`; >= 0 when satisfied.
  double margin(double v) const;
  std::string describe() const;  // "<= 110% presc"
  bool operator==(const Bound&) const = default;
};

struct MetricSpec {
  std::string roi;
  RoiClass roi_class = RoiClass::oar;
  MetricKind kind;
  std::optional<Bound> aim;
  std::optional<Bound> constraint;
  double loss_weight = 0.1;
  std::optional<double> alpha;  // sigmoid slope for V-metrics, 1/Gy

  bool operator==(const MetricSpec&) const = default;
};

struct PlanTemplate {
  std::map<std::string, double> prescriptions;  // PTV name -> Gy
  double lambda_mae = 1.0;
  double lambda_cdm = 0.5;
  std::vector<MetricSpec> specs;  // template order, paired organs already expanded

  // Distinct ROIs in first-appearance order; this is also the bit assignment order.
  std::vector<std::string> roi_order() const;
  std::vector<std::string> ptv_set() const;
  std::vector<std::string> oar_set() const;
  std::optional<double> prescription(const std::string& roi) const;
  // Indices into `specs` for one ROI, template order.
  std::vector<std::size_t> specs_for(const std::string& roi) const;

  bool operator==(const PlanTemplate&) const = default;
};

inline constexpr double kPtvWeight = 1.0;
inline constexpr double kOarWeight = 0.1;
inline constexpr double kLambdaMae = 1.0;
inline constexpr double kLambdaCdm = 0.5;

// Throws ValidationError naming the first offending entry.
PlanTemplate parse_template(const std::string& json_text);
std::string serialize_template(const PlanTemplate& t);
void validate_template(const PlanTemplate& t);

// The head-and-neck institutional evaluation template with default weights
// (PTV 1.0, OAR 0.1), lambda_mae 1, lambda_cdm 0.5 and V95 slopes 209 / 176.
PlanTemplate default_template();
const std::string& default_template_json();

std::string to_string(BoundUnit u);
std::string to_string(RoiClass c);

}  // namespace cdm
