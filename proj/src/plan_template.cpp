#include "cdm/plan_template.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cdm/bitmask.hpp"
#include "cdm/error.hpp"

namespace cdm {

using nlohmann::json;

namespace {

std::string num(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

MetricTag tag_from_name(const std::string& s) {
  static const std::map<std::string, MetricTag> names = {
      {"D_mean", MetricTag::d_mean}, {"D_max", MetricTag::d_max}, {"D_min", MetricTag::d_min},
      {"D_pct", MetricTag::d_pct},   {"D_cc", MetricTag::d_cc},   {"V_pct", MetricTag::v_pct},
      {"V_gy", MetricTag::v_gy}};
  auto it = names.find(s);
  if (it == names.end()) throw ValidationError("unknown metric kind '" + s + "'");
  return it->second;
}

BoundUnit unit_from_name(const std::string& s) {
  if (s == "pct_presc") return BoundUnit::pct_presc;
  if (s == "gy") return BoundUnit::gy;
  if (s == "pct_volume") return BoundUnit::pct_volume;
  throw ValidationError("unknown bound unit '" + s + "'");
}

Bound parse_bound(const json& j, const std::string& where) {
  Bound b;
  const auto op = j.at("op").get<std::string>();
  if (op == "<=") {
    b.op = BoundOp::le;
  } else if (op == ">=") {
    b.op = BoundOp::ge;
  } else {
    throw ValidationError(where + ": bound op must be \"<=\" or \">=\", got \"" + op + "\"");
  }
  b.value = j.at("value").get<double>();
  if (!std::isfinite(b.value)) throw ValidationError(where + ": bound value must be finite");
  b.unit = unit_from_name(j.at("unit").get<std::string>());
  return b;
}

json bound_json(const Bound& b) {
  return json{{"op", b.op == BoundOp::le ? "<=" : ">="}, {"value", b.value}, {"unit", to_string(b.unit)}};
}

// "Parotid_(L/R)" -> {"Parotid_L", "Parotid_R"}; other names pass through.
std::vector<std::string> expand_paired(const std::string& roi) {
  static const std::string suffix = "(L/R)";
  if (roi.size() > suffix.size() && roi.compare(roi.size() - suffix.size(), suffix.size(), suffix) == 0) {
    const std::string stem = roi.substr(0, roi.size() - suffix.size());
    return {stem + "L", stem + "R"};
  }
  return {roi};
}

std::string spec_name(const MetricSpec& s) { return s.roi + " " + s.kind.label(); }

}  // namespace

std::string to_string(BoundUnit u) {
  switch (u) {
    case BoundUnit::pct_presc:
      return "pct_presc";
    case BoundUnit::gy:
      return "gy";
    default:
      return "pct_volume";
  }
}

std::string to_string(RoiClass c) { return c == RoiClass::ptv ? "ptv" : "oar"; }

std::string MetricKind::json_name() const {
  switch (tag) {
    case MetricTag::d_mean:
      return "D_mean";
    case MetricTag::d_max:
      return "D_max";
    case MetricTag::d_min:
      return "D_min";
    case MetricTag::d_pct:
      return "D_pct";
    case MetricTag::d_cc:
      return "D_cc";
    case MetricTag::v_pct:
      return "V_pct";
    default:
      return "V_gy";
  }
}

std::string MetricKind::label() const {
  switch (tag) {
    case MetricTag::d_pct:
      return "D_" + num(param) + "%";
    case MetricTag::d_cc:
      return "D_" + num(param) + "cc";
    case MetricTag::v_pct:
      return "V_" + num(param) + "%";
    case MetricTag::v_gy:
      return "V_" + num(param) + "Gy";
    default:
      return json_name();
  }
}

bool Bound::satisfied_by(double v) const { return margin(v) >= 0.0; }

double Bound::margin(double v) const {
  // Values within 1e-9 of the bound count as on it, so 98/100 voxels meets ">= 98%".
  constexpr double kSlack = 1e-9;
  const double m = op == BoundOp::le ? value - v : v - value;
  return std::abs(m) <= kSlack ? 0.0 : m;
}

std::string Bound::describe() const {
  std::string u = unit == BoundUnit::pct_presc ? "% presc" : unit == BoundUnit::gy ? " Gy" : "% vol";
  return std::string(op == BoundOp::le ? "<= " : ">= ") + num(value) + u;
}

std::vector<std::string> PlanTemplate::roi_order() const {
  std::vector<std::string> out;
  for (const auto& s : specs) {
    if (std::find(out.begin(), out.end(), s.roi) == out.end()) out.push_back(s.roi);
  }
  return out;
}

std::vector<std::string> PlanTemplate::ptv_set() const {
  std::vector<std::string> out;
  for (const auto& s : specs) {
    if (s.roi_class == RoiClass::ptv && std::find(out.begin(), out.end(), s.roi) == out.end()) out.push_back(s.roi);
  }
  return out;
}

std::vector<std::string> PlanTemplate::oar_set() const {
  std::vector<std::string> out;
  for (const auto& s : specs) {
    if (s.roi_class == RoiClass::oar && std::find(out.begin(), out.end(), s.roi) == out.end()) out.push_back(s.roi);
  }
  return out;
}

std::optional<double> PlanTemplate::prescription(const std::string& roi) const {
  auto it = prescriptions.find(roi);
  if (it == prescriptions.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> PlanTemplate::specs_for(const std::string& roi) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].roi == roi) out.push_back(i);
  }
  return out;
}

void validate_template(const PlanTemplate& t) {
  for (const auto& [name, dose] : t.prescriptions) {
    if (!(dose > 0.0) || !std::isfinite(dose)) throw ValidationError("prescription for '" + name + "' must be positive");
  }
  if (!(t.lambda_mae >= 0.0) || !(t.lambda_cdm >= 0.0)) throw ValidationError("lambda weights must be nonnegative");
  if (t.specs.empty()) throw ValidationError("template has no metric specs");

  std::map<std::string, RoiClass> cls;
  std::set<std::tuple<std::string, MetricTag, double>> seen;
  for (const auto& s : t.specs) {
    const std::string where = "spec '" + spec_name(s) + "'";
    if (s.roi.empty()) throw ValidationError("spec with empty ROI name");
    auto [it, inserted] = cls.emplace(s.roi, s.roi_class);
    if (!inserted && it->second != s.roi_class) {
      throw ValidationError("ROI '" + s.roi + "' is listed as both ptv and oar");
    }
    if (!seen.emplace(s.roi, s.kind.tag, s.kind.param).second) {
      throw ValidationError("duplicate ROI spec " + spec_name(s));
    }
    switch (s.kind.tag) {
      case MetricTag::d_pct:
        if (!(s.kind.param > 0.0 && s.kind.param <= 100.0)) throw ValidationError(where + ": D_pct needs 0 < x <= 100");
        break;
      case MetricTag::d_cc:
      case MetricTag::v_pct:
      case MetricTag::v_gy:
        if (!(s.kind.param > 0.0) || !std::isfinite(s.kind.param)) throw ValidationError(where + ": parameter must be positive");
        break;
      default:
        if (s.kind.param != 0.0) throw ValidationError(where + ": metric takes no parameter");
    }
    if (!s.aim && !s.constraint) throw ValidationError(where + ": needs an aim or a constraint");
    if (!(s.loss_weight >= 0.0) || !std::isfinite(s.loss_weight)) {
      throw ValidationError(where + ": loss_weight must be nonnegative");
    }
    const bool has_presc = t.prescriptions.count(s.roi) > 0;
    if (s.roi_class == RoiClass::ptv && !has_presc) {
      throw ValidationError("missing prescription for PTV '" + s.roi + "'");
    }
    if (s.kind.tag == MetricTag::v_pct && !has_presc) {
      throw ValidationError(where + ": V_pct needs a prescription for '" + s.roi + "'");
    }
    for (const auto* b : {&s.aim, &s.constraint}) {
      if (!*b) continue;
      if (s.kind.is_volume() && (*b)->unit != BoundUnit::pct_volume) {
        throw ValidationError(where + ": volume metric bounds must use pct_volume");
      }
      if (s.kind.is_dose() && (*b)->unit == BoundUnit::pct_volume) {
        throw ValidationError(where + ": dose metric bounds must use gy or pct_presc");
      }
      if ((*b)->unit == BoundUnit::pct_presc && !has_presc) {
        throw ValidationError(where + ": percent-of-prescription bound on ROI without a prescription");
      }
    }
    if (s.alpha) {
      if (!s.kind.is_volume()) throw ValidationError(where + ": alpha only applies to volume metrics");
      if (!(*s.alpha > 0.0) || !std::isfinite(*s.alpha)) throw ValidationError(where + ": alpha must be positive");
    }
  }
  if (cls.size() > static_cast<std::size_t>(kMaxRois)) {
    throw ValidationError("template references " + std::to_string(cls.size()) + " ROIs, at most 32 fit a bit-mask");
  }
}

PlanTemplate parse_template(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("template is not valid JSON: ") + e.what());
  }
  PlanTemplate t;
  try {
    if (!j.is_object()) throw ValidationError("template must be a JSON object");
    for (const auto& key : j.items()) {
      if (key.key() != "prescriptions" && key.key() != "lambda" && key.key() != "specs") {
        throw ValidationError("unknown template field '" + key.key() + "'");
      }
    }
    if (j.contains("prescriptions")) {
      for (auto it = j["prescriptions"].begin(); it != j["prescriptions"].end(); ++it) {
        t.prescriptions[it.key()] = it.value().get<double>();
      }
    }
    if (j.contains("lambda")) {
      t.lambda_mae = j["lambda"].value("mae", kLambdaMae);
      t.lambda_cdm = j["lambda"].value("cdm", kLambdaCdm);
    }
    const auto& specs = j.at("specs");
    if (!specs.is_array()) throw ValidationError("\"specs\" must be an array");
    for (const auto& js : specs) {
      static const std::set<std::string> allowed = {"roi", "class", "metric", "aim", "constraint", "loss_weight", "alpha"};
      for (const auto& f : js.items()) {
        if (!allowed.count(f.key())) throw ValidationError("unknown spec field '" + f.key() + "'");
      }
      MetricSpec s;
      const auto cls = js.at("class").get<std::string>();
      if (cls == "ptv") {
        s.roi_class = RoiClass::ptv;
      } else if (cls == "oar") {
        s.roi_class = RoiClass::oar;
      } else {
        throw ValidationError("spec class must be \"ptv\" or \"oar\", got \"" + cls + "\"");
      }
      const auto& m = js.at("metric");
      s.kind.tag = tag_from_name(m.at("kind").get<std::string>());
      if (s.kind.has_param()) {
        if (!m.contains("param")) throw ValidationError("metric " + s.kind.json_name() + " needs a \"param\"");
        s.kind.param = m.at("param").get<double>();
      } else if (m.contains("param")) {
        throw ValidationError("metric " + s.kind.json_name() + " takes no \"param\"");
      }
      const std::string roi = js.at("roi").get<std::string>();
      const std::string where = "spec '" + roi + " " + s.kind.label() + "'";
      if (js.contains("aim")) s.aim = parse_bound(js["aim"], where);
      if (js.contains("constraint")) s.constraint = parse_bound(js["constraint"], where);
      s.loss_weight = js.value("loss_weight", s.roi_class == RoiClass::ptv ? kPtvWeight : kOarWeight);
      if (js.contains("alpha")) s.alpha = js["alpha"].get<double>();
      for (auto& name : expand_paired(roi)) {
        MetricSpec side = s;
        side.roi = std::move(name);
        t.specs.push_back(std::move(side));
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("template schema violation: ") + e.what());
  }
  validate_template(t);
  return t;
}

std::string serialize_template(const PlanTemplate& t) {
  json j;
  j["prescriptions"] = json::object();
  for (const auto& [k, v] : t.prescriptions) j["prescriptions"][k] = v;
  j["lambda"] = {{"mae", t.lambda_mae}, {"cdm", t.lambda_cdm}};
  j["specs"] = json::array();
  for (const auto& s : t.specs) {
    json js;
    js["roi"] = s.roi;
    js["class"] = to_string(s.roi_class);
    js["metric"] = {{"kind", s.kind.json_name()}};
    if (s.kind.has_param()) js["metric"]["param"] = s.kind.param;
    if (s.aim) js["aim"] = bound_json(*s.aim);
    if (s.constraint) js["constraint"] = bound_json(*s.constraint);
    js["loss_weight"] = s.loss_weight;
    if (s.alpha) js["alpha"] = *s.alpha;
    j["specs"].push_back(std::move(js));
  }
  return j.dump(2) + "\n";
}

const std::string& default_template_json() {
  static const std::string text = R"json({
  "prescriptions": {"PTV_54.25": 54.25, "PTV_70": 70.0},
  "lambda": {"mae": 1.0, "cdm": 0.5},
  "specs": [
    {"roi": "PTV_54.25", "class": "ptv", "metric": {"kind": "V_pct", "param": 95},
     "constraint": {"op": ">=", "value": 98, "unit": "pct_volume"}, "loss_weight": 1.0, "alpha": 209},
    {"roi": "PTV_54.25", "class": "ptv", "metric": {"kind": "D_mean"},
     "aim": {"op": "<=", "value": 102, "unit": "pct_presc"}, "loss_weight": 1.0},
    {"roi": "PTV_70", "class": "ptv", "metric": {"kind": "V_pct", "param": 95},
     "constraint": {"op": ">=", "value": 98, "unit": "pct_volume"}, "loss_weight": 1.0, "alpha": 176},
    {"roi": "PTV_70", "class": "ptv", "metric": {"kind": "D_cc", "param": 0.03},
     "aim": {"op": "<=", "value": 107, "unit": "pct_presc"},
     "constraint": {"op": "<=", "value": 110, "unit": "pct_presc"}, "loss_weight": 1.0},
    {"roi": "PTV_70", "class": "ptv", "metric": {"kind": "D_mean"},
     "aim": {"op": "<=", "value": 102, "unit": "pct_presc"}, "loss_weight": 1.0},
    {"roi": "SpinalCord", "class": "oar", "metric": {"kind": "D_cc", "param": 0.03},
     "constraint": {"op": "<=", "value": 50, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "SpinalCord+3mm", "class": "oar", "metric": {"kind": "D_cc", "param": 0.03},
     "constraint": {"op": "<=", "value": 52, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Brainstem_Surf", "class": "oar", "metric": {"kind": "D_cc", "param": 0.03},
     "constraint": {"op": "<=", "value": 60, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Brainstem_Core", "class": "oar", "metric": {"kind": "D_cc", "param": 0.03},
     "constraint": {"op": "<=", "value": 54, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Brain", "class": "oar", "metric": {"kind": "D_cc", "param": 0.03},
     "aim": {"op": "<=", "value": 65, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Brain", "class": "oar", "metric": {"kind": "D_pct", "param": 2},
     "aim": {"op": "<=", "value": 70, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Cochlea_(L/R)", "class": "oar", "metric": {"kind": "D_mean"},
     "aim": {"op": "<=", "value": 45, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Parotid_(L/R)", "class": "oar", "metric": {"kind": "D_mean"},
     "aim": {"op": "<=", "value": 28, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Glnd_Submand_(L/R)", "class": "oar", "metric": {"kind": "D_mean"},
     "aim": {"op": "<=", "value": 35, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Oral_Cavity", "class": "oar", "metric": {"kind": "D_mean"},
     "aim": {"op": "<=", "value": 28, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Musc_Constrict_S", "class": "oar", "metric": {"kind": "D_mean"},
     "aim": {"op": "<=", "value": 40, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Musc_Constrict_M", "class": "oar", "metric": {"kind": "D_mean"},
     "aim": {"op": "<=", "value": 40, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Musc_Constrict_I", "class": "oar", "metric": {"kind": "D_mean"},
     "aim": {"op": "<=", "value": 40, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Cricopharyngeus", "class": "oar", "metric": {"kind": "D_mean"},
     "aim": {"op": "<=", "value": 40, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Larynx_SG", "class": "oar", "metric": {"kind": "D_mean"},
     "aim": {"op": "<=", "value": 40, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Glottic_Area", "class": "oar", "metric": {"kind": "D_mean"},
     "aim": {"op": "<=", "value": 40, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Bone_Mandible", "class": "oar", "metric": {"kind": "D_pct", "param": 2},
     "aim": {"op": "<=", "value": 70, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Bone_Mandible-PTV", "class": "oar", "metric": {"kind": "D_pct", "param": 2},
     "aim": {"op": "<=", "value": 50, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Eye_(L/R)", "class": "oar", "metric": {"kind": "D_cc", "param": 0.03},
     "aim": {"op": "<=", "value": 35, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Lens_(L/R)", "class": "oar", "metric": {"kind": "D_cc", "param": 0.03},
     "aim": {"op": "<=", "value": 6, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "Pituitary", "class": "oar", "metric": {"kind": "D_mean"},
     "aim": {"op": "<=", "value": 20, "unit": "gy"}, "loss_weight": 0.1},
    {"roi": "OpticNrv_(L/R)", "class": "oar", "metric": {"kind": "D_cc", "param": 0.03},
     "aim": {"op": "<=", "value": 55, "unit": "gy"}, "loss_weight": 0.1}
  ]
}
)json";
  return text;
}

PlanTemplate default_template() { return parse_template(default_template_json()); }

}  // namespace cdm
