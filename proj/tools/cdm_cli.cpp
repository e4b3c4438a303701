// cdm: command-line front end for the dose-metric engine.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cdm/bench_harness.hpp"
#include "cdm/bitmask.hpp"
#include "cdm/cdm_loss.hpp"
#include "cdm/dvh_metrics.hpp"
#include "cdm/error.hpp"
#include "cdm/optimizer.hpp"
#include "cdm/phantom.hpp"
#include "cdm/plan_template.hpp"
#include "cdm/scoring.hpp"
#include "cdm/surrogate.hpp"
#include "cdm/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConstraint = 2;

// Set when --strict is given and a constraint fails.
int g_exit = kExitOk;

struct Common {
  std::string template_path;
  bool json = false;
  bool strict = false;
  std::string out;
  int verbose = 0;
};

cdm::PlanTemplate load_template(const std::string& path) {
  std::string p = path;
  if (p.empty()) {
    if (const char* env = std::getenv("CDM_TEMPLATE")) p = env;
  }
  if (p.empty()) return cdm::default_template();
  return cdm::parse_template(cdm::read_text_file(p));
}

cdm::EmptyRoiPolicy parse_policy(const std::string& s) {
  if (s == "skip") return cdm::EmptyRoiPolicy::skip;
  if (s == "error") return cdm::EmptyRoiPolicy::error;
  throw cdm::ValidationError("empty-ROI policy must be skip or error, got '" + s + "'");
}

cdm::Dims parse_dims(const std::string& s) {
  std::vector<std::size_t> v;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      const long x = std::stol(part, &used);
      if (used != part.size() || x <= 0) throw std::invalid_argument(part);
      v.push_back(static_cast<std::size_t>(x));
    } catch (const std::exception&) {
      throw cdm::ValidationError("bad dims '" + s + "'");
    }
  }
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() != 3) throw cdm::ValidationError("dims need one or three values, got '" + s + "'");
  return {v[0], v[1], v[2]};
}

void warn_skipped(const cdm::PlanTemplate& plan, const std::vector<std::size_t>& skipped) {
  for (std::size_t i : skipped) {
    std::cerr << "warning: ROI '" << plan.specs[i].roi << "' is empty; " << plan.specs[i].kind.label()
              << " skipped\n";
  }
}

ordered_json opt_bool(const std::optional<bool>& b) { return b ? ordered_json(*b) : ordered_json(nullptr); }
ordered_json opt_num(const std::optional<double>& d) { return d ? ordered_json(*d) : ordered_json(nullptr); }

ordered_json spec_json(const cdm::MetricSpec& s) {
  return {{"roi", s.roi}, {"class", cdm::to_string(s.roi_class)}, {"metric", s.kind.label()}};
}

ordered_json to_json(const cdm::ConstraintReport& r) {
  ordered_json checks = ordered_json::array();
  for (const auto& c : r.checks) {
    ordered_json j = spec_json(c.spec);
    if (c.skipped) {
      j["skipped"] = true;
    } else {
      j["value"] = c.value;
      j["reported"] = c.reported;
      j["aim"] = c.spec.aim ? ordered_json(c.spec.aim->describe()) : ordered_json(nullptr);
      j["aim_pass"] = opt_bool(c.aim_pass);
      j["constraint"] = c.spec.constraint ? ordered_json(c.spec.constraint->describe()) : ordered_json(nullptr);
      j["constraint_pass"] = opt_bool(c.constraint_pass);
      j["constraint_margin"] = opt_num(c.constraint_margin);
      if (c.clamped) j["clamped"] = true;
    }
    checks.push_back(std::move(j));
  }
  return {{"all_constraints_pass", r.all_constraints_pass()},
          {"constraint_failures", r.constraint_failures()},
          {"checks", checks}};
}

ordered_json to_json(const cdm::ScoreReport& r) {
  ordered_json rows = ordered_json::array();
  for (const auto& m : r.per_metric) {
    ordered_json j = spec_json(m.spec);
    j["pred"] = m.pred;
    j["gt"] = m.gt;
    j["abs_diff"] = m.abs_diff;
    j["unit"] = m.unit;
    j["aim_pass"] = opt_bool(m.aim_pass);
    j["constraint_pass"] = opt_bool(m.constraint_pass);
    j["gt_constraint_pass"] = opt_bool(m.gt_constraint_pass);
    rows.push_back(std::move(j));
  }
  return {{"patient_id", r.patient_id},
          {"ptv_score", r.ptv_score},
          {"oar_score", r.oar_score},
          {"dose_score", r.dose_score},
          {"skipped", r.skipped},
          {"per_metric", rows}};
}

ordered_json to_json(const cdm::CohortSummary& s) {
  auto stat = [](const cdm::SummaryStat& x) { return ordered_json{{"mean", x.mean}, {"sd", x.sd}}; };
  ordered_json rates = ordered_json::array();
  for (const auto& p : s.pass_rates) {
    rates.push_back({{"roi", p.roi},
                     {"metric", p.label},
                     {"evaluated", p.evaluated},
                     {"aim_rate", opt_num(p.aim_rate)},
                     {"constraint_rate", opt_num(p.constraint_rate)}});
  }
  return {{"cases", s.patient_ids.size()},
          {"patient_ids", s.patient_ids},
          {"sd_kind", "sample (n-1)"},
          {"sd_undefined", s.sd_undefined},
          {"ptv_score", stat(s.ptv)},
          {"oar_score", stat(s.oar)},
          {"dose_score", stat(s.dose)},
          {"pass_rates", rates}};
}

ordered_json to_json(const cdm::LossResult& r, const cdm::LossConfig& cfg) {
  ordered_json terms = ordered_json::array();
  for (const auto& t : r.terms) {
    terms.push_back({{"roi", t.roi},
                     {"metric", t.label},
                     {"weight", cfg.plan.specs[t.spec_index].loss_weight},
                     {"m_pred", t.m_pred},
                     {"m_gt", t.m_gt},
                     {"weighted_abs", t.weighted_abs},
                     {"roi_voxels", t.roi_voxels}});
  }
  ordered_json skipped = ordered_json::array();
  for (std::size_t i : r.skipped) skipped.push_back(spec_json(cfg.plan.specs[i]));
  return {{"l_total", r.l_total},
          {"l_mae", r.l_mae},
          {"l_cdm", r.l_cdm},
          {"lambda1", cfg.lambda1},
          {"lambda2", cfg.lambda2},
          {"terms", terms},
          {"skipped", skipped}};
}

// Primary output: JSON to stdout with --json or to --out; a short text
// summary otherwise.
void emit(const Common& c, const ordered_json& j, const std::string& text) {
  const std::string body = j.dump(2) + "\n";
  if (!c.out.empty()) cdm::write_text_file(c.out, body);
  if (c.json) {
    std::cout << body;
  } else {
    std::cout << text;
  }
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string score_csv(const std::vector<cdm::ScoreReport>& reports) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "patient_id,roi,class,metric,unit,pred,gt,abs_diff,aim_pass,constraint_pass\n";
  auto b = [](const std::optional<bool>& x) { return x ? (*x ? "true" : "false") : ""; };
  for (const auto& r : reports) {
    for (const auto& m : r.per_metric) {
      os << csv_escape(r.patient_id) << ',' << csv_escape(m.spec.roi) << ',' << cdm::to_string(m.spec.roi_class)
         << ',' << csv_escape(m.spec.kind.label()) << ',' << csv_escape(m.unit) << ',' << m.pred << ',' << m.gt << ','
         << m.abs_diff << ',' << b(m.aim_pass) << ',' << b(m.constraint_pass) << '\n';
    }
  }
  return os.str();
}

std::string check_text(const cdm::ConstraintReport& rep) {
  std::ostringstream os;
  for (const auto& c : rep.checks) {
    os << std::left << std::setw(22) << c.spec.roi << std::setw(10) << c.spec.kind.label();
    if (c.skipped) {
      os << "skipped (empty ROI)\n";
      continue;
    }
    os << std::right << std::setw(10) << fmt(c.reported, 3);
    if (c.constraint_pass) os << "  constraint " << c.spec.constraint->describe() << (*c.constraint_pass ? " pass" : " FAIL");
    if (c.aim_pass) os << "  aim " << c.spec.aim->describe() << (*c.aim_pass ? " pass" : " miss");
    os << '\n';
  }
  os << (rep.all_constraints_pass() ? "all constraints pass\n"
                                    : std::to_string(rep.constraint_failures()) + " constraint(s) fail\n");
  return os.str();
}

cdm::LossConfig loss_config(const cdm::PlanTemplate& plan, const cdm::DoseGrid& gt, const cdm::BitMaskVolume& rois,
                            std::optional<double> l1, std::optional<double> l2, double margin, double eps,
                            bool exact_gt, const std::string& policy) {
  cdm::LossConfig cfg = cdm::make_loss_config(plan, &gt, &rois, margin, eps);
  if (l1) cfg.lambda1 = *l1;
  if (l2) cfg.lambda2 = *l2;
  cfg.use_surrogate_for_gt = !exact_gt;
  cfg.empty_roi = parse_policy(policy);
  return cfg;
}

struct LossFlags {
  std::string pred;
  std::string gt;
  std::string rois;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  double margin = cdm::kDefaultMargin;
  double eps = cdm::kDefaultTolerance;
  bool exact_gt = false;
  std::string policy = "skip";
};

void add_loss_flags(CLI::App* sub, LossFlags& f) {
  sub->add_option("--pred", f.pred, "Predicted dose volume")->required();
  sub->add_option("--gt", f.gt, "Reference dose volume")->required();
  sub->add_option("--rois", f.rois, "ROI bit-mask volume")->required();
  sub->add_option("--lambda1", f.lambda1, "Weight of the MAE term (default from template)");
  sub->add_option("--lambda2", f.lambda2, "Weight of the CDM term (default from template)");
  sub->add_option("--margin", f.margin, "Margin m in Gy for slopes selected from the reference dose");
  sub->add_option("--eps", f.eps, "Tolerance eps for slopes selected from the reference dose");
  sub->add_flag("--exact-gt", f.exact_gt, "Exact step function on the reference side of V-metrics");
  sub->add_option("--empty-roi", f.policy, "Empty ROI handling: skip or error");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clinical dose-metric engine: exact and differentiable DVH metrics, CDM loss, bit-mask ROIs"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--template", common.template_path,
                 "Plan template JSON (default: $CDM_TEMPLATE, else the built-in head-and-neck template)");
  app.add_flag("--json", common.json, "Print the JSON result on stdout");
  app.add_flag("--strict", common.strict, "Exit 2 when a clinical constraint fails");
  app.add_option("-o,--out", common.out, "Write the JSON result to this file");
  app.add_flag("-v,--verbose", common.verbose, "More diagnostics on stderr");

  // eval
  std::string eval_dose;
  std::string eval_rois;
  std::string eval_policy = "skip";
  auto* eval = app.add_subcommand("eval", "Exact metrics of one dose against the template's aims and constraints");
  eval->add_option("--dose", eval_dose, "Dose volume")->required();
  eval->add_option("--rois", eval_rois, "ROI bit-mask volume")->required();
  eval->add_option("--empty-roi", eval_policy, "Empty ROI handling: skip or error");

  // score
  std::string sc_pred, sc_gt, sc_rois, sc_cases, sc_csv, sc_summary, sc_id, sc_policy = "skip";
  auto* score = app.add_subcommand("score", "PTV, OAR and dose scores of predictions against references");
  score->add_option("--pred", sc_pred, "Predicted dose volume");
  score->add_option("--gt", sc_gt, "Reference dose volume");
  score->add_option("--rois", sc_rois, "ROI bit-mask volume");
  score->add_option("--id", sc_id, "Patient id for a single pair");
  score->add_option("--cases", sc_cases, "Directory of case folders, each holding pred, gt and rois volumes");
  score->add_option("--csv", sc_csv, "Per-metric CSV table");
  score->add_option("--summary", sc_summary, "Cohort summary JSON");
  score->add_option("--empty-roi", sc_policy, "Empty ROI handling: skip or error");

  // loss
  LossFlags lf;
  auto* loss = app.add_subcommand("loss", "L_total, L_MAE and L_CDM with per-metric terms");
  add_loss_flags(loss, lf);

  // gradcheck
  LossFlags gf;
  std::size_t gc_probes = 64;
  double gc_step = 1e-4;
  std::uint64_t gc_seed = 1;
  auto* gradcheck = app.add_subcommand("gradcheck", "Analytic gradient against central finite differences");
  add_loss_flags(gradcheck, gf);
  gradcheck->add_option("--probes", gc_probes, "Number of probed voxels");
  gradcheck->add_option("--step", gc_step, "Finite-difference step h (native dose units)");
  gradcheck->add_option("--seed", gc_seed, "Probe sampling seed");

  // alpha
  std::vector<std::string> al_doses, al_rois;
  std::string al_roi;
  double al_threshold = 0.0, al_margin = cdm::kDefaultMargin, al_eps = cdm::kDefaultTolerance;
  auto* alpha = app.add_subcommand("alpha", "Smallest sigmoid slope meeting a tolerance on pooled doses");
  alpha->add_option("--doses", al_doses, "Dose volume(s)")->required();
  alpha->add_option("--rois", al_rois, "ROI bit-mask volume(s), one per dose");
  alpha->add_option("--roi", al_roi, "ROI name the doses are pooled over");
  alpha->add_option("--threshold", al_threshold, "Threshold T in Gy")->required();
  alpha->add_option("--margin", al_margin, "Margin m in Gy");
  alpha->add_option("--eps", al_eps, "Tolerance eps");

  // encode
  std::vector<std::string> en_bitmasks, en_binary;
  std::string en_out;
  auto* encode = app.add_subcommand("encode", "Pack binary masks and bit-mask volumes into one bit-mask volume");
  encode->add_option("--bitmask", en_bitmasks, "Bit-mask volume to merge (repeatable)");
  encode->add_option("--binary", en_binary, "NAME=path of a 0/1 f32 volume (repeatable)");
  encode->add_option("--dest", en_out, "Output volume base path")->required();

  // decode
  std::string de_rois, de_name, de_out;
  auto* decode = app.add_subcommand("decode", "Extract one ROI from a bit-mask volume");
  decode->add_option("--rois", de_rois, "ROI bit-mask volume")->required();
  decode->add_option("--name", de_name, "ROI name")->required();
  decode->add_option("--dest", de_out, "Write the mask as a 0/1 f32 volume");

  // optimize
  std::string op_preset = "reference", op_gt, op_rois, op_trace, op_final, op_init = "blur";
  std::optional<double> op_l1, op_l2;
  cdm::OptimizerConfig oc;
  std::uint64_t op_seed = 1;
  auto* optimize = app.add_subcommand("optimize", "Gradient descent on voxel doses toward a reference plan");
  optimize->add_option("--preset", op_preset, "Phantom preset when --gt is absent")->check(CLI::IsMember({"reference"}));
  optimize->add_option("--gt", op_gt, "Reference dose volume (instead of a phantom)");
  optimize->add_option("--rois", op_rois, "ROI bit-mask volume for --gt");
  optimize->add_option("--seed", op_seed, "Phantom seed");
  optimize->add_option("--lambda1", op_l1, "Weight of the MAE term");
  optimize->add_option("--lambda2", op_l2, "Weight of the CDM term");
  optimize->add_option("--step", oc.step, "Per-iteration MAE move in Gy");
  optimize->add_option("--max-move", oc.max_move, "Per-voxel update clip in Gy (0 disables)");
  optimize->add_option("--iterations", oc.iterations, "Iteration budget");
  optimize->add_option("--tolerance", oc.tolerance, "Stop once L_total falls to this value");
  optimize->add_option("--init", op_init, "Initial dose: blur, uniform or zero");
  optimize->add_option("--uniform-dose", oc.uniform_dose, "Dose in Gy for --init uniform");
  optimize->add_option("--blur-radius", oc.blur_radius, "Box half-width in voxels for --init blur");
  optimize->add_option("--dose-cap", oc.dose_cap, "Projection cap in Gy (default 1.2 x max prescription)");
  optimize->add_flag("--backtracking", oc.backtracking, "Halve rejected steps; L_total never increases");
  optimize->add_option("--trace", op_trace, "Trace CSV path");
  optimize->add_option("--final", op_final, "Final dose volume base path");

  // bench
  std::string be_dims = "96";
  std::vector<int> be_rois{30};
  std::string be_transform = "flip-x";
  cdm::BenchOptions bo;
  bool be_sweep = false, be_memory = false;
  auto* bench = app.add_subcommand("bench", "One-hot versus bit-mask transform and memory benchmark");
  bench->add_option("--dims", be_dims, "Grid size n or nx,ny,nz");
  bench->add_option("--roi-count", be_rois, "ROI counts to run")->expected(1, -1);
  bench->add_flag("--sweep", be_sweep, "Run ROI counts 1,2,4,8,16,30");
  bench->add_option("--transform", be_transform, "flip-x, rot90-xy[:k], shift:dx,dy,dz, joined with +");
  bench->add_option("--reps", bo.repetitions, "Timed repetitions (>= 5)");
  bench->add_option("--seed", bo.seed, "ROI generation seed");
  bench->add_flag("--parallel", bo.parallel, "OpenMP kernels for both paths");
  bench->add_flag("--memory", be_memory, "Also report storage and decoded-mask residency");

  // phantom
  std::string ph_dir;
  std::uint64_t ph_seed = 1;
  auto* phantom = app.add_subcommand("phantom", "Write the reference phantom: gt dose, ROIs and template");
  phantom->add_option("--dir", ph_dir, "Output directory")->required();
  phantom->add_option("--seed", ph_seed, "Jitter seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (*eval) {
      const cdm::PlanTemplate plan = load_template(common.template_path);
      const cdm::DoseGrid dose = cdm::load_dose(eval_dose);
      const cdm::BitMaskVolume rois = cdm::load_bitmask(eval_rois);
      const cdm::ConstraintReport rep = cdm::constraint_report(dose, rois, plan, parse_policy(eval_policy));
      for (const auto& c : rep.checks) {
        if (c.skipped) warn_skipped(plan, {c.spec_index});
      }
      emit(common, to_json(rep), check_text(rep));
      if (common.strict && !rep.all_constraints_pass()) g_exit = kExitConstraint;
    } else if (*score) {
      const cdm::PlanTemplate plan = load_template(common.template_path);
      const cdm::EmptyRoiPolicy policy = parse_policy(sc_policy);
      std::vector<cdm::ScoreReport> reports;
      if (!sc_cases.empty()) {
        if (!sc_pred.empty() || !sc_gt.empty() || !sc_rois.empty()) {
          throw cdm::ValidationError("--cases excludes --pred/--gt/--rois");
        }
        std::vector<fs::path> dirs;
        for (const auto& e : fs::directory_iterator(sc_cases)) {
          if (e.is_directory()) dirs.push_back(e.path());
        }
        std::sort(dirs.begin(), dirs.end());
        if (dirs.empty()) throw cdm::ValidationError("no case folders under '" + sc_cases + "'");
        for (const auto& d : dirs) {
          reports.push_back(cdm::score_pair(cdm::load_dose(d / "pred"), cdm::load_dose(d / "gt"),
                                            cdm::load_bitmask(d / "rois"), plan, d.filename().string(), policy));
        }
      } else {
        if (sc_pred.empty() || sc_gt.empty() || sc_rois.empty()) {
          throw cdm::ValidationError("score needs --pred, --gt and --rois, or --cases");
        }
        reports.push_back(cdm::score_pair(cdm::load_dose(sc_pred), cdm::load_dose(sc_gt), cdm::load_bitmask(sc_rois),
                                          plan, sc_id, policy));
      }
      const cdm::CohortSummary summary = cdm::cohort_summary(reports);
      ordered_json cases = ordered_json::array();
      std::ostringstream text;
      bool failed = false;
      for (const auto& r : reports) {
        warn_skipped(plan, r.skipped);
        cases.push_back(to_json(r));
        text << (r.patient_id.empty() ? "case" : r.patient_id) << ": ptv " << fmt(r.ptv_score) << " %  oar "
             << fmt(r.oar_score) << " Gy  dose " << fmt(r.dose_score) << " Gy\n";
        for (const auto& m : r.per_metric) failed |= m.constraint_pass && !*m.constraint_pass;
      }
      ordered_json summary_json = to_json(summary);
      if (reports.size() > 1) {
        text << "mean +- sd: ptv " << fmt(summary.ptv.mean) << " +- " << fmt(summary.ptv.sd) << "  oar "
             << fmt(summary.oar.mean) << " +- " << fmt(summary.oar.sd) << "  dose " << fmt(summary.dose.mean)
             << " +- " << fmt(summary.dose.sd) << '\n';
      }
      const ordered_json j = {{"cases", cases}, {"summary", summary_json}};
      if (!sc_csv.empty()) cdm::write_text_file(sc_csv, score_csv(reports));
      if (!sc_summary.empty()) cdm::write_text_file(sc_summary, summary_json.dump(2) + "\n");
      emit(common, j, text.str());
      if (common.strict && failed) g_exit = kExitConstraint;
    } else if (*loss || *gradcheck) {
      const LossFlags& f = *loss ? lf : gf;
      const cdm::PlanTemplate plan = load_template(common.template_path);
      const cdm::DoseGrid pred = cdm::load_dose(f.pred);
      const cdm::DoseGrid gt = cdm::load_dose(f.gt);
      const cdm::BitMaskVolume rois = cdm::load_bitmask(f.rois);
      const cdm::LossConfig cfg =
          loss_config(plan, gt, rois, f.lambda1, f.lambda2, f.margin, f.eps, f.exact_gt, f.policy);
      if (*loss) {
        const cdm::LossResult r = cdm::total_loss(pred, gt, rois, cfg, false);
        warn_skipped(plan, r.skipped);
        emit(common, to_json(r, cfg),
             "L_total " + fmt(r.l_total, 6) + "  L_MAE " + fmt(r.l_mae, 6) + "  L_CDM " + fmt(r.l_cdm, 6) + "\n");
      } else {
        cdm::FdOptions opts;
        opts.probe_count = gc_probes;
        opts.step = gc_step;
        opts.seed = gc_seed;
        const cdm::FdReport rep = cdm::finite_difference_check(pred, gt, rois, cfg, opts);
        ordered_json probes = ordered_json::array();
        for (const auto& p : rep.probes) {
          probes.push_back({{"voxel", p.voxel},
                            {"analytic", p.analytic},
                            {"numeric", p.numeric},
                            {"rel_error", p.rel_error},
                            {"kink", p.kink.empty() ? ordered_json(nullptr) : ordered_json(p.kink)}});
        }
        const ordered_json j = {{"step", rep.step},
                                {"abs_floor", rep.abs_floor},
                                {"smooth_probes", rep.smooth_probes},
                                {"kink_probes", rep.kink_probes},
                                {"max_rel_error", rep.max_rel_error},
                                {"mean_rel_error", rep.mean_rel_error},
                                {"max_rel_error_kinks", rep.max_rel_error_kinks},
                                {"probes", probes}};
        std::ostringstream text;
        text << rep.smooth_probes << " smooth probes: max rel error " << std::scientific << std::setprecision(3)
             << rep.max_rel_error << ", mean " << rep.mean_rel_error << "; " << rep.kink_probes << " kink probes (floor "
             << rep.abs_floor << ")\n";
        emit(common, j, text.str());
      }
    } else if (*alpha) {
      std::vector<cdm::DoseGrid> doses;
      std::vector<cdm::BitMaskVolume> masks;
      const std::vector<std::string>& dose_paths = al_doses;
      const std::vector<std::string>& rois_paths = al_rois;
      if (!rois_paths.empty() && rois_paths.size() != dose_paths.size()) {
        throw cdm::ValidationError("--rois needs one bit-mask per --doses volume");
      }
      if (!rois_paths.empty() && al_roi.empty()) throw cdm::ValidationError("--rois needs --roi");
      for (const auto& p : dose_paths) doses.push_back(cdm::load_dose(p));
      for (const auto& p : rois_paths) masks.push_back(cdm::load_bitmask(p));
      std::vector<cdm::CohortMember> cohort;
      for (std::size_t i = 0; i < doses.size(); ++i) {
        cohort.push_back({&doses[i], masks.empty() ? nullptr : &masks[i], al_roi});
      }
      const cdm::AlphaSelection sel = cdm::select_alpha_from_cohort(cohort, al_threshold, al_margin, al_eps);
      const ordered_json j = {{"threshold", al_threshold},
                              {"margin", al_margin},
                              {"eps", al_eps},
                              {"pooled_voxels", sel.pooled_voxels},
                              {"margin_voxels", sel.margin_voxels},
                              {"q_m", sel.q_m},
                              {"alpha_min", sel.config.alpha},
                              {"bound_at_alpha", sel.bound_at_alpha}};
      std::ostringstream text;
      text << std::setprecision(10) << "q_m " << sel.q_m << "  alpha_min " << sel.config.alpha << " /Gy  bound "
           << sel.bound_at_alpha << '\n';
      emit(common, j, text.str());
    } else if (*encode) {
      std::vector<cdm::RoiMask> masks;
      std::optional<cdm::Spacing> spacing;
      for (const auto& p : en_bitmasks) {
        const cdm::BitMaskVolume b = cdm::load_bitmask(p);
        if (!spacing) spacing = b.spacing();
        for (auto& m : cdm::decode_all(b)) masks.push_back(std::move(m));
      }
      for (const auto& item : en_binary) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw cdm::ValidationError("--binary expects NAME=path, got '" + item + "'");
        const cdm::DoseGrid g = cdm::load_dose(item.substr(eq + 1));
        if (!spacing) spacing = g.spacing();
        cdm::RoiMask m(item.substr(0, eq), g.dims());
        for (std::size_t v = 0; v < g.size(); ++v) {
          const double x = g[v];
          if (x != 0.0 && x != 1.0) {
            throw cdm::ValidationError("binary mask '" + m.name + "' holds " + std::to_string(x) + " at voxel " +
                                       std::to_string(v));
          }
          m.occupancy[v] = x != 0.0 ? 1 : 0;
        }
        masks.push_back(std::move(m));
      }
      if (masks.empty()) throw cdm::ValidationError("encode needs --bitmask or --binary inputs");
      if (!common.template_path.empty() || std::getenv("CDM_TEMPLATE")) {
        // Template order first, anything else after in input order.
        const auto order = load_template(common.template_path).roi_order();
        std::stable_sort(masks.begin(), masks.end(), [&](const cdm::RoiMask& a, const cdm::RoiMask& b) {
          const auto ia = std::find(order.begin(), order.end(), a.name) - order.begin();
          const auto ib = std::find(order.begin(), order.end(), b.name) - order.begin();
          return ia < ib;
        });
      }
      const cdm::BitMaskVolume packed = cdm::encode(masks, *spacing);
      cdm::save_volume(packed, en_out);
      ordered_json table = ordered_json::object();
      for (int i = 0; i < packed.roi_count(); ++i) table[packed.roi_names()[static_cast<std::size_t>(i)]] = i + 1;
      emit(common, {{"volume", en_out}, {"roi_table", table}},
           "wrote " + std::to_string(packed.roi_count()) + " ROIs to " + en_out + "\n");
    } else if (*decode) {
      const cdm::BitMaskVolume b = cdm::load_bitmask(de_rois);
      const cdm::RoiMask m = cdm::decode(b, de_name);
      const std::size_t count = m.voxel_count();
      if (!de_out.empty()) {
        std::vector<double> v(m.occupancy.begin(), m.occupancy.end());
        cdm::save_volume(cdm::DoseGrid(b.dims(), b.spacing(), std::move(v)), de_out);
      }
      emit(common, {{"roi", de_name}, {"bit", b.bit_index(de_name)}, {"voxels", count}},
           de_name + ": bit " + std::to_string(b.bit_index(de_name)) + ", " + std::to_string(count) + " voxels\n");
    } else if (*optimize) {
      oc.init = cdm::parse_init_rule(op_init);
      cdm::DoseGrid gt;
      cdm::BitMaskVolume rois;
      cdm::PlanTemplate plan;
      if (!op_gt.empty()) {
        if (op_rois.empty()) throw cdm::ValidationError("--gt needs --rois");
        gt = cdm::load_dose(op_gt);
        rois = cdm::load_bitmask(op_rois);
        plan = load_template(common.template_path);
      } else {
        cdm::Phantom ph = cdm::make_phantom(cdm::reference_phantom_spec(), op_seed);
        gt = std::move(ph.gt);
        rois = std::move(ph.rois);
        plan = std::move(ph.plan);
      }
      cdm::LossConfig cfg = cdm::make_loss_config(plan, &gt, &rois);
      if (op_l1) cfg.lambda1 = *op_l1;
      if (op_l2) cfg.lambda2 = *op_l2;
      const cdm::DoseGrid init = cdm::initial_dose(gt, plan, oc);
      const cdm::OptimizeResult res = cdm::optimize_dose(init, gt, rois, cfg, oc);
      const cdm::ConstraintReport before = cdm::constraint_report(init, rois, plan);
      const cdm::ConstraintReport after = cdm::constraint_report(res.final_dose, rois, plan);
      const auto& last = res.trace.back();
      const ordered_json j = {{"iterations", res.iterations_run},
                              {"stop_reason", res.stop_reason},
                              {"lambda1", cfg.lambda1},
                              {"lambda2", cfg.lambda2},
                              {"l_total", last.l_total},
                              {"l_mae", last.l_mae},
                              {"l_cdm", last.l_cdm},
                              {"ptv_constraints_pass", after.ptv_constraints_pass()},
                              {"min_ptv_constraint_margin", opt_num(after.min_ptv_constraint_margin())},
                              {"initial", to_json(before)},
                              {"final", to_json(after)}};
      if (!op_trace.empty()) cdm::write_text_file(op_trace, cdm::trace_csv(res));
      if (!op_final.empty()) cdm::save_volume(res.final_dose, op_final);
      std::ostringstream text;
      text << res.iterations_run << " iterations (" << res.stop_reason << "), L_total " << fmt(last.l_total, 6)
           << "\n" << check_text(after);
      emit(common, j, text.str());
      if (common.strict && !after.all_constraints_pass()) g_exit = kExitConstraint;
    } else if (*bench) {
      const cdm::Dims dims = parse_dims(be_dims);
      const cdm::VoxelPermutation t = cdm::VoxelPermutation::parse(be_transform);
      if (be_sweep) be_rois = {1, 2, 4, 8, 16, 30};
      std::vector<cdm::TransformBench> rows;
      ordered_json runs = ordered_json::array();
      for (int n : be_rois) {
        rows.push_back(cdm::bench_transform(dims, n, t, bo));
        runs.push_back(ordered_json::parse(cdm::to_json(rows.back())));
      }
      ordered_json j = {{"transform", t.describe()}, {"parallel", bo.parallel}, {"transform_runs", runs}};
      std::string text = cdm::format_table(rows);
      if (be_memory) {
        ordered_json mem = ordered_json::array();
        for (int n : be_rois) {
          const cdm::MemoryBench m = cdm::bench_memory(dims, n, bo.seed);
          mem.push_back(ordered_json::parse(cdm::to_json(m)));
          text += std::to_string(n) + " ROIs: storage ratio " + fmt(m.storage_ratio, 2) + ", peak decoded masks " +
                  std::to_string(m.peak_decoded_masks) + "\n";
        }
        j["memory_runs"] = mem;
      }
      emit(common, j, text);
    } else if (*phantom) {
      const cdm::Phantom ph = cdm::make_phantom(cdm::reference_phantom_spec(), ph_seed);
      const fs::path dir(ph_dir);
      fs::create_directories(dir);
      cdm::save_volume(ph.gt, dir / "gt");
      cdm::save_volume(ph.rois, dir / "rois");
      cdm::write_text_file(dir / "template.json", cdm::serialize_template(ph.plan));
      emit(common, {{"dir", ph_dir}, {"gt", "gt"}, {"rois", "rois"}, {"template", "template.json"}},
           "wrote gt, rois and template.json to " + ph_dir + "\n");
    }
  } catch (const cdm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return g_exit;
}
