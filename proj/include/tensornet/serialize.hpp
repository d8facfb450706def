#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>

#include "tensornet/common.hpp"
#include "tensornet/ensembles.hpp"
#include "tensornet/hermite.hpp"
#include "tensornet/risk.hpp"
#include "tensornet/sgd.hpp"

namespace tensornet {

using json = nlohmann::json;

inline void to_json(json& j, const AssumptionReport& r) {
  j = json{{"delta", r.delta},
           {"eta_avg", r.eta_avg},
           {"eta_var", r.eta_var},
           {"unit_norm_residual", r.unit_norm_residual},
           {"bound_feasible", r.bound_feasible}};
}

inline void to_json(json& j, const MomentSummary& m) {
  j = json{{"mean_y", m.mean_y},
           {"var_y", m.var_y},
           {"cov_y_norm2", m.cov_y_norm2},
           {"baseline_a", m.baseline_a},
           {"baseline_b", m.baseline_b},
           {"baseline_risk", m.baseline_risk}};
}

inline void to_json(json& j, const RiskReport& r) {
  j = json{{"population_mse", r.population_mse},
           {"var_y", r.var_y},
           {"baseline_risk", r.baseline_risk},
           {"truncation_error_bar", r.truncation_error_bar},
           {"bound_c1", r.bound_c1},
           {"bound_c2", r.bound_c2},
           {"bound_rhs", r.bound_rhs},
           {"bound_applicable", r.bound_applicable},
           {"even_case_used", r.even_case_used}};
}

inline void to_json(json& j, const EstimationErrorReport& r) {
  j = json{{"max_correlation", r.max_correlation},
           {"chamfer_error", r.chamfer_error},
           {"third_order_corr", r.third_order_corr}};
  if (r.permutation_error)
    j["permutation_error"] = *r.permutation_error;
  else
    j["permutation_error"] = nullptr;
}

inline void to_json(json& j, const BoundCertificate& c) {
  j = json{{"c1", c.c1},
           {"c2", c.c2},
           {"rhs", c.rhs},
           {"applicable", c.applicable},
           {"even_case_used", c.even_case_used}};
}

inline json activation_to_json(const Activation& a) {
  json j;
  j["kind"] = a.kind == Activation::Kind::scaled_tanh ? "scaled_tanh" : "polynomial";
  if (a.kind == Activation::Kind::scaled_tanh)
    j["beta"] = a.beta;
  else
    j["poly"] = a.poly;
  j["truncation_degree"] = a.truncation_degree;
  j["parseval_residual"] = a.parseval_residual;
  j["parity"] = to_string(a.parity);
  return j;
}

inline json sgd_config_to_json(const SgdConfig& c) {
  return json{{"d", c.d},
              {"r", c.r},
              {"R", c.R},
              {"activation", activation_to_json(c.act)},
              {"n_steps", c.n_steps},
              {"step_size", c.step_size},
              {"window", c.window},
              {"seed", c.seed},
              {"teacher_kind", c.teacher_kind},
              {"init_kind", c.init_kind}};
}

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << body;
}

inline void write_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline void write_trace_csv(const std::string& path, const SgdTrace& trace) {
  std::string body = "step,norm_gen_err,chamfer_err,raw_mse\n";
  for (const auto& rec : trace.records) {
    body += std::to_string(rec.step);
    body += ',';
    body += format17(rec.norm_gen_err);
    body += ',';
    body += format17(rec.chamfer_err);
    body += ',';
    body += format17(rec.raw_mse);
    body += '\n';
  }
  write_text_file(path, body);
}

inline json trace_metadata(const SgdTrace& trace) {
  return json{{"config", sgd_config_to_json(trace.config)},
              {"prng", trace.prng_name},
              {"wall_seconds", trace.wall_seconds},
              {"diverged", trace.diverged},
              {"divergence_note", trace.divergence_note},
              {"records", trace.records.size()}};
}

}  // namespace tensornet
