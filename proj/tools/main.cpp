// Command line front end for the eqcon shared library. Subcommands:
//   estimate  fit a built-in model from CSV data and restrict it
//   bound     covariance bound under a constraint, both computation routes
//   project   Euclidean projection of a point onto a constraint set
//   simulate  repeated-sampling study of the constrained estimator
//
// Configuration is JSON; reports are written as a single JSON document to
// stdout or, with --output, atomically to a file. Failures print one
// machine-readable JSON object on stderr and exit with 2 (bad input),
// 3 (numerical degeneracy) or 4 (non-convergence).

#include <eqcon/eqcon.h>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "csv_reader.hpp"
#include "json_writer.hpp"

namespace {

using nlohmann::json;
using eqcon_cli::JsonWriter;

struct CliError {
  int exit_code;
  std::string kind;
  std::string message;
};

[[noreturn]] void config_fail(const std::string& msg) {
  throw CliError{2, "input", "config: " + msg};
}

int exit_for(eqcon_status s) {
  switch (s) {
    case EQCON_OK: return 0;
    case EQCON_ERR_INVALID: return 2;
    case EQCON_ERR_NUMERICAL: return 3;
    case EQCON_ERR_NO_CONVERGENCE: return 4;
    case EQCON_ERR_INTERNAL: break;
  }
  return 1;
}

const char* kind_for(eqcon_status s) {
  switch (s) {
    case EQCON_OK: return "ok";
    case EQCON_ERR_INVALID: return "input";
    case EQCON_ERR_NUMERICAL: return "numerical";
    case EQCON_ERR_NO_CONVERGENCE: return "convergence";
    case EQCON_ERR_INTERNAL: break;
  }
  return "internal";
}

void check(eqcon_status s) {
  if (s != EQCON_OK) {
    throw CliError{exit_for(s), kind_for(s), eqcon_last_error()};
  }
}

template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  Handle(Handle&& o) noexcept : ptr(o.ptr) { o.ptr = nullptr; }
  Handle& operator=(Handle&& o) noexcept {
    if (this != &o) {
      Free(ptr);
      ptr = o.ptr;
      o.ptr = nullptr;
    }
    return *this;
  }
  ~Handle() { Free(ptr); }
  T** out() { return &ptr; }
  T* get() const { return ptr; }
};

using ConstraintPtr = Handle<eqcon_constraint, eqcon_constraint_free>;
using ResultPtr = Handle<eqcon_result, eqcon_result_free>;
using ScenarioPtr = Handle<eqcon_scenario, eqcon_scenario_free>;
using ReportPtr = Handle<eqcon_report, eqcon_report_free>;

/* ---------------- config access ---------------- */

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_fail("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    config_fail(std::string("invalid JSON in ") + path + ": " + e.what());
  }
}

const json& field(const json& j, const char* name) {
  if (!j.is_object()) config_fail("expected an object holding \"" +
                                  std::string(name) + "\"");
  const auto it = j.find(name);
  if (it == j.end()) config_fail("missing field \"" + std::string(name) + "\"");
  return *it;
}

double number_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_number()) config_fail("field \"" + std::string(name) +
                                  "\" must be a number");
  return v.get<double>();
}

std::int64_t int_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    config_fail("field \"" + std::string(name) + "\" must be an integer");
  }
  return v.get<std::int64_t>();
}

std::uint64_t uint_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!(v.is_number_unsigned() ||
        (v.is_number_integer() && v.get<std::int64_t>() >= 0))) {
    config_fail("field \"" + std::string(name) +
                "\" must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string string_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_string()) config_fail("field \"" + std::string(name) +
                                  "\" must be a string");
  return v.get<std::string>();
}

std::vector<double> vector_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_array() || v.empty()) {
    config_fail("field \"" + std::string(name) +
                "\" must be a non-empty array of numbers");
  }
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_number()) config_fail("field \"" + std::string(name) +
                                    "\" must contain numbers only");
    out.push_back(e.get<double>());
  }
  return out;
}

struct MatrixField {
  std::vector<double> values;  // row-major
  int rows = 0;
  int cols = 0;
};

MatrixField matrix_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_array() || v.empty()) {
    config_fail("field \"" + std::string(name) +
                "\" must be a non-empty array of rows");
  }
  MatrixField m;
  m.rows = static_cast<int>(v.size());
  for (const auto& row : v) {
    if (!row.is_array() || row.empty()) {
      config_fail("field \"" + std::string(name) + "\" must contain rows of "
                  "numbers");
    }
    if (m.cols == 0) {
      m.cols = static_cast<int>(row.size());
    } else if (static_cast<int>(row.size()) != m.cols) {
      config_fail("field \"" + std::string(name) + "\" has ragged rows");
    }
    for (const auto& e : row) {
      if (!e.is_number()) config_fail("field \"" + std::string(name) +
                                      "\" must contain numbers only");
      m.values.push_back(e.get<double>());
    }
  }
  return m;
}

/* ---------------- constraints from config ---------------- */

struct BuiltConstraint {
  ConstraintPtr handle;
  int k = 0;
  int d = 0;
  std::string type;
};

// k_hint: dimension the surrounding context demands, or 0 when free.
BuiltConstraint build_constraint(const json& spec, int k_hint) {
  if (!spec.is_object()) config_fail("\"constraint\" must be an object");
  BuiltConstraint out;
  out.type = string_field(spec, "type");
  if (out.type == "linear") {
    const MatrixField r = matrix_field(spec, "R");
    std::vector<double> alpha;
    if (spec.contains("alpha")) {
      alpha = vector_field(spec, "alpha");
      if (static_cast<int>(alpha.size()) != r.rows) {
        config_fail("\"alpha\" must have one entry per row of R");
      }
    }
    check(eqcon_constraint_linear(r.values.data(), r.rows, r.cols,
                                  alpha.empty() ? nullptr : alpha.data(),
                                  out.handle.out()));
  } else if (out.type == "circle") {
    check(eqcon_constraint_circle(out.handle.out()));
  } else if (out.type == "cv") {
    const double c = number_field(spec, "c");
    int form = 0;
    if (spec.contains("form")) {
      const std::string f = string_field(spec, "form");
      if (f == "linear") form = 0;
      else if (f == "ratio") form = 1;
      else config_fail("cv \"form\" must be \"linear\" or \"ratio\"");
    }
    check(eqcon_constraint_cv(c, form, out.handle.out()));
  } else if (out.type == "exchangeable") {
    int k = k_hint;
    if (spec.contains("k")) k = static_cast<int>(int_field(spec, "k"));
    if (k <= 0) config_fail("exchangeable constraint needs \"k\"");
    check(eqcon_constraint_equality(k, out.handle.out()));
  } else {
    config_fail("unknown constraint type \"" + out.type + "\"");
  }
  int32_t k = 0, d = 0;
  check(eqcon_constraint_dims(out.handle.get(), &k, &d));
  out.k = k;
  out.d = d;
  if (k_hint > 0 && out.k != k_hint) {
    config_fail("constraint dimension mismatch: constraint acts on " +
                std::to_string(out.k) + " parameters, context has " +
                std::to_string(k_hint));
  }
  return out;
}

bool constraint_needs_point(const json& spec) {
  const std::string type = string_field(spec, "type");
  if (type == "circle") return true;
  if (type == "cv" && spec.contains("form") &&
      spec.at("form").is_string() && spec.at("form") == "ratio") {
    return true;
  }
  return false;
}

/* ---------------- output ---------------- */

void emit(const std::string& body, const std::string& output_path) {
  if (output_path.empty()) {
    std::fwrite(body.data(), 1, body.size(), stdout);
    std::fputc('\n', stdout);
    return;
  }
  const std::string tmp = output_path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CliError{2, "input", "cannot write to " + tmp};
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    out.put('\n');
    out.flush();
    if (!out) throw CliError{2, "input", "short write to " + tmp};
  }
  if (std::rename(tmp.c_str(), output_path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw CliError{2, "input", "cannot move report into place at " +
                               output_path};
  }
}

/* ---------------- subcommands ---------------- */

void cmd_estimate(const json& cfg, const std::string& output_path) {
  const std::string data_path = string_field(cfg, "data");
  const std::string model = string_field(cfg, "model");

  eqcon_cli::CsvData csv;
  try {
    csv = eqcon_cli::read_csv(data_path);
  } catch (const eqcon_cli::CsvError& e) {
    throw CliError{2, "input", e.what()};
  }
  const std::int64_t n = csv.rows;
  const int m = csv.cols;

  std::vector<double> theta_hat, info_hat;
  int k = 0;
  bool copula = false;
  if (model == "common_mean") {
    k = m;
    theta_hat.resize(static_cast<std::size_t>(k));
    info_hat.resize(static_cast<std::size_t>(k) * k);
    check(eqcon_fit_common_mean(csv.values.data(), n, m, theta_hat.data(),
                                info_hat.data()));
  } else if (model == "location_scale_normal") {
    if (m != 1) {
      config_fail("model \"location_scale_normal\" expects a single data "
                  "column, CSV has " + std::to_string(m));
    }
    k = 2;
    theta_hat.resize(2);
    info_hat.resize(4);
    check(eqcon_fit_location_scale(csv.values.data(), n, theta_hat.data(),
                                   info_hat.data()));
  } else if (model == "exchangeable_copula") {
    copula = true;
    if (m < 2) config_fail("model \"exchangeable_copula\" needs at least 2 "
                           "data columns");
    k = m * (m - 1) / 2;
    theta_hat.resize(static_cast<std::size_t>(k));
    info_hat.resize(static_cast<std::size_t>(k) * k);
    check(eqcon_fit_exchangeable_copula(csv.values.data(), n, m,
                                        theta_hat.data(), info_hat.data()));
  } else {
    config_fail("unknown model \"" + model + "\"");
  }

  // Constraint: explicit, or the model's implied restriction.
  std::optional<BuiltConstraint> constraint;
  if (cfg.contains("constraint")) {
    constraint = build_constraint(cfg.at("constraint"), k);
  } else if (model == "location_scale_normal") {
    config_fail("model \"location_scale_normal\" needs a \"constraint\" "
                "(e.g. type \"cv\")");
  } else if (k >= 2) {
    BuiltConstraint bc;
    bc.type = "exchangeable";
    check(eqcon_constraint_equality(k, bc.handle.out()));
    bc.k = k;
    bc.d = k - 1;
    constraint = std::move(bc);
  }
  // else: a single copula pair leaves nothing to restrict.

  std::vector<double> theta_star(theta_hat), theta_tilde(theta_hat);
  std::vector<double> bound(static_cast<std::size_t>(k) * k, 0.0);
  double residual = 0.0;
  int32_t iterations = 0, converged = 1;
  int d = 0;
  if (constraint) {
    d = constraint->d;
    ResultPtr result;
    const eqcon_status st =
        eqcon_estimate(theta_hat.data(), info_hat.data(), k, n,
                       constraint->handle.get(), result.out());
    if (st == EQCON_ERR_NO_CONVERGENCE) {
      throw CliError{4, "convergence", eqcon_last_error()};
    }
    check(st);
    check(eqcon_result_theta_star(result.get(), theta_star.data()));
    check(eqcon_result_theta_tilde(result.get(), theta_tilde.data()));
    check(eqcon_result_bound(result.get(), bound.data()));
    check(eqcon_result_stats(result.get(), &residual, &iterations,
                             &converged));
  } else {
    // Unconstrained scalar: the bound is plainly the inverse information.
    bound[0] = 1.0 / info_hat[0];
  }

  JsonWriter w;
  w.begin_object();
  w.key("command").value("estimate");
  w.key("model").value(model);
  w.key("n").value(n);
  w.key("k").value(k);
  w.key("d").value(d);
  w.key("theta_hat").vector(theta_hat.data(), theta_hat.size());
  w.key("info_hat").matrix(info_hat.data(), static_cast<std::size_t>(k),
                           static_cast<std::size_t>(k));
  w.key("theta_star").vector(theta_star.data(), theta_star.size());
  w.key("theta_tilde").vector(theta_tilde.data(), theta_tilde.size());
  w.key("bound_Q").matrix(bound.data(), static_cast<std::size_t>(k),
                          static_cast<std::size_t>(k));
  w.key("constraint_residual").value(residual);
  w.key("iterations").value(iterations);
  w.key("converged").value(converged != 0);
  if (copula) {
    std::vector<double> avg(static_cast<std::size_t>(k));
    check(eqcon_exchangeable_average(theta_hat.data(), k, avg.data()));
    w.key("exchangeable_average").vector(avg.data(), avg.size());
  }
  w.end_object();
  emit(w.str(), output_path);
}

void cmd_bound(const json& cfg, const std::string& output_path) {
  const MatrixField info = matrix_field(cfg, "info");
  if (info.rows != info.cols) config_fail("\"info\" must be square");
  const int k = info.rows;
  const json& cspec = field(cfg, "constraint");
  BuiltConstraint constraint = build_constraint(cspec, k);

  std::vector<double> theta(static_cast<std::size_t>(k), 0.0);
  if (cfg.contains("theta")) {
    theta = vector_field(cfg, "theta");
    if (static_cast<int>(theta.size()) != k) {
      config_fail("\"theta\" must have length " + std::to_string(k));
    }
  } else if (constraint_needs_point(cspec)) {
    config_fail("constraint type \"" + constraint.type +
                "\" needs an evaluation point \"theta\"");
  }

  const int d = constraint.d;
  std::vector<double> jac(static_cast<std::size_t>(d) * k);
  check(eqcon_constraint_jacobian(constraint.handle.get(), theta.data(),
                                  jac.data()));
  std::vector<double> basis(static_cast<std::size_t>(k) * (k - d));
  check(eqcon_null_space_basis(jac.data(), d, k, basis.data()));

  std::vector<double> bound(static_cast<std::size_t>(k) * k);
  std::vector<double> bound_ns(static_cast<std::size_t>(k) * k);
  check(eqcon_constrained_bound(info.values.data(), k, jac.data(), d,
                                bound.data()));
  check(eqcon_constrained_bound_nullspace(info.values.data(), k, basis.data(),
                                          k - d, bound_ns.data()));
  double disc = 0.0;
  for (std::size_t i = 0; i < bound.size(); ++i) {
    disc = std::max(disc, std::abs(bound[i] - bound_ns[i]));
  }

  JsonWriter w;
  w.begin_object();
  w.key("command").value("bound");
  w.key("k").value(k);
  w.key("d").value(d);
  w.key("theta").vector(theta.data(), theta.size());
  w.key("bound_Q").matrix(bound.data(), static_cast<std::size_t>(k),
                          static_cast<std::size_t>(k));
  w.key("bound_Q_nullspace").matrix(bound_ns.data(),
                                    static_cast<std::size_t>(k),
                                    static_cast<std::size_t>(k));
  w.key("max_discrepancy").value(disc);
  w.end_object();
  emit(w.str(), output_path);
}

void cmd_project(const json& cfg, const std::string& output_path) {
  const std::vector<double> point = vector_field(cfg, "point");
  BuiltConstraint constraint = build_constraint(
      field(cfg, "constraint"), static_cast<int>(point.size()));

  std::vector<double> tilde(point.size());
  double residual = 0.0;
  int32_t iterations = 0, converged = 0;
  const eqcon_status st =
      eqcon_project(constraint.handle.get(), point.data(), tilde.data(),
                    &residual, &iterations, &converged);
  if (st == EQCON_ERR_NO_CONVERGENCE) {
    throw CliError{4, "convergence", eqcon_last_error()};
  }
  check(st);

  JsonWriter w;
  w.begin_object();
  w.key("command").value("project");
  w.key("k").value(constraint.k);
  w.key("d").value(constraint.d);
  w.key("point").vector(point.data(), point.size());
  w.key("theta_tilde").vector(tilde.data(), tilde.size());
  w.key("constraint_residual").value(residual);
  w.key("iterations").value(iterations);
  w.key("converged").value(converged != 0);
  w.end_object();
  emit(w.str(), output_path);
}

void cmd_simulate(const json& cfg, std::optional<std::uint64_t> seed_override,
                  const std::string& output_path) {
  const json& sc = field(cfg, "scenario");
  const std::string model = string_field(sc, "model");
  const std::int64_t n = int_field(sc, "n");
  const std::int64_t reps = int_field(sc, "reps");
  std::uint64_t seed = uint_field(sc, "seed");
  if (seed_override) seed = *seed_override;

  int threads = 1;
  if (cfg.contains("threads")) {
    threads = static_cast<int>(int_field(cfg, "threads"));
  }

  ScenarioPtr scenario;
  if (model == "common_mean") {
    const std::vector<double> theta0 = vector_field(sc, "true_theta");
    const MatrixField cov = matrix_field(sc, "covariance");
    const int k = static_cast<int>(theta0.size());
    if (cov.rows != k || cov.cols != k) {
      config_fail("\"covariance\" must be " + std::to_string(k) + "x" +
                  std::to_string(k));
    }
    check(eqcon_scenario_common_mean(theta0.data(), k, cov.values.data(), n,
                                     reps, seed, scenario.out()));
  } else if (model == "location_scale_cv") {
    const std::vector<double> theta0 = vector_field(sc, "true_theta");
    if (theta0.size() != 2) config_fail("\"true_theta\" must be (mu, sigma)");
    const json& cspec = field(sc, "constraint");
    if (string_field(cspec, "type") != "cv") {
      config_fail("location_scale_cv scenario needs a \"cv\" constraint");
    }
    const double c = number_field(cspec, "c");
    int form = 0;
    if (cspec.contains("form")) {
      const std::string f = string_field(cspec, "form");
      if (f == "ratio") form = 1;
      else if (f != "linear") config_fail("cv \"form\" must be \"linear\" or "
                                          "\"ratio\"");
    }
    check(eqcon_scenario_location_scale_cv(theta0.data(), c, form, n, reps,
                                           seed, scenario.out()));
  } else if (model == "exchangeable_copula") {
    const int m = static_cast<int>(int_field(sc, "m"));
    const double rho = number_field(sc, "rho");
    check(eqcon_scenario_exchangeable_copula(m, rho, n, reps, seed,
                                             scenario.out()));
  } else if (model == "custom_mvn_with_constraint") {
    const std::vector<double> theta0 = vector_field(sc, "true_theta");
    const MatrixField cov = matrix_field(sc, "covariance");
    const int k = static_cast<int>(theta0.size());
    if (cov.rows != k || cov.cols != k) {
      config_fail("\"covariance\" must be " + std::to_string(k) + "x" +
                  std::to_string(k));
    }
    BuiltConstraint constraint = build_constraint(field(sc, "constraint"), k);
    check(eqcon_scenario_custom_mvn(theta0.data(), k, cov.values.data(),
                                    constraint.handle.get(), n, reps, seed,
                                    scenario.out()));
  } else {
    config_fail("unknown scenario model \"" + model + "\"");
  }

  ReportPtr report;
  check(eqcon_scenario_run(scenario.get(), threads, report.out()));

  int32_t k = 0, non_inferential = 0;
  check(eqcon_report_dim(report.get(), &k));
  std::int64_t out_reps = 0, reps_used = 0, failures = 0, out_n = 0;
  check(eqcon_report_counts(report.get(), &out_reps, &reps_used, &failures,
                            &out_n, &non_inferential));
  double equivalence = 0.0, max_resid = 0.0;
  check(eqcon_report_stats(report.get(), &equivalence, &max_resid));
  const std::size_t kk = static_cast<std::size_t>(k) * k;
  std::vector<double> emp(kk), unc(kk), theo(kk);
  check(eqcon_report_empirical_cov(report.get(), emp.data()));
  check(eqcon_report_unconstrained_cov(report.get(), unc.data()));
  check(eqcon_report_theoretical_bound(report.get(), theo.data()));

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < kk; ++i) {
    num += (emp[i] - theo[i]) * (emp[i] - theo[i]);
    den += theo[i] * theo[i];
  }
  const double frob = den > 0.0 ? std::sqrt(num / den) : 0.0;

  JsonWriter w;
  w.begin_object();
  w.key("command").value("simulate");
  w.key("model").value(model);
  w.key("k").value(k);
  w.key("n").value(out_n);
  w.key("reps").value(out_reps);
  w.key("reps_used").value(reps_used);
  w.key("seed").value(seed);
  w.key("non_inferential").value(non_inferential != 0);
  w.key("convergence_failures").value(failures);
  w.key("max_constraint_residual").value(max_resid);
  w.key("equivalence_stat").value(equivalence);
  w.key("empirical_cov").matrix(emp.data(), static_cast<std::size_t>(k),
                                static_cast<std::size_t>(k));
  w.key("unconstrained_cov").matrix(unc.data(), static_cast<std::size_t>(k),
                                    static_cast<std::size_t>(k));
  w.key("theoretical_bound").matrix(theo.data(), static_cast<std::size_t>(k),
                                    static_cast<std::size_t>(k));
  w.key("frobenius_rel_distance").value(frob);
  w.end_object();
  emit(w.str(), output_path);
}

void emit_error(const CliError& e) {
  JsonWriter w;
  w.begin_object();
  w.key("error").begin_object();
  w.key("code").value(e.exit_code);
  w.key("kind").value(e.kind);
  w.key("message").value(e.message);
  w.end_object();
  w.end_object();
  std::fprintf(stderr, "%s\n", w.str().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"efficient estimation under equality constraints"};
  app.require_subcommand(1);

  struct CommonArgs {
    std::string config;
    std::string output;
    std::uint64_t seed = 0;
  };
  CommonArgs args;

  auto add_common = [&args](CLI::App* sub) {
    sub->add_option("--config", args.config, "JSON configuration file")
        ->required();
    sub->add_option("--seed", args.seed,
                    "override the seed in the configuration");
    sub->add_option("--output", args.output,
                    "write the report to this file (atomic)");
  };

  CLI::App* estimate = app.add_subcommand(
      "estimate", "fit a model from CSV data and restrict it");
  CLI::App* bound = app.add_subcommand(
      "bound", "covariance bound under a constraint");
  CLI::App* project = app.add_subcommand(
      "project", "project a point onto a constraint set");
  CLI::App* simulate = app.add_subcommand(
      "simulate", "repeated-sampling study of the constrained estimator");
  for (CLI::App* sub : {estimate, bound, project, simulate}) add_common(sub);

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      throw CliError{2, "input", e.what()};
    }

    const json cfg = load_config(args.config);
    std::optional<std::uint64_t> seed_override;

    if (estimate->parsed()) {
      cmd_estimate(cfg, args.output);
    } else if (bound->parsed()) {
      cmd_bound(cfg, args.output);
    } else if (project->parsed()) {
      cmd_project(cfg, args.output);
    } else if (simulate->parsed()) {
      if (simulate->count("--seed") > 0) seed_override = args.seed;
      cmd_simulate(cfg, seed_override, args.output);
    }
  } catch (const CliError& e) {
    emit_error(e);
    return e.exit_code;
  } catch (const std::exception& e) {
    emit_error(CliError{1, "internal", e.what()});
    return 1;
  }
  return 0;
}
