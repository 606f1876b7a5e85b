#include "cpmagnus/cli_runner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "cpmagnus/cp_correction.hpp"
#include "cpmagnus/dynamics_bench.hpp"
#include "cpmagnus/lindblad_projection.hpp"

namespace cpmagnus {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void check_keys(const toml::table& t, const std::string& where,
                const std::set<std::string>& allowed) {
  for (auto&& [key, node] : t) {
    (void)node;
    if (!allowed.count(std::string(key.str()))) {
      throw ConfigError("unknown key '" + std::string(key.str()) + "' in " + where);
    }
  }
}

std::optional<double> get_number(const toml::table& t, const std::string& key) {
  const auto* node = t.get(key);
  if (!node) {
    return std::nullopt;
  }
  if (auto v = node->value<double>()) {
    if (!std::isfinite(*v)) {
      throw ConfigError("'" + key + "' must be finite");
    }
    return v;
  }
  throw ConfigError("'" + key + "' must be a number");
}

std::optional<std::int64_t> get_int(const toml::table& t, const std::string& key) {
  const auto* node = t.get(key);
  if (!node) {
    return std::nullopt;
  }
  if (!node->is_integer()) {
    throw ConfigError("'" + key + "' must be an integer");
  }
  return node->value<std::int64_t>();
}

std::optional<std::string> get_string(const toml::table& t, const std::string& key) {
  const auto* node = t.get(key);
  if (!node) {
    return std::nullopt;
  }
  if (!node->is_string()) {
    throw ConfigError("'" + key + "' must be a string");
  }
  return node->value<std::string>();
}

const toml::table* get_table(const toml::table& t, const std::string& key) {
  const auto* node = t.get(key);
  if (!node) {
    return nullptr;
  }
  if (!node->is_table()) {
    throw ConfigError("'" + key + "' must be a table");
  }
  return node->as_table();
}

struct Preset {
  ModelKind kind;
  // In units of omega.
  double omega_s = 0.0;
  double omega_c = 0.0;
  double drive = 0.0;
  double gamma = 0.0;
  std::size_t levels = kDefaultOscillatorLevels;
  std::vector<int> orders;
  std::optional<std::size_t> subspace;
};

std::optional<Preset> find_preset(const std::string& name) {
  if (name == "weak_drive") {
    return Preset{ModelKind::kTwoLevel, 0.1, 1.0 / 9.0, 0.0, 1.0 / 80.0, 2, {1, 2}, std::nullopt};
  }
  if (name == "oscillator") {
    return Preset{ModelKind::kOscillator, 0.0, 0.0, 1.0 / 8.0, 1.0 / 64.0, 12, {1, 2}, 4};
  }
  if (name == "strong_drive") {
    return Preset{ModelKind::kTwoLevel, 1.0 / 3.0, 0.0, 0.0, 1.0 / 9.0, 2, {2}, std::nullopt};
  }
  return std::nullopt;
}

Matrix parse_initial_state(const std::string& spec, const DrivenModel& model,
                           const fs::path& base_dir, std::optional<std::string> file) {
  const auto d = static_cast<Eigen::Index>(model.levels());
  Matrix rho = Matrix::Zero(d, d);
  if (spec == "ground") {
    const auto g = static_cast<Eigen::Index>(model.ground_index());
    rho(g, g) = 1.0;
    return rho;
  }
  if (spec.rfind("fock:", 0) == 0) {
    std::size_t k = 0;
    try {
      std::size_t used = 0;
      k = std::stoul(spec.substr(5), &used);
      if (used != spec.size() - 5) {
        throw std::invalid_argument("trailing characters");
      }
    } catch (const std::exception&) {
      throw ConfigError("initial_state '" + spec + "' is not of the form fock:k");
    }
    if (k >= model.levels()) {
      throw ConfigError("initial_state '" + spec + "' exceeds the number of levels");
    }
    rho(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = 1.0;
    return rho;
  }
  if (spec == "custom") {
    if (!file) {
      throw ConfigError("custom initial_state needs initial_state.file");
    }
    const fs::path path = fs::path(*file).is_absolute() ? fs::path(*file) : base_dir / *file;
    std::ifstream in(path);
    if (!in) {
      throw ConfigError("cannot open initial state file " + path.string());
    }
    try {
      rho = matrix_from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw ConfigError("initial state file " + path.string() + ": " + e.what());
    }
    if (rho.rows() != d || rho.cols() != d) {
      throw ConfigError("initial state has the wrong dimension");
    }
    if (!is_hermitian(rho, 1e-10) || std::abs(rho.trace() - 1.0) > 1e-10 ||
        hermitian_eig(hermitian_part(rho)).values.minCoeff() < -1e-10) {
      throw ConfigError("initial state is not a density matrix");
    }
    return hermitian_part(rho);
  }
  throw ConfigError("initial_state must be ground, fock:k or custom");
}

json error_json(const std::string& type, const std::string& message) {
  return json{{"type", type}, {"message", message}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
}

std::string sweep_dir(std::size_t i) {
  std::ostringstream s;
  s << "omega_" << std::setw(3) << std::setfill('0') << i;
  return s.str();
}

/// Largest deviation of V(T) on the subspace between levels and levels + 4.
double truncation_change(const ExperimentConfig& cfg, std::size_t subspace) {
  const std::size_t n = cfg.model.levels();
  const DrivenModel bigger = cfg.model.with_levels(n + 4);
  IntegratorOptions opts;
  opts.tol = cfg.tolerances.integrator;
  const double period = cfg.model.generator().period();
  const auto small = exact_propagator(cfg.model.generator(), {period}, opts).front();
  const auto big = exact_propagator(bigger.generator(), {period}, opts).front();
  // Compare the maps restricted to inputs and outputs in the subspace.
  double worst = 0.0;
  const auto ns = static_cast<Eigen::Index>(n);
  const auto nb = static_cast<Eigen::Index>(n + 4);
  const auto k = static_cast<Eigen::Index>(subspace);
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index l = 0; l < k; ++l) {
        for (Eigen::Index r = 0; r < k; ++r) {
          const Complex a = small.mat(r + l * ns, i + j * ns);
          const Complex b = big.mat(r + l * nb, i + j * nb);
          worst = std::max(worst, std::abs(a - b));
        }
      }
    }
  }
  return worst;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config parse error: " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(msg.str());
  }
  check_keys(root, "config",
             {"model", "orders", "times", "initial_state", "subspace", "tolerances", "integrator"});
  const toml::table* model = get_table(root, "model");
  if (!model) {
    throw ConfigError("missing [model] table");
  }
  check_keys(*model, "[model]",
             {"preset", "kind", "omega0", "omega_s", "omega_c", "drive", "gamma", "omega",
              "levels"});

  ExperimentConfig cfg;
  cfg.source = text;
  const double omega = get_number(*model, "omega").value_or(1.0);
  if (!(omega > 0.0)) {
    throw ConfigError("omega must be positive");
  }
  std::optional<Preset> preset;
  if (auto name = get_string(*model, "preset")) {
    preset = find_preset(*name);
    if (!preset) {
      throw ConfigError("unknown preset '" + *name + "' (weak_drive, oscillator, strong_drive)");
    }
    cfg.preset = *name;
  }
  ModelKind kind;
  if (auto k = get_string(*model, "kind")) {
    if (*k == "two_level") {
      kind = ModelKind::kTwoLevel;
    } else if (*k == "oscillator") {
      kind = ModelKind::kOscillator;
    } else {
      throw ConfigError("model.kind must be two_level or oscillator");
    }
    if (preset && preset->kind != kind) {
      throw ConfigError("model.kind contradicts the preset");
    }
  } else if (preset) {
    kind = preset->kind;
  } else {
    throw ConfigError("model.kind is required");
  }

  std::optional<double> omega0 = get_number(*model, "omega0");
  if (!omega0) {
    if (!preset) {
      throw ConfigError("model.omega0 is required");
    }
    omega0 = omega;
    cfg.assumptions.push_back(
        "omega0 is not part of the preset; using omega0 = omega");
  }
  const double gamma = get_number(*model, "gamma").value_or(preset ? preset->gamma * omega : -1.0);
  if (gamma < 0.0) {
    throw ConfigError(preset || model->get("gamma") ? "gamma must be nonnegative"
                                                    : "model.gamma is required");
  }

  try {
    if (kind == ModelKind::kTwoLevel) {
      if (model->get("drive") || model->get("levels")) {
        throw ConfigError("drive and levels apply to the oscillator only");
      }
      TwoLevelParams p;
      p.omega0 = *omega0;
      p.omega_s = get_number(*model, "omega_s").value_or(preset ? preset->omega_s * omega : 0.0);
      p.omega_c = get_number(*model, "omega_c").value_or(preset ? preset->omega_c * omega : 0.0);
      p.gamma = gamma;
      p.omega = omega;
      cfg.model = DrivenModel::two_level(p);
      if (cfg.preset == "strong_drive" && !model->get("omega_c")) {
        cfg.assumptions.push_back(
            "the single drive amplitude is applied as sine driving (omega_c = 0)");
      }
    } else {
      if (model->get("omega_s") || model->get("omega_c")) {
        throw ConfigError("omega_s and omega_c apply to the two-level model only; use drive");
      }
      OscillatorParams p;
      p.omega0 = *omega0;
      p.drive = get_number(*model, "drive").value_or(preset ? preset->drive * omega : 0.0);
      p.gamma = gamma;
      p.omega = omega;
      const auto levels = get_int(*model, "levels");
      if (levels && *levels < static_cast<std::int64_t>(kMinOscillatorLevels)) {
        throw ConfigError("levels must be at least " + std::to_string(kMinOscillatorLevels));
      }
      p.levels = levels ? static_cast<std::size_t>(*levels)
                        : (preset ? preset->levels : kDefaultOscillatorLevels);
      cfg.model = DrivenModel::oscillator(p);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid model: ") + e.what());
  }

  if (const auto* node = root.get("orders")) {
    const auto* arr = node->as_array();
    if (!arr) {
      throw ConfigError("orders must be an array of integers");
    }
    for (const auto& el : *arr) {
      if (!el.is_integer()) {
        throw ConfigError("orders must be an array of integers");
      }
      cfg.orders.push_back(static_cast<int>(*el.value<std::int64_t>()));
    }
  } else if (preset) {
    cfg.orders = preset->orders;
  } else {
    cfg.orders = {1, 2};
  }
  if (cfg.orders.empty()) {
    throw ConfigError("orders must not be empty");
  }
  for (std::size_t i = 0; i < cfg.orders.size(); ++i) {
    if (cfg.orders[i] < 0 || cfg.orders[i] > kMaxMagnusOrder) {
      throw ConfigError("orders must lie in 0..3");
    }
    if (i > 0 && cfg.orders[i] <= cfg.orders[i - 1]) {
      throw ConfigError("orders must be strictly ascending");
    }
  }

  if (const toml::table* times = get_table(root, "times")) {
    check_keys(*times, "[times]", {"n_periods", "samples_per_period"});
    cfg.n_periods = static_cast<int>(get_int(*times, "n_periods").value_or(cfg.n_periods));
    cfg.samples_per_period =
        static_cast<int>(get_int(*times, "samples_per_period").value_or(cfg.samples_per_period));
  }
  if (cfg.n_periods < 0 || cfg.samples_per_period < 1) {
    throw ConfigError("times: n_periods >= 0 and samples_per_period >= 1 required");
  }

  std::optional<std::string> state_file;
  if (const auto* node = root.get("initial_state")) {
    if (node->is_string()) {
      cfg.initial_state = *node->value<std::string>();
    } else if (const auto* t = node->as_table()) {
      check_keys(*t, "[initial_state]", {"kind", "file"});
      cfg.initial_state = get_string(*t, "kind").value_or("custom");
      state_file = get_string(*t, "file");
    } else {
      throw ConfigError("initial_state must be a string or a table");
    }
  }
  cfg.rho0 = parse_initial_state(cfg.initial_state, cfg.model, base_dir, state_file);

  if (auto s = get_int(root, "subspace")) {
    if (*s < 1 || static_cast<std::size_t>(*s) > cfg.model.levels()) {
      throw ConfigError("subspace must lie in 1..levels");
    }
    cfg.subspace = static_cast<std::size_t>(*s);
  } else if (preset && preset->subspace) {
    cfg.subspace = preset->subspace;
  }

  if (const toml::table* tol = get_table(root, "tolerances")) {
    check_keys(*tol, "[tolerances]",
               {"integrator", "truncation", "check_truncation"});
    cfg.tolerances.integrator = get_number(*tol, "integrator").value_or(cfg.tolerances.integrator);
    cfg.tolerances.truncation = get_number(*tol, "truncation").value_or(cfg.tolerances.truncation);
    if (const auto* node = tol->get("check_truncation")) {
      if (!node->is_boolean()) {
        throw ConfigError("check_truncation must be a boolean");
      }
      cfg.tolerances.check_truncation = *node->value<bool>();
    }
  }
  if (!(cfg.tolerances.integrator >= 1e-13)) {
    throw ConfigError("tolerances.integrator must be at least 1e-13");
  }
  if (!(cfg.tolerances.truncation > 0.0)) {
    throw ConfigError("tolerances.truncation must be positive");
  }
  if (const toml::table* integ = get_table(root, "integrator")) {
    check_keys(*integ, "[integrator]", {"mode"});
    const std::string mode = get_string(*integ, "mode").value_or("compose");
    if (mode != "compose" && mode != "direct") {
      throw ConfigError("integrator.mode must be compose or direct");
    }
    cfg.compose = mode == "compose";
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file " + path.string());
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

OmegaSweep OmegaSweep::parse(const std::string& text) {
  OmegaSweep s;
  char c1 = 0;
  char c2 = 0;
  std::istringstream in(text);
  if (!(in >> s.lo >> c1 >> s.hi >> c2 >> s.steps) || c1 != ':' || c2 != ':' ||
      !(in >> std::ws).eof()) {
    throw ConfigError("omega sweep must be lo:hi:steps");
  }
  if (!(s.lo > 0.0) || !(s.hi >= s.lo) || s.steps < 1 || (s.steps == 1 && s.hi != s.lo)) {
    throw ConfigError("omega sweep needs 0 < lo <= hi and steps >= 1");
  }
  return s;
}

std::vector<double> OmegaSweep::values() const {
  std::vector<double> out;
  for (int i = 0; i < steps; ++i) {
    out.push_back(steps == 1 ? lo : lo + (hi - lo) * i / (steps - 1));
  }
  return out;
}

json matrix_json(const Matrix& m) {
  json re = json::array();
  json im = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json rr = json::array();
    json ri = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      rr.push_back(m(r, c).real());
      ri.push_back(m(r, c).imag());
    }
    re.push_back(rr);
    im.push_back(ri);
  }
  return json{{"re", re}, {"im", im}};
}

Matrix matrix_from_json(const json& j) {
  const json& re = j.at("re");
  const auto rows = static_cast<Eigen::Index>(re.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(re.at(0).size()) : 0;
  Matrix m = Matrix::Zero(rows, cols);
  const bool has_im = j.contains("im");
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(re.at(r).size()) != cols) {
      throw DimensionMismatch("matrix rows differ in length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double a = re.at(r).at(c).get<double>();
      const double b = has_im ? j.at("im").at(r).at(c).get<double>() : 0.0;
      m(r, c) = Complex(a, b);
    }
  }
  return m;
}

json model_json(const ExperimentConfig& cfg) {
  json j;
  j["name"] = cfg.model.name();
  if (cfg.model.kind() == ModelKind::kTwoLevel) {
    const auto& p = cfg.model.two_level_params();
    j["kind"] = "two_level";
    j["omega0"] = p.omega0;
    j["omega_s"] = p.omega_s;
    j["omega_c"] = p.omega_c;
    j["gamma"] = p.gamma;
    j["omega"] = p.omega;
  } else {
    const auto& p = cfg.model.oscillator_params();
    j["kind"] = "oscillator";
    j["omega0"] = p.omega0;
    j["drive"] = p.drive;
    j["gamma"] = p.gamma;
    j["omega"] = p.omega;
    j["levels"] = p.levels;
  }
  if (cfg.preset) {
    j["preset"] = *cfg.preset;
  }
  j["assumptions"] = cfg.assumptions;
  return j;
}

json decompose_report(const ExperimentConfig& cfg) {
  json report;
  report["version"] = kVersion;
  report["command"] = "decompose";
  report["model"] = model_json(cfg);
  json orders = json::array();
  for (int n : cfg.orders) {
    const LindbladDecomposition dec = decompose(cfg.model, n);
    json entry;
    entry["order"] = n;
    entry["basis"] = cfg.model.projection_basis_labels(n);
    json hs = json::array();
    json cs = json::array();
    for (int j = 0; j <= n; ++j) {
      hs.push_back(matrix_json(dec.h_series.coeff(j)));
      cs.push_back(matrix_json(dec.c_series.coeff(j)));
    }
    entry["h_series"] = hs;
    entry["c_series"] = cs;
    entry["residuals"] = dec.residuals;
    entry["residual"] = dec.residual;
    entry["h_at_omega"] = matrix_json(dec.h_at(cfg.model.omega()));
    entry["c_at_omega"] = matrix_json(dec.c_at(cfg.model.omega()));
    orders.push_back(entry);
  }
  report["orders"] = orders;
  return report;
}

CorrectReport correct_report(const ExperimentConfig& cfg) {
  CorrectReport out;
  json& report = out.report;
  report["version"] = kVersion;
  report["command"] = "correct";
  report["model"] = model_json(cfg);
  const double omega = cfg.model.omega();
  const double x = 1.0 / omega;
  json orders = json::array();
  for (int n : cfg.orders) {
    const LindbladDecomposition dec = decompose(cfg.model, n);
    const OmegaSeries c_n = dec.c_series.truncated(n);
    const EigSeries eig = perturbative_eig(c_n, n);
    json entry;
    entry["order"] = n;
    entry["omega"] = omega;
    entry["basis"] = cfg.model.projection_basis_labels(n);
    entry["c_n"] = matrix_json(c_n.evaluate(omega));
    entry["min_eig_c_n"] = hermitian_eig(hermitian_part(c_n.evaluate(omega))).values.minCoeff();
    entry["zero_tolerance"] = eig.zero_tolerance;
    entry["persistent_degeneracy"] = eig.has_persistent_degeneracy();
    json branches = json::array();
    for (const auto& b : eig.branches) {
      json jb;
      jb["mu"] = b.values;
      const auto lead = b.leading_order(eig.zero_tolerance);
      jb["leading_order"] = lead ? json(*lead) : json(nullptr);
      jb["lambda_n"] = b.value_at(x);
      json vecs = json::array();
      for (const auto& v : b.vectors) {
        vecs.push_back(matrix_json(v));
      }
      jb["eigenvector_series"] = vecs;
      branches.push_back(jb);
    }
    try {
      const auto completions = complete_all(eig);
      const Matrix c_tilde =
          reconstruct(eig, completions, omega, EigenvectorConvention::kSeriesNormalized);
      bool needed = false;
      for (std::size_t i = 0; i < completions.size(); ++i) {
        branches[i]["lambda_tilde"] = completions[i].evaluate(x);
        branches[i]["lambda_tilde_polynomial"] = completions[i].polynomial;
        const bool same = completions[i].unchanged(eig.branches[i].values, eig.zero_tolerance);
        branches[i]["modified"] = !same;
        needed = needed || !same;
      }
      entry["c_tilde"] = matrix_json(c_tilde);
      entry["min_eig_c_tilde"] = hermitian_eig(c_tilde).values.minCoeff();
      const Matrix c_plain = c_n.evaluate(omega);
      const bool differs =
          (c_tilde - c_plain).norm() > 1e-12 * std::max(1.0, c_plain.norm());
      entry["eigenvalues_modified"] = needed;
      entry["correction_needed"] = differs;
      if (!differs) {
        entry["note"] = "no correction needed: the coefficient matrix is already positive";
      }
    } catch (const CorrectionImpossible& e) {
      out.impossible = true;
      json err = error_json("CorrectionImpossible", e.what());
      err["eigen_index"] = e.eigen_index();
      err["leading_order"] = e.leading_order();
      err["leading_coefficient"] = e.leading_coefficient();
      entry["error"] = err;
    }
    entry["eigenvalues"] = branches;
    orders.push_back(entry);
  }
  report["orders"] = orders;
  return out;
}

BenchmarkReport benchmark_report(const ExperimentConfig& cfg) {
  BenchmarkSpec spec;
  spec.orders = cfg.orders;
  spec.n_periods = cfg.n_periods;
  spec.samples_per_period = cfg.samples_per_period;
  spec.rho0 = cfg.rho0;
  spec.subspace = cfg.subspace;
  spec.integrator.tol = cfg.tolerances.integrator;
  spec.integrator.compose = cfg.compose;
  const BenchmarkResult r = run_benchmark(cfg.model, spec);

  BenchmarkReport out;
  out.columns.push_back("t_over_T");
  out.columns.push_back("population_exact");
  for (int n : cfg.orders) {
    out.columns.push_back("population_magnus_" + std::to_string(n));
  }
  for (int n : cfg.orders) {
    out.columns.push_back("population_corrected_" + std::to_string(n));
  }
  for (int n : cfg.orders) {
    out.columns.push_back("d_" + std::to_string(n));
  }
  for (int n : cfg.orders) {
    out.columns.push_back("d_tilde_" + std::to_string(n));
  }
  for (std::size_t i = 0; i < r.t_over_T.size(); ++i) {
    std::vector<double> row{r.t_over_T[i], r.population_exact[i]};
    for (const auto* m : {&r.population_magnus, &r.population_corrected, &r.d, &r.d_tilde}) {
      for (int n : cfg.orders) {
        row.push_back(m->at(n)[i]);
      }
    }
    out.rows.push_back(std::move(row));
  }

  json& meta = out.metadata;
  meta["version"] = kVersion;
  meta["command"] = "benchmark";
  meta["model"] = model_json(cfg);
  meta["config"] = cfg.source;
  meta["orders"] = cfg.orders;
  meta["n_periods"] = cfg.n_periods;
  meta["samples_per_period"] = cfg.samples_per_period;
  meta["initial_state"] = cfg.initial_state;
  meta["observable"] = "ground-state population";
  meta["deviation"] = "log10 Hilbert-Schmidt norm of Pi (V - V_n) Pi, floored at -16";
  meta["subspace"] = cfg.subspace ? json(*cfg.subspace) : json(nullptr);
  meta["integrator"] = {{"method", "Dormand-Prince 5(4), adaptive"},
                        {"tol", cfg.tolerances.integrator},
                        {"mode", cfg.compose ? "compose" : "direct"},
                        {"steps", r.stats.steps},
                        {"rhs_evaluations", r.stats.rhs_evaluations},
                        {"t_integrated", r.stats.t_end}};
  if (cfg.model.kind() == ModelKind::kOscillator && cfg.tolerances.check_truncation) {
    const std::size_t k = cfg.subspace.value_or(cfg.model.levels());
    const double change = truncation_change(cfg, k);
    meta["truncation_check"] = {{"levels", cfg.model.levels()},
                                {"compared_levels", cfg.model.levels() + 4},
                                {"max_change", change},
                                {"tolerance", cfg.tolerances.truncation},
                                {"converged", change <= cfg.tolerances.truncation}};
  }
  meta["columns"] = out.columns;
  return out;
}

void write_csv(const fs::path& path, const std::vector<std::string>& columns,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out << (c ? "," : "") << columns[c];
  }
  out << '\n' << std::setprecision(17);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << (c ? "," : "") << row[c];
    }
    out << '\n';
  }
}

int run_command(const RunRequest& request, std::ostream& err) {
  try {
    if (request.command != "decompose" && request.command != "correct" &&
        request.command != "benchmark") {
      throw ConfigError("unknown command '" + request.command + "'");
    }
    ExperimentConfig cfg = load_config(request.config);
    if (!request.orders.empty()) {
      std::vector<int> orders = request.orders;
      std::sort(orders.begin(), orders.end());
      orders.erase(std::unique(orders.begin(), orders.end()), orders.end());
      for (int n : orders) {
        if (n < 0 || n > kMaxMagnusOrder) {
          throw ConfigError("--order must lie in 0..3");
        }
      }
      cfg.orders = orders;
    }
    std::vector<std::pair<fs::path, ExperimentConfig>> runs;
    if (request.omega_sweep) {
      const OmegaSweep sweep = OmegaSweep::parse(*request.omega_sweep);
      const auto values = sweep.values();
      json index = json::array();
      for (std::size_t i = 0; i < values.size(); ++i) {
        ExperimentConfig c = cfg;
        c.model = cfg.model.with_omega(values[i]);
        runs.emplace_back(request.out / sweep_dir(i), c);
        index.push_back({{"omega", values[i]}, {"directory", sweep_dir(i)}});
      }
      fs::create_directories(request.out);
      write_json(request.out / "sweep.json", json{{"version", kVersion},
                                                  {"command", request.command},
                                                  {"runs", index}});
    } else {
      runs.emplace_back(request.out, cfg);
    }

    int code = kExitOk;
    for (const auto& [dir, c] : runs) {
      fs::create_directories(dir);
      if (request.command == "decompose") {
        write_json(dir / "decompose.json", decompose_report(c));
      } else if (request.command == "correct") {
        const CorrectReport rep = correct_report(c);
        write_json(dir / "correct.json", rep.report);
        if (rep.impossible) {
          for (const auto& entry : rep.report["orders"]) {
            if (entry.contains("error")) {
              err << "order " << entry["order"] << ": "
                  << entry["error"]["message"].get<std::string>() << '\n';
            }
          }
          code = kExitCorrectionImpossible;
        }
      } else {
        const BenchmarkReport rep = benchmark_report(c);
        write_csv(dir / "benchmark.csv", rep.columns, rep.rows);
        write_json(dir / "benchmark.json", rep.metadata);
        if (rep.metadata.contains("truncation_check") &&
            !rep.metadata["truncation_check"]["converged"].get<bool>()) {
          err << "warning: oscillator truncation changes V(T) by "
              << rep.metadata["truncation_check"]["max_change"].get<double>()
              << "; consider more levels\n";
        }
      }
    }
    return code;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const CorrectionImpossible& e) {
    err << "correction impossible: " << e.what() << '\n';
    return kExitCorrectionImpossible;
  } catch (const BasisInsufficient& e) {
    err << "basis insufficient: " << e.what() << '\n';
    return kExitBasisInsufficient;
  } catch (const IntegratorFailure& e) {
    err << "integrator failure: " << e.what() << '\n';
    return kExitIntegrator;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace cpmagnus
