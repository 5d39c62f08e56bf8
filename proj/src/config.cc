#include "wmqd/config.h"

#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "wmqd/errors.h"
#include "wmqd/watermark.h"

namespace wmqd {

namespace {

using nlohmann::json;

class Reader {
 public:
  Reader(const std::string& text, std::string source)
      : text_(text), source_(std::move(source)) {}

  // Best-effort line of a key path: each component is searched for as a
  // quoted key after the position of the previous one.
  std::string where(const std::vector<std::string>& path) const {
    std::size_t pos = 0;
    std::size_t found = std::string::npos;
    for (const auto& key : path) {
      const auto at = text_.find("\"" + key + "\"", pos);
      if (at == std::string::npos) break;
      found = at;
      pos = at + key.size() + 2;
    }
    std::string out = source_ + ": " + join(path);
    if (found != std::string::npos) {
      out += " (line " + std::to_string(line_of(found)) + ")";
    }
    return out;
  }

  std::size_t line_of(std::size_t byte) const {
    std::size_t line = 1;
    for (std::size_t i = 0; i < byte && i < text_.size(); ++i) {
      if (text_[i] == '\n') ++line;
    }
    return line;
  }

  [[noreturn]] void fail(const std::vector<std::string>& path,
                         const std::string& msg) const {
    throw ParseError(where(path) + ": " + msg);
  }

  [[noreturn]] void invalid(const std::vector<std::string>& path,
                            const std::string& msg) const {
    throw ValidationError(where(path) + ": " + msg);
  }

  double number(const json& j, const std::vector<std::string>& path) const {
    if (!j.is_number()) fail(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(path, "number is not finite");
    return v;
  }

  long integer(const json& j, const std::vector<std::string>& path) const {
    if (!j.is_number_integer() && !j.is_number_unsigned()) {
      fail(path, "expected an integer");
    }
    return j.get<long>();
  }

  // Accepts a scalar (1 x 1), a flat array (one row), a nested row-major
  // array, or {"diag": [...]}.
  Matrix matrix(const json& j, const std::vector<std::string>& path) const {
    if (j.is_number()) return Matrix::Constant(1, 1, number(j, path));
    if (j.is_object()) {
      if (j.size() != 1 || !j.contains("diag")) {
        fail(path, "matrix objects must have the single key \"diag\"");
      }
      const Matrix d = matrix(j.at("diag"), path);
      if (d.rows() != 1) fail(path, "\"diag\" must be a flat array");
      return Matrix(d.row(0).transpose().asDiagonal());
    }
    if (!j.is_array() || j.empty()) {
      fail(path, "expected a non-empty numeric array");
    }
    if (!j.front().is_array()) {
      Matrix row(1, static_cast<Eigen::Index>(j.size()));
      for (std::size_t c = 0; c < j.size(); ++c) {
        row(0, static_cast<Eigen::Index>(c)) = number(j[c], path);
      }
      return row;
    }
    const std::size_t cols = j.front().size();
    if (cols == 0) fail(path, "matrix rows must not be empty");
    Matrix M(static_cast<Eigen::Index>(j.size()),
             static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < j.size(); ++r) {
      if (!j[r].is_array()) fail(path, "mixed rows and scalars");
      if (j[r].size() != cols) {
        fail(path, "ragged matrix: row " + std::to_string(r) + " has " +
                       std::to_string(j[r].size()) + " entries, expected " +
                       std::to_string(cols));
      }
      for (std::size_t c = 0; c < cols; ++c) {
        M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            number(j[r][c], path);
      }
    }
    return M;
  }

  const json& require(const json& obj, const std::string& key,
                      const std::vector<std::string>& path) const {
    if (!obj.is_object()) fail(path, "expected an object");
    if (!obj.contains(key)) {
      auto p = path;
      p.push_back(key);
      fail(p, "missing required key");
    }
    return obj.at(key);
  }

 private:
  static std::string join(const std::vector<std::string>& path) {
    std::string s;
    for (const auto& k : path) s += (s.empty() ? "" : ".") + k;
    return s.empty() ? "<root>" : s;
  }

  const std::string& text_;
  std::string source_;
};

void check_keys(const Reader& rd, const json& obj,
                const std::vector<std::string>& path,
                const std::vector<std::string>& allowed) {
  if (!obj.is_object()) rd.fail(path, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const auto& a : allowed) ok = ok || a == key;
    if (!ok) {
      auto p = path;
      p.push_back(key);
      rd.fail(p, "unknown key");
    }
  }
}

json matrix_json(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(row);
  }
  return rows;
}

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix M(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) M(r, c++) = v;
    ++r;
  }
  return M;
}

Matrix diag(std::initializer_list<double> d) {
  Vector v(static_cast<Eigen::Index>(d.size()));
  Eigen::Index i = 0;
  for (double x : d) v(i++) = x;
  return v.asDiagonal();
}

}  // namespace

ExperimentConfig parse_config(const std::string& text,
                              const std::string& source) {
  const Reader rd(text, source);
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(source + ": line " + std::to_string(rd.line_of(e.byte)) +
                     ": " + e.what());
  }
  check_keys(rd, root, {}, {"plant", "attack", "watermark", "detector", "sim",
                            "design", "preset"});

  ExperimentConfig cfg;
  if (root.contains("preset")) {
    if (!root["preset"].is_string()) rd.fail({"preset"}, "expected a string");
    cfg = preset(root["preset"].get<std::string>());
  }

  if (root.contains("plant")) {
    const json& pj = root["plant"];
    check_keys(rd, pj, {"plant"}, {"A", "B", "C", "Q", "R", "W", "U"});
    Matrix* fields[] = {&cfg.plant.A, &cfg.plant.B, &cfg.plant.C, &cfg.plant.Q,
                        &cfg.plant.R, &cfg.plant.W, &cfg.plant.U};
    const char* names[] = {"A", "B", "C", "Q", "R", "W", "U"};
    for (int i = 0; i < 7; ++i) {
      *fields[i] = rd.matrix(rd.require(pj, names[i], {"plant"}),
                             {"plant", names[i]});
    }
  } else if (!root.contains("preset")) {
    rd.fail({"plant"}, "missing required key");
  }
  try {
    cfg.plant.validate();
  } catch (const ValidationError& e) {
    rd.invalid({"plant"}, e.what());
  }

  if (root.contains("attack")) {
    const json& aj = root["attack"];
    check_keys(rd, aj, {"attack"}, {"A_a", "Q_a", "rho", "sigma_z_sq"});
    const bool miso = aj.contains("rho") || aj.contains("sigma_z_sq");
    const bool full = aj.contains("A_a") || aj.contains("Q_a");
    if (miso == full) {
      rd.fail({"attack"}, "give either {A_a, Q_a} or {rho, sigma_z_sq}");
    }
    try {
      if (miso) {
        const double rho = rd.number(rd.require(aj, "rho", {"attack"}),
                                     {"attack", "rho"});
        const double s = rd.number(rd.require(aj, "sigma_z_sq", {"attack"}),
                                   {"attack", "sigma_z_sq"});
        if (cfg.plant.m() != 1) {
          rd.invalid({"attack", "rho"},
                     "the rho/sigma_z_sq shorthand needs a single-output plant");
        }
        cfg.attack = build_miso_attack(rho, s);
        cfg.rho = rho;
        cfg.sigma_z_sq = s;
      } else {
        cfg.attack = build_attack(
            rd.matrix(rd.require(aj, "A_a", {"attack"}), {"attack", "A_a"}),
            rd.matrix(rd.require(aj, "Q_a", {"attack"}), {"attack", "Q_a"}));
        cfg.rho.reset();
        cfg.sigma_z_sq.reset();
      }
    } catch (const InstabilityError& e) {
      throw InstabilityError(rd.where({"attack"}) + ": " + e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      rd.invalid({"attack"}, e.what());
    }
  } else if (!root.contains("preset")) {
    rd.fail({"attack"}, "missing required key");
  }
  if (cfg.attack.m() != cfg.plant.m()) {
    rd.invalid({"attack"}, "attack model must be m x m with m = rows of C");
  }

  if (root.contains("watermark")) {
    const json& wj = root["watermark"];
    check_keys(rd, wj, {"watermark"},
               {"Sigma_e", "budget_J", "optimize", "variant"});
    if (wj.contains("Sigma_e")) {
      cfg.watermark.Sigma_e =
          rd.matrix(wj["Sigma_e"], {"watermark", "Sigma_e"});
      try {
        WatermarkSpec{*cfg.watermark.Sigma_e}.validate(cfg.plant.p());
      } catch (const ValidationError& e) {
        rd.invalid({"watermark", "Sigma_e"}, e.what());
      }
    }
    if (wj.contains("budget_J")) {
      cfg.watermark.budget_J =
          rd.number(wj["budget_J"], {"watermark", "budget_J"});
      if (!(cfg.watermark.budget_J >= 0.0)) {
        rd.invalid({"watermark", "budget_J"}, "must be >= 0");
      }
    }
    if (wj.contains("optimize")) {
      if (!wj["optimize"].is_boolean()) {
        rd.fail({"watermark", "optimize"}, "expected true or false");
      }
      cfg.watermark.optimize = wj["optimize"].get<bool>();
    }
    if (wj.contains("variant")) {
      if (!wj["variant"].is_string()) {
        rd.fail({"watermark", "variant"}, "expected a string");
      }
      try {
        cfg.watermark.variant =
            parse_optimizer_variant(wj["variant"].get<std::string>());
      } catch (const ParseError& e) {
        rd.fail({"watermark", "variant"}, e.what());
      }
    }
  }

  if (root.contains("detector")) {
    const json& dj = root["detector"];
    check_keys(rd, dj, {"detector"}, {"variant", "arl_h", "np_alpha", "np_eta"});
    if (dj.contains("variant")) {
      if (!dj["variant"].is_string()) {
        rd.fail({"detector", "variant"}, "expected a string");
      }
      try {
        cfg.detector.variant =
            parse_detector_variant(dj["variant"].get<std::string>());
      } catch (const ParseError& e) {
        rd.fail({"detector", "variant"}, e.what());
      }
    }
    if (dj.contains("arl_h")) {
      cfg.detector.arl_h = rd.number(dj["arl_h"], {"detector", "arl_h"});
    }
    if (dj.contains("np_alpha")) {
      cfg.detector.np_alpha =
          rd.number(dj["np_alpha"], {"detector", "np_alpha"});
    }
    if (dj.contains("np_eta")) {
      cfg.detector.np_eta = rd.number(dj["np_eta"], {"detector", "np_eta"});
    }
    try {
      cfg.detector.validate();
    } catch (const ValidationError& e) {
      rd.invalid({"detector"}, e.what());
    }
  }

  if (root.contains("sim")) {
    const json& sj = root["sim"];
    check_keys(rd, sj, {"sim"},
               {"nu", "burn_in", "max_steps", "trials", "seed"});
    if (sj.contains("nu")) cfg.nu = rd.integer(sj["nu"], {"sim", "nu"});
    if (sj.contains("burn_in")) {
      cfg.burn_in = rd.integer(sj["burn_in"], {"sim", "burn_in"});
    }
    if (sj.contains("max_steps")) {
      cfg.max_steps = rd.integer(sj["max_steps"], {"sim", "max_steps"});
    }
    if (sj.contains("trials")) {
      cfg.trials = rd.integer(sj["trials"], {"sim", "trials"});
    }
    if (sj.contains("seed")) {
      if (!sj["seed"].is_number_unsigned() && !sj["seed"].is_number_integer()) {
        rd.fail({"sim", "seed"}, "expected a non-negative integer");
      }
      if (!sj["seed"].is_number_unsigned() &&
          sj["seed"].get<long long>() < 0) {
        rd.fail({"sim", "seed"}, "expected a non-negative integer");
      }
      cfg.seed = sj["seed"].get<std::uint64_t>();
    }
    if (!(cfg.burn_in >= 0 && cfg.burn_in < cfg.nu && cfg.nu < cfg.max_steps)) {
      rd.invalid({"sim"}, "requires 0 <= burn_in < nu < max_steps");
    }
    if (cfg.trials < 1) rd.invalid({"sim", "trials"}, "must be >= 1");
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig cfg;
  if (name == "system-a") {
    PlantModel& p = cfg.plant;
    p.A = mat({{0.75, 0.2}, {0.2, 1.0}});
    p.B = mat({{0.9, 0.5}, {0.1, 1.2}});
    p.C = mat({{1.0, -1.0}});
    p.Q = diag({1.0, 1.0});
    p.R = mat({{1.0}});
    p.W = diag({1.0, 2.0});
    p.U = diag({0.4, 0.7});
    cfg.rho = 0.5;
    cfg.sigma_z_sq = 10.0;
    cfg.attack = build_miso_attack(0.5, 10.0);
  } else if (name == "system-b") {
    PlantModel& p = cfg.plant;
    p.A = mat({{0.968, 0.0, 0.082, 0.0},
               {0.0, 0.978, 0.0, 0.064},
               {0.0, 0.0, 0.917, 0.0},
               {0.0, 0.0, 0.0, 0.935}});
    p.B = mat({{0.164, 0.004}, {0.002, 0.124}, {0.0, 0.092}, {0.060, 0.0}});
    p.C = mat({{5.0, 0.0, 0.0, 0.0}, {0.0, 5.0, 0.0, 0.0}});
    p.R = diag({0.5, 0.5});
    p.Q = diag({0.25, 0.25, 0.25, 0.25});
    p.U = diag({2.0, 2.0});
    p.W = diag({5.0, 5.0, 1.0, 1.0});
    // The four listed attack-dynamics entries are read row-major as a 2 x 2
    // matrix.
    cfg.attack = build_attack(mat({{0.4, 0.2}, {0.2, 0.7}}), diag({5.0, 5.0}));
  } else {
    throw ParseError("unknown preset '" + name +
                     "' (expected system-a or system-b)");
  }
  cfg.plant.validate();
  cfg.detector.arl_h = 1000.0;
  return cfg;
}

std::string to_json_text(const ExperimentConfig& cfg,
                         const std::optional<Matrix>& Sigma_e,
                         const std::string& extra_json) {
  json root;
  const PlantModel& p = cfg.plant;
  root["plant"] = {{"A", matrix_json(p.A)}, {"B", matrix_json(p.B)},
                   {"C", matrix_json(p.C)}, {"Q", matrix_json(p.Q)},
                   {"R", matrix_json(p.R)}, {"W", matrix_json(p.W)},
                   {"U", matrix_json(p.U)}};
  if (cfg.rho && cfg.sigma_z_sq) {
    root["attack"] = {{"rho", *cfg.rho}, {"sigma_z_sq", *cfg.sigma_z_sq}};
  } else {
    root["attack"] = {{"A_a", matrix_json(cfg.attack.A_a)},
                      {"Q_a", matrix_json(cfg.attack.Q_a)}};
  }
  json wm = {{"budget_J", cfg.watermark.budget_J},
             {"optimize", cfg.watermark.optimize},
             {"variant", to_string(cfg.watermark.variant)}};
  const auto& S = Sigma_e ? Sigma_e : cfg.watermark.Sigma_e;
  if (S) wm["Sigma_e"] = matrix_json(*S);
  root["watermark"] = wm;
  json det = {{"variant", to_string(cfg.detector.variant)},
              {"arl_h", cfg.detector.arl_h}};
  if (cfg.detector.np_alpha > 0.0) det["np_alpha"] = cfg.detector.np_alpha;
  if (cfg.detector.np_eta) det["np_eta"] = *cfg.detector.np_eta;
  root["detector"] = det;
  root["sim"] = {{"nu", cfg.nu},
                 {"burn_in", cfg.burn_in},
                 {"max_steps", cfg.max_steps},
                 {"trials", cfg.trials},
                 {"seed", cfg.seed}};
  if (!extra_json.empty()) root["design"] = json::parse(extra_json);
  return root.dump(2) + "\n";
}

Matrix resolve_watermark(const ExperimentConfig& cfg,
                         const ControllerSolution& ctrl) {
  if (cfg.watermark.Sigma_e) return *cfg.watermark.Sigma_e;
  SweepOptions opts;
  opts.optimize = cfg.watermark.optimize;
  opts.variant = cfg.watermark.variant;
  return watermark_for_budget(cfg.plant, ctrl, cfg.attack,
                              cfg.watermark.budget_J, opts);
}

SimConfig to_sim_config(const ExperimentConfig& cfg, const Matrix& Sigma_e) {
  SimConfig s;
  s.plant = cfg.plant;
  s.attack = cfg.attack;
  s.Sigma_e = Sigma_e;
  s.detector = cfg.detector;
  s.nu = cfg.nu;
  s.burn_in = cfg.burn_in;
  s.max_steps = cfg.max_steps;
  s.trials = cfg.trials;
  s.seed = cfg.seed;
  return s;
}

}  // namespace wmqd
