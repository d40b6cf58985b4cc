#include "knnloc/serialize.hpp"

#include "knnloc/errors.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace knnloc {

namespace {

Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vector_from(const Json& a) {
  Eigen::VectorXd v(static_cast<Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Index>(i)) = a[i].get<double>();
  return v;
}

Json points_json(const RowMatrix& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  Json data = Json::array();
  for (Index i = 0; i < m.size(); ++i) data.push_back(m.data()[i]);
  j["data"] = std::move(data);
  return j;
}

RowMatrix points_from(const Json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const Json& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols) {
    throw std::invalid_argument("model: point block size does not match rows x cols");
  }
  RowMatrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = data[static_cast<std::size_t>(i)].get<double>();
  return m;
}

Json number_or_string(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

template <typename F>
auto translate(const char* what, F f) -> decltype(f()) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string(what) + ": " + e.what());
  }
}

} // namespace

const char* to_string(ErrorMode mode) {
  return mode == ErrorMode::gaussian ? "gaussian" : "empirical";
}

ErrorMode error_mode_from_string(std::string_view s) {
  if (s == "gaussian") return ErrorMode::gaussian;
  if (s == "empirical") return ErrorMode::empirical;
  throw std::invalid_argument("error mode must be 'gaussian' or 'empirical', got '" +
                              std::string(s) + "'");
}

Json to_json(const Standardizer& s) {
  Json j;
  j["mean"] = vector_json(s.mean);
  j["scale"] = vector_json(s.scale);
  Json c = Json::array();
  for (bool b : s.constant) c.push_back(b);
  j["constant"] = std::move(c);
  return j;
}

Standardizer standardizer_from_json(const Json& j) {
  return translate("standardizer", [&] {
    Standardizer s;
    s.mean = vector_from(j.at("mean"));
    s.scale = vector_from(j.at("scale"));
    for (const auto& b : j.at("constant")) s.constant.push_back(b.get<bool>());
    if (s.scale.size() != s.mean.size() ||
        static_cast<Index>(s.constant.size()) != s.mean.size()) {
      throw std::invalid_argument("standardizer: field lengths differ");
    }
    return s;
  });
}

Json to_json(const MeanModel& m) {
  Json j;
  j["support"] = m.support();
  j["k"] = m.k();
  j["leaf_size"] = m.average().leaf_size();
  j["train_rows"] = m.train_rows();
  j["points"] = points_json(m.average().points());
  j["responses"] = vector_json(m.average().values());
  return j;
}

MeanModel mean_model_from_json(const Json& j) {
  return translate("mean model", [&] {
    return MeanModel(j.at("support").get<Support>(), j.at("k").get<Index>(),
                     points_from(j.at("points")), vector_from(j.at("responses")),
                     j.at("train_rows").get<IndexSet>(), j.at("leaf_size").get<Index>());
  });
}

Json to_json(const VarianceModel& v) {
  Json j;
  j["homoscedastic"] = v.homoscedastic();
  j["support"] = v.support();
  j["k"] = v.k();
  j["leaf_size"] = v.average().leaf_size();
  j["train_rows"] = v.train_rows();
  if (v.homoscedastic()) j["constant_variance"] = v.constant_variance();
  j["points"] = points_json(v.average().points());
  j["squared_residuals"] = vector_json(v.average().values());
  return j;
}

VarianceModel variance_model_from_json(const Json& j) {
  return translate("variance model", [&] {
    return VarianceModel(j.at("support").get<Support>(), j.at("k").get<Index>(),
                         points_from(j.at("points")), vector_from(j.at("squared_residuals")),
                         j.at("train_rows").get<IndexSet>(), j.at("homoscedastic").get<bool>(),
                         j.at("leaf_size").get<Index>());
  });
}

Json to_json(const ScaleLocModel& model) {
  Json j;
  j["format"] = "knnloc-model";
  j["version"] = kModelFormatVersion;
  j["feature_names"] = model.feature_names;
  j["target_name"] = model.target_name;
  j["error_mode"] = to_string(model.error_mode);
  j["standardizer"] = to_json(model.standardizer);
  j["mean"] = to_json(model.mean);
  j["variance"] = to_json(model.variance);
  if (model.calibration) {
    j["calibration"] = {{"residuals", vector_json(*model.calibration)},
                        {"dropped", model.calibration_dropped}};
  }
  return j;
}

ScaleLocModel model_from_json(const Json& j) {
  return translate("model", [&] {
    if (j.at("format").get<std::string>() != "knnloc-model") {
      throw std::invalid_argument("model: not a knnloc model document");
    }
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw std::invalid_argument("model: unsupported format version");
    }
    ScaleLocModel m;
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.target_name = j.at("target_name").get<std::string>();
    m.error_mode = error_mode_from_string(j.at("error_mode").get<std::string>());
    m.standardizer = standardizer_from_json(j.at("standardizer"));
    m.mean = mean_model_from_json(j.at("mean"));
    m.variance = variance_model_from_json(j.at("variance"));
    if (j.contains("calibration")) {
      m.calibration = vector_from(j["calibration"].at("residuals"));
      m.calibration_dropped = j["calibration"].at("dropped").get<Index>();
    }
    m.validate();
    return m;
  });
}

Json to_json(const SelectionReport& r) {
  Json j;
  j["target"] = to_string(r.target);
  j["alpha"] = r.alpha;
  j["n_tests"] = r.n_tests;
  j["threshold"] = r.n_tests > 0 ? Json(r.threshold()) : Json(nullptr);
  j["n_eval"] = r.n_eval;
  j["k_full"] = r.k_full;
  Json features = Json::array();
  for (const FeatureTest& f : r.features) {
    features.push_back({{"feature", f.feature},
                        {"w_tilde", number_or_string(f.w_tilde)},
                        {"sd", number_or_string(f.sd)},
                        {"t", number_or_string(f.t)},
                        {"p", number_or_string(f.p)},
                        {"k_without", f.k_without},
                        {"selected", f.selected}});
  }
  j["features"] = std::move(features);
  j["selected"] = r.selected();
  return j;
}

Json to_json(const KSelectionTrace& t) {
  return {{"grid", t.grid}, {"scores", t.scores}, {"chosen", t.chosen}};
}

Json to_json(const SplitPlan& plan) {
  Json roles = Json::array();
  for (const SplitRole& r : plan.roles()) {
    roles.push_back({{"name", r.name}, {"size", r.indices.size()}, {"rows", r.indices}});
  }
  return {{"seed", plan.seed()}, {"n", plan.n()}, {"roles", std::move(roles)}};
}

Json to_json(const KGridPolicy& g) {
  switch (g.kind) {
    case KGridPolicy::Kind::automatic:
      return {{"kind", "auto"}, {"full_up_to", g.full_up_to}, {"ratio", g.ratio}};
    case KGridPolicy::Kind::full:
      return {{"kind", "full"}};
    case KGridPolicy::Kind::geometric:
      return {{"kind", "geometric"}, {"ratio", g.ratio}};
    case KGridPolicy::Kind::explicit_values:
      return {{"kind", "values"}, {"values", g.values}};
  }
  return {};
}

KGridPolicy k_grid_from_json(const Json& j) {
  return translate("k_grid", [&] {
    KGridPolicy g;
    if (j.is_array()) {
      g.kind = KGridPolicy::Kind::explicit_values;
      g.values = j.get<std::vector<Index>>();
      return g;
    }
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "auto") {
      g.kind = KGridPolicy::Kind::automatic;
    } else if (kind == "full") {
      g.kind = KGridPolicy::Kind::full;
    } else if (kind == "geometric") {
      g.kind = KGridPolicy::Kind::geometric;
    } else if (kind == "values") {
      g.kind = KGridPolicy::Kind::explicit_values;
      g.values = j.at("values").get<std::vector<Index>>();
    } else {
      throw std::invalid_argument("k_grid: unknown kind '" + kind + "'");
    }
    if (j.contains("full_up_to")) g.full_up_to = j["full_up_to"].get<Index>();
    if (j.contains("ratio")) g.ratio = j["ratio"].get<double>();
    return g;
  });
}

Json to_json(const PipelineConfig& c) {
  Json roles = Json::object();
  for (const auto& [name, w] : c.roles) roles[name] = w;
  Json j;
  j["roles"] = std::move(roles);
  j["selection_alpha"] = c.selection_alpha;
  j["interval_alpha"] = c.interval_alpha;
  j["k_grid"] = to_json(c.k_grid);
  j["standardize"] = c.standardize;
  j["error_mode"] = to_string(c.error_mode);
  j["seed"] = c.seed;
  j["feature_selection"] = c.feature_selection;
  j["candidates"] = c.candidates ? Json(*c.candidates) : Json(nullptr);
  j["leaf_size"] = c.leaf_size;
  return j;
}

PipelineConfig config_from_json(const Json& j, PipelineConfig c) {
  return translate("config", [&] {
    if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key == "roles") {
        c.roles.clear();
        for (const auto& [name, w] : value.items()) c.roles.emplace_back(name, w.get<double>());
      } else if (key == "selection_alpha") {
        c.selection_alpha = value.get<double>();
      } else if (key == "interval_alpha") {
        c.interval_alpha = value.get<double>();
      } else if (key == "k_grid") {
        c.k_grid = k_grid_from_json(value);
      } else if (key == "standardize") {
        c.standardize = value.get<bool>();
      } else if (key == "error_mode") {
        c.error_mode = error_mode_from_string(value.get<std::string>());
      } else if (key == "seed") {
        c.seed = value.get<std::uint64_t>();
      } else if (key == "feature_selection") {
        c.feature_selection = value.get<bool>();
      } else if (key == "candidates") {
        if (value.is_null()) {
          c.candidates.reset();
        } else {
          c.candidates = value.get<Support>();
        }
      } else if (key == "leaf_size") {
        c.leaf_size = value.get<Index>();
      } else if (key != "threads") {
        throw std::invalid_argument("config: unknown key '" + key + "'");
      }
    }
    c.validate();
    return c;
  });
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path.string());
  try {
    return Json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": malformed JSON: " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

void save_model(const std::filesystem::path& path, const ScaleLocModel& model) {
  write_json(path, to_json(model));
}

ScaleLocModel load_model(const std::filesystem::path& path) {
  return model_from_json(read_json(path));
}

} // namespace knnloc
