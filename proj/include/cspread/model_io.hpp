// Versioned JSON documents for fitted models.
#pragma once

#include <fstream>
#include <string>

#include "cspread/learners.hpp"
#include "cspread/prediction.hpp"
#include "json.hpp"

namespace cspread {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

inline double number_from(const nlohmann::json& j) { return j.is_null() ? kMissing : j.get<double>(); }

}  // namespace detail

inline nlohmann::json to_json(const Tree& t) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : t.nodes) {
    nlohmann::json j;
    j["cover"] = n.cover;
    if (n.is_leaf()) {
      j["value"] = n.value;
      if (!n.dist.empty()) j["dist"] = n.dist;
    } else {
      j["feature"] = n.feature;
      j["threshold"] = detail::number_or_null(n.threshold);
      j["default_left"] = n.default_left;
      j["left"] = n.left;
      j["right"] = n.right;
    }
    nodes.push_back(std::move(j));
  }
  return {{"nodes", std::move(nodes)}};
}

inline Tree tree_from_json(const nlohmann::json& j) {
  Tree t;
  for (const auto& n : j.at("nodes")) {
    TreeNode node;
    node.cover = n.at("cover").get<double>();
    if (n.contains("feature")) {
      node.feature = n.at("feature").get<int>();
      node.threshold = detail::number_from(n.at("threshold"));
      node.default_left = n.at("default_left").get<bool>();
      node.left = n.at("left").get<int>();
      node.right = n.at("right").get<int>();
    } else {
      node.value = n.at("value").get<double>();
      if (n.contains("dist")) node.dist = n.at("dist").get<std::vector<double>>();
    }
    t.nodes.push_back(std::move(node));
  }
  const int n = static_cast<int>(t.nodes.size());
  for (const auto& node : t.nodes)
    if (!node.is_leaf() && (node.left <= 0 || node.left >= n || node.right <= 0 || node.right >= n))
      throw InvalidArgument("model JSON: child index out of range");
  return t;
}

inline nlohmann::json to_json(const EnsembleModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (std::size_t i = 0; i < m.trees.size(); ++i) {
    auto t = to_json(m.trees[i]);
    t["weight"] = m.weights[i];
    trees.push_back(std::move(t));
  }
  return {{"format", "cspread-model"},  {"version", kModelFormatVersion}, {"type", "ensemble"},
          {"kind", to_string(m.kind)},   {"spec", to_json(m.spec)},       {"n_features", m.n_features},
          {"n_classes", m.n_classes},    {"softmax", m.softmax},          {"base_score", m.base_score},
          {"trees", std::move(trees)}};
}

inline nlohmann::json to_json(const LinearModel& m) {
  return {{"format", "cspread-model"},      {"version", kModelFormatVersion}, {"type", "linear"},
          {"kind", to_string(m.kind)},       {"spec", to_json(m.spec)},       {"intercept", m.intercept},
          {"coefficients", m.coefficients}, {"lambda", m.lambda},            {"alpha", m.alpha},
          {"sweeps", m.sweeps}};
}

inline nlohmann::json to_json(const Model& m) {
  return std::visit([](const auto& x) { return to_json(x); }, m);
}

inline Model model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "cspread-model") throw InvalidArgument("not a cspread-model document");
  const int version = j.value("version", 0);
  if (version != kModelFormatVersion)
    throw InvalidArgument("unsupported model format version " + std::to_string(version));
  const auto type = j.at("type").get<std::string>();
  if (type == "ensemble") {
    EnsembleModel m;
    m.kind = parse_learner(j.at("kind").get<std::string>());
    m.spec = learner_spec_from_json(j.at("spec"));
    m.n_features = j.at("n_features").get<std::size_t>();
    m.n_classes = j.at("n_classes").get<int>();
    m.softmax = j.at("softmax").get<bool>();
    m.base_score = j.at("base_score").get<double>();
    for (const auto& t : j.at("trees")) {
      m.trees.push_back(tree_from_json(t));
      m.weights.push_back(t.at("weight").get<double>());
      for (const auto& n : m.trees.back().nodes)
        if (!n.is_leaf() && (n.feature < 0 || static_cast<std::size_t>(n.feature) >= m.n_features))
          throw InvalidArgument("model JSON: split feature out of range");
    }
    return m;
  }
  if (type == "linear") {
    LinearModel m;
    m.kind = parse_learner(j.at("kind").get<std::string>());
    m.spec = learner_spec_from_json(j.at("spec"));
    m.intercept = j.at("intercept").get<double>();
    m.coefficients = j.at("coefficients").get<std::vector<double>>();
    m.lambda = j.at("lambda").get<double>();
    m.alpha = j.at("alpha").get<double>();
    m.sweeps = j.value("sweeps", 0);
    return m;
  }
  throw InvalidArgument("unknown model type '" + type + "'");
}

inline void save_model(const Model& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << to_json(m).dump(1) << '\n';
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return model_from_json(nlohmann::json::parse(in));
}

}  // namespace cspread
