#include "qirl/dataset_io.hpp"

#include <sstream>

#include <json.hpp>

#include "qirl/errors.hpp"
#include "qirl/io.hpp"

namespace qirl {

using nlohmann::json;

namespace {

json pair_json(const QIPair& p) {
  json regions = json::array();
  for (Eigen::Index r = 0; r < p.regions.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < p.regions.cols(); ++c) row.push_back(p.regions(r, c));
    regions.push_back(std::move(row));
  }
  json scene = json::array();
  for (const auto& o : p.scene.objects) {
    json jo{{"concept", o.concept_id}, {"count", o.count}};
    jo["color"] = o.color ? json(*o.color) : json(nullptr);
    scene.push_back(std::move(jo));
  }
  return json{{"pair_id", p.pair_id},
              {"regions", std::move(regions)},
              {"question_tokens", p.question_tokens},
              {"question_type", to_string(p.question_type)},
              {"annotations", p.annotations},
              {"answer", p.answer},
              {"focus_concept", p.focus_concept},
              {"scene", std::move(scene)},
              {"relevance", p.relevance}};
}

QIPair pair_from(const json& j) {
  QIPair p;
  p.pair_id = j.at("pair_id").get<std::string>();
  const auto& rows = j.at("regions");
  if (!rows.is_array() || rows.empty()) throw ValidationError(p.pair_id + ": no regions");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows[0].size());
  p.regions.resize(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != d) throw ValidationError(p.pair_id + ": ragged regions");
    for (Eigen::Index c = 0; c < d; ++c) p.regions(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  p.question_tokens = j.at("question_tokens").get<std::vector<std::string>>();
  p.question_type = question_type_from_string(j.at("question_type").get<std::string>());
  p.annotations = j.at("annotations").get<std::vector<std::string>>();
  p.answer = j.at("answer").get<std::string>();
  p.focus_concept = j.at("focus_concept").get<int>();
  for (const auto& jo : j.at("scene")) {
    SceneObject o;
    o.concept_id = jo.at("concept").get<int>();
    o.count = jo.at("count").get<int>();
    if (!jo.at("color").is_null()) o.color = jo.at("color").get<int>();
    p.scene.objects.push_back(o);
  }
  p.relevance = j.at("relevance").get<int>();
  if (p.relevance != 0 && p.relevance != 1) throw ValidationError(p.pair_id + ": relevance must be 0 or 1");
  return p;
}

}  // namespace

std::string serialize_split(const DatasetSplit& split, const std::string& config_hash) {
  json prior = json::object();
  for (const auto& [t, v] : split.answer_prior) prior[to_string(t)] = v;
  json header{{"format", "qirl-dataset"},
              {"version", kDatasetFormatVersion},
              {"config_hash", config_hash},
              {"role", to_string(split.role)},
              {"size", split.pairs.size()},
              {"answer_prior", prior}};
  std::string out = header.dump() + "\n";
  for (const auto& p : split.pairs) out += pair_json(p).dump() + "\n";
  return out;
}

DatasetSplit parse_split(const std::string& text, std::string* config_hash) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("dataset file is empty");
  DatasetSplit split;
  std::size_t expected = 0;
  try {
    const auto h = json::parse(line);
    if (h.at("format").get<std::string>() != "qirl-dataset") throw ValidationError("not a dataset file");
    if (h.at("version").get<int>() != kDatasetFormatVersion)
      throw ValidationError("unsupported dataset version " + std::to_string(h.at("version").get<int>()));
    if (config_hash) *config_hash = h.at("config_hash").get<std::string>();
    split.role = split_role_from_string(h.at("role").get<std::string>());
    expected = h.at("size").get<std::size_t>();
    for (const auto& [k, v] : h.at("answer_prior").items())
      split.answer_prior[question_type_from_string(k)] = v.get<std::vector<double>>();
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        split.pairs.push_back(pair_from(json::parse(line)));
      } catch (const json::exception& e) {
        throw ValidationError("dataset line " + std::to_string(lineno) + ": " + e.what());
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("dataset header: ") + e.what());
  }
  if (split.pairs.size() != expected)
    throw ValidationError("dataset holds " + std::to_string(split.pairs.size()) + " pairs, header says " +
                          std::to_string(expected));
  return split;
}

void save_split(const std::string& path, const DatasetSplit& split, const std::string& config_hash) {
  write_file_atomic(path, serialize_split(split, config_hash));
}

DatasetSplit load_split(const std::string& path, std::string* config_hash) {
  return parse_split(read_file(path), config_hash);
}

}  // namespace qirl
