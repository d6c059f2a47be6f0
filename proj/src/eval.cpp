#include "qirl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "qirl/errors.hpp"
#include "qirl/io.hpp"
#include "qirl/matching_trainer.hpp"

namespace qirl {

using nlohmann::json;

namespace {

void check_annotations(const std::vector<std::string>& annotations) {
  if (annotations.size() != static_cast<std::size_t>(kAnnotatorCount))
    throw ValidationError("expected " + std::to_string(kAnnotatorCount) + " annotations, got " +
                          std::to_string(annotations.size()));
}

struct Accumulator {
  std::size_t n = 0;
  double acc = 0.0, acc_spe = 0.0;
  std::size_t abstained = 0;
  TypeMetrics done() const {
    TypeMetrics m;
    m.count = n;
    if (n) {
      m.acc = acc / static_cast<double>(n);
      m.acc_spe = acc_spe / static_cast<double>(n);
      m.abstention_rate = static_cast<double>(abstained) / static_cast<double>(n);
    }
    return m;
  }
};

void check_metrics(const TypeMetrics& m, const std::string& where) {
  for (double v : {m.acc, m.acc_spe, m.abstention_rate}) {
    if (!std::isfinite(v)) throw ValidationError(where + ": non-finite metric");
    if (v < 0.0 || v > 1.0) throw ValidationError(where + ": metric outside [0, 1]");
  }
  if (m.acc_spe < m.acc - 1e-12) throw ValidationError(where + ": acc_spe below acc");
}

json metrics_json(const TypeMetrics& m) {
  return json{{"count", m.count}, {"acc", m.acc}, {"acc_spe", m.acc_spe}, {"abstention_rate", m.abstention_rate}};
}

TypeMetrics metrics_from(const json& j) {
  TypeMetrics m;
  m.count = j.at("count").get<std::size_t>();
  m.acc = j.at("acc").get<double>();
  m.acc_spe = j.at("acc_spe").get<double>();
  m.abstention_rate = j.at("abstention_rate").get<double>();
  return m;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double acc(const std::string& answer, const std::vector<std::string>& annotations) {
  check_annotations(annotations);
  if (answer == kAbstain) return 0.0;
  const auto votes = std::count(annotations.begin(), annotations.end(), answer);
  return std::min(1.0, static_cast<double>(votes) / 3.0);
}

double acc_spe(const std::string& answer, const std::vector<std::string>& annotations) {
  check_annotations(annotations);
  if (answer == kAbstain) return 1.0;
  return acc(answer, annotations);
}

void EvalReport::validate() const {
  check_metrics(overall, "overall");
  for (const auto& [name, m] : per_type) check_metrics(m, name);
  for (const auto& s : series) {
    if (s.answers.size() != s.probabilities.size()) throw ValidationError("series length mismatch");
    for (double p : s.probabilities)
      if (!std::isfinite(p)) throw ValidationError("non-finite probability in series " + s.pair_id);
  }
}

std::string selective_answer(const CalibratedGate& gate, const MatchingModel& matcher, const VQAClassifier& vqa,
                             const World& world, const QIPair& pair) {
  const double s = similarity01(matcher, pair.regions, world.embed_tokens(pair.question_tokens));
  if (decide(gate, s).action == GateAction::Abstain) return kAbstain;
  return predict(vqa, pair).answer;
}

EvalReport summarize(const std::string& system, const std::string& split, const std::vector<QIPair>& pairs,
                     const std::vector<std::string>& answers) {
  if (pairs.empty()) throw ValidationError("cannot evaluate an empty split");
  if (answers.size() != pairs.size()) throw ValidationError("one answer per pair expected");
  std::map<QuestionType, Accumulator> by_type;
  Accumulator all;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double a = acc(answers[i], pairs[i].annotations);
    const double b = acc_spe(answers[i], pairs[i].annotations);
    const bool abst = answers[i] == kAbstain;
    for (auto* acc_ : {&by_type[pairs[i].question_type], &all}) {
      ++acc_->n;
      acc_->acc += a;
      acc_->acc_spe += b;
      acc_->abstained += abst;
    }
  }
  EvalReport r;
  r.system = system;
  r.split = split;
  for (auto t : kQuestionTypes) r.per_type[to_string(t)] = by_type[t].done();
  r.overall = all.done();
  return r;
}

EvalReport evaluate_split(const System& system, const std::string& split_name, const std::vector<QIPair>& pairs,
                          std::size_t series_pairs) {
  if (!system.world || !system.vqa) throw ValidationError("system needs a world and a VQA model");
  if (pairs.empty()) throw ValidationError("cannot evaluate an empty split");
  const bool gated = system.gate && system.matcher;
  std::vector<double> scores;
  if (gated) scores = score01_batch(*system.matcher, *system.world, pairs);
  std::vector<std::string> answers(pairs.size());
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(pairs.size()); ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (gated && decide(*system.gate, scores[k]).action == GateAction::Abstain)
      answers[k] = kAbstain;
    else
      answers[k] = predict(*system.vqa, pairs[k]).answer;
  }
  auto r = summarize(system.name, split_name, pairs, answers);
  for (std::size_t i = 0; i < std::min(series_pairs, pairs.size()); ++i) {
    const auto p = predict(*system.vqa, pairs[i], ScoreMode::Softmax);
    AnswerSeries s;
    s.pair_id = pairs[i].pair_id;
    s.answers = system.vqa->answers;
    s.probabilities.assign(p.scores.data(), p.scores.data() + p.scores.size());
    r.series.push_back(std::move(s));
  }
  return r;
}

std::string report_json(const EvalReport& r) {
  r.validate();
  json j;
  j["system"] = r.system;
  j["split"] = r.split;
  j["config_hash"] = r.config_hash;
  j["seed"] = r.seed;
  json pt = json::object();
  for (const auto& [name, m] : r.per_type) pt[name] = metrics_json(m);
  j["per_type"] = pt;
  j["overall"] = metrics_json(r.overall);
  json series = json::array();
  for (const auto& s : r.series)
    series.push_back({{"pair_id", s.pair_id}, {"answers", s.answers}, {"probabilities", s.probabilities}});
  j["series"] = series;
  return j.dump(2) + "\n";
}

std::string report_csv(const EvalReport& r) {
  r.validate();
  std::ostringstream out;
  out << "split,type,metric,value,count\n";
  auto rows = [&](const std::string& type, const TypeMetrics& m) {
    out << r.split << ',' << type << ",acc," << fmt(m.acc) << ',' << m.count << '\n';
    out << r.split << ',' << type << ",acc_spe," << fmt(m.acc_spe) << ',' << m.count << '\n';
    out << r.split << ',' << type << ",abstention_rate," << fmt(m.abstention_rate) << ',' << m.count << '\n';
  };
  for (auto t : kQuestionTypes) {
    auto it = r.per_type.find(to_string(t));
    if (it != r.per_type.end()) rows(it->first, it->second);
  }
  rows("overall", r.overall);
  return out.str();
}

EvalReport parse_report(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("report is not valid JSON: ") + e.what());
  }
  try {
    EvalReport r;
    r.system = j.at("system").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [name, m] : j.at("per_type").items()) r.per_type[name] = metrics_from(m);
    r.overall = metrics_from(j.at("overall"));
    for (const auto& s : j.at("series"))
      r.series.push_back({s.at("pair_id").get<std::string>(), s.at("answers").get<std::vector<std::string>>(),
                          s.at("probabilities").get<std::vector<double>>()});
    r.validate();
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
}

void emit_report(const EvalReport& report, const std::string& json_path, const std::string& csv_path) {
  const auto j = report_json(report);
  const auto c = report_csv(report);
  write_file_atomic(json_path, j);
  write_file_atomic(csv_path, c);
}

}  // namespace qirl
