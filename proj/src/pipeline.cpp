#include "qirl/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "qirl/dataset_io.hpp"
#include "qirl/errors.hpp"
#include "qirl/gate.hpp"
#include "qirl/io.hpp"
#include "qirl/rng.hpp"

namespace qirl {

using nlohmann::json;

namespace {

constexpr std::uint64_t kTrainStream = 0x7472;
constexpr std::uint64_t kCalibrationStream = 0x6361;
constexpr std::uint64_t kTestStream = 0x7465;
constexpr std::uint64_t kRandomStream = 0x726e;

std::vector<std::vector<QIPair>> nig_groups(const World& world, const Reviser& reviser,
                                            const std::vector<QIPair>& pairs, std::size_t k) {
  std::vector<std::vector<QIPair>> out(pairs.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (long long i = 0; i < static_cast<long long>(pairs.size()); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    out[idx] = generate_negative_pairs(world, reviser, pairs[idx], k);
  }
  return out;
}

std::vector<std::vector<QIPair>> random_groups(const std::vector<QIPair>& pairs, std::size_t k,
                                               std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<QIPair>> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      auto neg = random_negative_pair(pairs, i, rng);
      if (j) neg.pair_id += std::to_string(j);
      out[i].push_back(std::move(neg));
    }
  }
  return out;
}

std::vector<QIPair> firsts(const std::vector<std::vector<QIPair>>& groups) {
  std::vector<QIPair> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    if (g.empty()) throw ValidationError("pair without a generated negative");
    out.push_back(g.front());
  }
  return out;
}

DatasetSplit as_split(const DatasetSplit& like, std::vector<QIPair> pairs) {
  DatasetSplit s;
  s.role = like.role;
  s.answer_prior = like.answer_prior;
  s.pairs = std::move(pairs);
  return s;
}

std::vector<std::vector<QIPair>> regroup(const std::vector<QIPair>& originals, std::vector<QIPair> negatives,
                                         const std::string& what) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < originals.size(); ++i) index.emplace(originals[i].pair_id, i);
  std::vector<std::vector<QIPair>> out(originals.size());
  for (auto& n : negatives) {
    const auto cut = n.pair_id.rfind('/');
    const auto it = cut == std::string::npos ? index.end() : index.find(n.pair_id.substr(0, cut));
    if (it == index.end()) throw ValidationError(what + ": negative " + n.pair_id + " has no original");
    out[it->second].push_back(std::move(n));
  }
  return out;
}

void expect_hash(const std::string& got, const std::string& want, const std::string& path, bool force) {
  if (got != want && !force)
    throw ValidationError(path + " was produced by config " + got + ", current config is " + want +
                          " (use --force to override)");
}

DatasetSplit load_checked(const std::string& path, const std::string& hash, bool force) {
  std::string stored;
  auto s = load_split(path, &stored);
  expect_hash(stored, hash, path, force);
  return s;
}

Checkpoint load_checked_checkpoint(const std::string& path, const World& world, const std::string& hash,
                                   bool force) {
  auto c = load_checkpoint(path);
  expect_hash(c.config_hash, hash, path, force);
  check_dimensions(c, world);
  return c;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double abstention(const CalibratedGate& gate, const std::vector<double>& scores) {
  std::size_t n = 0;
  for (double s : scores) n += decide(gate, s).action == GateAction::Abstain;
  return static_cast<double>(n) / static_cast<double>(scores.size());
}

RunResult evaluate_systems(const RunConfig& cfg, const Corpus& corpus,
                           const std::map<std::string, const VQAClassifier*>& vqa, const MatchingModel* matcher,
                           const CalibratedGate* gate, const std::vector<std::string>& systems) {
  RunResult res;
  const auto hash = config_hash(cfg);
  const auto mixed = mixed_test(corpus);
  for (const auto& name : systems) {
    System sys;
    sys.name = name;
    sys.world = &corpus.world;
    const bool gated = name == "nig_gate";
    const auto it = vqa.find(gated ? "nig" : name);
    if (it == vqa.end() || !it->second) throw ValidationError("no VQA model for system " + name);
    sys.vqa = it->second;
    if (gated) {
      if (!matcher || !gate) throw ValidationError("nig_gate needs a calibrated matcher");
      sys.matcher = matcher;
      sys.gate = gate;
    }
    for (const auto* split : {"test", "test_mixed"}) {
      auto r = evaluate_split(sys, split, split == std::string("test") ? corpus.test.pairs : mixed);
      r.config_hash = hash;
      r.seed = cfg.seed;
      res.reports.push_back(std::move(r));
    }
  }
  auto& s = res.summary;
  s.nig_leak_rate = relevance_leak_rate(flatten(corpus.train_nig));
  s.random_leak_rate = relevance_leak_rate(flatten(corpus.train_random));
  if (matcher && gate) {
    s.matcher_separation = score_separation(*matcher, corpus.world, corpus.calibration.pairs, corpus.calibration_nig);
    s.gamma = gate->gamma;
    s.test_relevant_abstention = abstention(*gate, score01_batch(*matcher, corpus.world, corpus.test.pairs));
    s.test_irrelevant_abstention = abstention(*gate, score01_batch(*matcher, corpus.world, corpus.test_nig));
  }
  return res;
}

void write_reports(const OutputTree& out, const RunResult& res) {
  ensure_dir(out.root + "/reports");
  for (const auto& r : res.reports)
    emit_report(r, out.report_path(r.system, r.split, "json"), out.report_path(r.system, r.split, "csv"));
}

std::string gate_json(const CalibratedGate& g, const std::string& hash) {
  json j;
  j["config_hash"] = hash;
  j["gamma"] = g.gamma;
  j["policy"] = to_string(g.policy);
  j["false_reject"] = g.report.false_reject;
  j["false_accept"] = g.report.false_accept;
  j["relevant_histogram"] = g.report.relevant.bins;
  j["irrelevant_histogram"] = g.report.irrelevant.bins;
  return j.dump(2) + "\n";
}

}  // namespace

NegativesSource system_negatives(const std::string& system) {
  if (system == "baseline") return NegativesSource::None;
  if (system == "random") return NegativesSource::RandomImage;
  if (system == "nig") return NegativesSource::NIG;
  throw ValidationError("unknown VQA system '" + system + "' (expected baseline, random or nig)");
}

const EvalReport& RunResult::report(const std::string& system, const std::string& split) const {
  for (const auto& r : reports)
    if (r.system == system && r.split == split) return r;
  throw ValidationError("no report for " + system + " on " + split);
}

Reviser corpus_reviser(const RunConfig& cfg, const World& world, const DatasetSplit& train) {
  return make_reviser(world, train, cfg.revision);
}

Corpus make_corpus(const RunConfig& cfg) {
  cfg.validate();
  Corpus c{build_world(cfg.world), {}, {}, {}, {}, {}, {}, {}};
  c.train = generate_split(c.world, SplitRole::TrainBiased, cfg.sizes.train, derive_seed(cfg.seed, kTrainStream));
  c.calibration =
      generate_split(c.world, SplitRole::TrainBiased, cfg.sizes.calibration, derive_seed(cfg.seed, kCalibrationStream));
  c.test = generate_split(c.world, SplitRole::TestShifted, cfg.sizes.test, derive_seed(cfg.seed, kTestStream));
  const auto reviser = corpus_reviser(cfg, c.world, c.train);
  const auto k = static_cast<std::size_t>(cfg.vqa.negative_ratio);
  c.train_nig = nig_groups(c.world, reviser, c.train.pairs, k);
  c.train_random = random_groups(c.train.pairs, k, derive_seed(cfg.seed, kRandomStream));
  c.calibration_nig = firsts(nig_groups(c.world, reviser, c.calibration.pairs, 1));
  c.test_nig = firsts(nig_groups(c.world, reviser, c.test.pairs, 1));
  return c;
}

std::vector<QIPair> flatten(const std::vector<std::vector<QIPair>>& groups) {
  std::vector<QIPair> out;
  for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
  return out;
}

std::vector<QIPair> mixed_test(const Corpus& corpus) {
  auto out = corpus.test.pairs;
  out.insert(out.end(), corpus.test_nig.begin(), corpus.test_nig.end());
  return out;
}

FitResult train_matcher(const RunConfig& cfg, const Corpus& corpus) {
  const auto& t = cfg.matcher.train;
  auto init = MatchingModel::init(corpus.world.dim(), corpus.world.dim(), t.hidden_dim, t.init_noise, t.seed,
                                  cfg.matcher.lambda1, cfg.matcher.lambda2);
  return fit(std::move(init), corpus.world, corpus.train.pairs, firsts(corpus.train_nig), t, corpus.calibration.pairs,
             corpus.calibration_nig);
}

CalibratedGate calibrate_gate(const RunConfig& cfg, const Corpus& corpus, const MatchingModel& matcher) {
  return calibrate(score01_batch(matcher, corpus.world, corpus.calibration.pairs),
                   score01_batch(matcher, corpus.world, corpus.calibration_nig), cfg.gate.policy, cfg.gate.gamma);
}

VQATrainResult train_vqa(const RunConfig& cfg, const Corpus& corpus, NegativesSource source) {
  auto init = VQAClassifier::init(corpus.world, cfg.vqa.hidden_dim, cfg.vqa.init_scale, cfg.vqa.seed);
  switch (source) {
    case NegativesSource::None:
      return train_debiased(std::move(init), corpus.train.pairs, {}, cfg.vqa);
    case NegativesSource::RandomImage:
      return train_debiased(std::move(init), corpus.train.pairs, corpus.train_random, cfg.vqa);
    case NegativesSource::NIG:
      return train_debiased(std::move(init), corpus.train.pairs, corpus.train_nig, cfg.vqa);
  }
  throw ValidationError("unknown negatives source");
}

RunResult run_in_memory(const RunConfig& cfg) {
  const auto corpus = make_corpus(cfg);
  const auto matcher = train_matcher(cfg, corpus);
  const auto gate = calibrate_gate(cfg, corpus, matcher.model);
  const auto base = train_vqa(cfg, corpus, NegativesSource::None);
  const auto rnd = train_vqa(cfg, corpus, NegativesSource::RandomImage);
  const auto nig = train_vqa(cfg, corpus, NegativesSource::NIG);
  const std::map<std::string, const VQAClassifier*> vqa = {
      {"baseline", &base.model}, {"random", &rnd.model}, {"nig", &nig.model}};
  return evaluate_systems(cfg, corpus, vqa, &matcher.model, &gate, {std::begin(kSystems), std::end(kSystems)});
}

void stage_world_gen(const RunConfig& cfg, const OutputTree& out) {
  const auto hash = config_hash(cfg);
  const auto c = make_corpus(cfg);
  ensure_dir(out.root);
  ensure_dir(out.world_dir());
  auto stored = to_json(cfg);
  stored.erase("output_dir");
  write_file_atomic(out.root + "/config.json", stored.dump(2) + "\n");
  save_split(out.split_path("train"), c.train, hash);
  save_split(out.split_path("calibration"), c.calibration, hash);
  save_split(out.split_path("test"), c.test, hash);
  save_split(out.split_path("train_nig"), as_split(c.train, flatten(c.train_nig)), hash);
  save_split(out.split_path("train_random"), as_split(c.train, flatten(c.train_random)), hash);
  save_split(out.split_path("calibration_nig"), as_split(c.calibration, c.calibration_nig), hash);
  save_split(out.split_path("test_nig"), as_split(c.test, c.test_nig), hash);
}

Corpus load_corpus(const RunConfig& cfg, const OutputTree& out, bool force) {
  const auto hash = config_hash(cfg);
  Corpus c{build_world(cfg.world), {}, {}, {}, {}, {}, {}, {}};
  auto load = [&](const std::string& name) { return load_checked(out.split_path(name), hash, force); };
  c.train = load("train");
  c.calibration = load("calibration");
  c.test = load("test");
  c.train_nig = regroup(c.train.pairs, load("train_nig").pairs, "train_nig");
  c.train_random = regroup(c.train.pairs, load("train_random").pairs, "train_random");
  c.calibration_nig = load("calibration_nig").pairs;
  c.test_nig = load("test_nig").pairs;
  return c;
}

void stage_train_matcher(const RunConfig& cfg, const OutputTree& out, bool force) {
  const auto corpus = load_corpus(cfg, out, force);
  const auto fitted = train_matcher(cfg, corpus);
  Checkpoint ckpt;
  ckpt.config_hash = config_hash(cfg);
  ckpt.matcher = fitted.model;
  ckpt.lm = corpus_reviser(cfg, corpus.world, corpus.train).lm;
  ckpt.gate.gamma = cfg.gate.gamma;
  ensure_dir(out.root + "/checkpoints");
  ensure_dir(out.root + "/traces");
  save_checkpoint(out.checkpoint_path("isi"), ckpt);
  write_file_atomic(out.trace_path("matcher"), trace_csv(fitted.loss_trace));
}

void stage_calibrate(const RunConfig& cfg, const OutputTree& out, bool force) {
  const auto corpus = load_corpus(cfg, out, force);
  const auto hash = config_hash(cfg);
  auto ckpt = load_checked_checkpoint(out.checkpoint_path("isi"), corpus.world, hash, force);
  if (!ckpt.has_matcher()) throw ValidationError(out.checkpoint_path("isi") + " holds no matcher");
  ckpt.gate = calibrate_gate(cfg, corpus, ckpt.matcher);
  save_checkpoint(out.checkpoint_path("isi"), ckpt);
  write_file_atomic(out.root + "/gate.json", gate_json(ckpt.gate, hash));
}

void stage_train_vqa(const RunConfig& cfg, const OutputTree& out, const std::string& system, bool force) {
  const auto source = system_negatives(system);
  const auto corpus = load_corpus(cfg, out, force);
  const auto hash = config_hash(cfg);
  const auto trained = train_vqa(cfg, corpus, source);
  Checkpoint ckpt;
  ckpt.config_hash = hash;
  ckpt.vqa = trained.model;
  ckpt.lm = corpus_reviser(cfg, corpus.world, corpus.train).lm;
  ckpt.gate.gamma = cfg.gate.gamma;
  ensure_dir(out.root + "/checkpoints");
  ensure_dir(out.root + "/traces");
  save_checkpoint(out.checkpoint_path(system), ckpt);
  write_file_atomic(out.trace_path("vqa_" + system), trace_csv(trained.trace));
}

RunResult stage_evaluate(const RunConfig& cfg, const OutputTree& out, const std::vector<std::string>& systems,
                         bool force) {
  const auto corpus = load_corpus(cfg, out, force);
  const auto hash = config_hash(cfg);
  std::map<std::string, Checkpoint> ckpts;
  bool gated = false;
  for (const auto& s : systems) {
    if (s == "nig_gate") gated = true;
    const auto base = s == "nig_gate" ? std::string("nig") : s;
    system_negatives(base);
    if (!ckpts.count(base))
      ckpts.emplace(base, load_checked_checkpoint(out.checkpoint_path(base), corpus.world, hash, force));
  }
  std::map<std::string, const VQAClassifier*> vqa;
  for (const auto& [name, c] : ckpts) {
    if (!c.has_vqa()) throw ValidationError(out.checkpoint_path(name) + " holds no VQA model");
    vqa[name] = &c.vqa;
  }
  Checkpoint isi;
  if (gated || std::ifstream(out.checkpoint_path("isi")).good())
    isi = load_checked_checkpoint(out.checkpoint_path("isi"), corpus.world, hash, force);
  const bool have_isi = isi.has_matcher();
  auto res = evaluate_systems(cfg, corpus, vqa, have_isi ? &isi.matcher : nullptr, have_isi ? &isi.gate : nullptr,
                              systems);
  write_reports(out, res);
  write_file_atomic(out.root + "/summary.json", summary_json(res.summary, hash));
  return res;
}

RunResult run_pipeline(const RunConfig& cfg, const OutputTree& out) {
  stage_world_gen(cfg, out);
  stage_train_matcher(cfg, out, false);
  stage_calibrate(cfg, out, false);
  for (const auto* s : {"baseline", "random", "nig"}) stage_train_vqa(cfg, out, s, false);
  return stage_evaluate(cfg, out, {std::begin(kSystems), std::end(kSystems)}, false);
}

std::string trace_csv(const std::vector<double>& trace) {
  std::ostringstream o;
  o << "epoch,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) o << i << ',' << fmt(trace[i]) << '\n';
  return o.str();
}

std::string summary_json(const RunSummary& s, const std::string& config_hash) {
  json j;
  j["config_hash"] = config_hash;
  j["nig_leak_rate"] = s.nig_leak_rate;
  j["random_leak_rate"] = s.random_leak_rate;
  j["matcher_separation"] = s.matcher_separation;
  j["gamma"] = s.gamma;
  j["test_relevant_abstention"] = s.test_relevant_abstention;
  j["test_irrelevant_abstention"] = s.test_irrelevant_abstention;
  return j.dump(2) + "\n";
}

}  // namespace qirl
