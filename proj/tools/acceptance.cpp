#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "qirl/gradcheck.hpp"
#include "qirl/io.hpp"
#include "qirl/matching.hpp"
#include "qirl/pipeline.hpp"
#include "qirl/revision.hpp"
#include "qirl/rng.hpp"

namespace fs = std::filesystem;
using namespace qirl;

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr int kGradInstances = 100;
constexpr double kGradSeconds = 30.0;
constexpr double kLseSlack = 1e-9;
constexpr int kLseInputs = 1000;
constexpr double kNigOverBaseline = 0.10;
constexpr double kNigOverRandom = 0.02;
constexpr double kPipelineSeconds = 300.0;
constexpr double kIrrelevantAbstention = 0.90;
constexpr double kRelevantAbstention = 0.10;
constexpr double kNigLeak = 0.01;
constexpr std::size_t kLeakPairs = 1000;
constexpr int kScoreTriples = 1000;
const std::vector<std::uint64_t> kSeeds = {1, 2, 3, 4, 5};

std::map<int, std::pair<bool, std::string>> verdicts;

void verdict(int n, bool ok, const std::string& detail) { verdicts[n] = {ok, detail}; }

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void gradient_fidelity() {
  GradCheckOptions opt;
  opt.instances = kGradInstances;
  opt.tolerance = kGradTolerance;
  const auto t0 = std::chrono::steady_clock::now();
  const auto tr = gradcheck_triplet(opt);
  const auto vq = gradcheck_vqa(opt);
  const double secs = seconds_since(t0);
  const bool ok = tr.checked >= kGradInstances && vq.checked >= kGradInstances && tr.max_rel_error < kGradTolerance &&
                  vq.max_rel_error < kGradTolerance && secs < kGradSeconds;
  verdict(1, ok,
          fmt("triplet max rel err %.2e, vqa max rel err %.2e, %.0f instances each, %.1fs", tr.max_rel_error,
              vq.max_rel_error, static_cast<double>(std::min(tr.checked, vq.checked)), secs));
}

void lse_bounds() {
  Rng rng(derive_seed(2, 0x6c7365));
  int bad = 0;
  double worst = 0.0;
  for (int t = 0; t < kLseInputs; ++t) {
    const int n = 1 + static_cast<int>(rng.index(12));
    const double l2 = 0.05 + 30.0 * rng.uniform();
    const double scale = t % 2 ? 1.0 : 50.0;
    Vec r(n);
    for (int i = 0; i < n; ++i) r(i) = scale * (2.0 * rng.uniform() - 1.0);
    const double s = pooled_similarity(r, l2);
    const double lo = r.maxCoeff(), hi = lo + std::log(static_cast<double>(n)) / l2;
    worst = std::max({worst, lo - s, s - hi});
    if (s < lo - kLseSlack || s > hi + kLseSlack) ++bad;
  }
  verdict(2, bad == 0, fmt("%.0f of %.0f inputs out of bounds, worst violation %.1e", bad, kLseInputs, worst));
}

void metric_dominance(const std::vector<const EvalReport*>& reports) {
  int bad = 0;
  for (const auto* r : reports) {
    auto check = [&](const TypeMetrics& m) {
      if (m.count == 0) return;
      const bool dominated = m.acc_spe >= m.acc;
      const bool equal_iff = (m.acc_spe == m.acc) == (m.abstention_rate == 0.0);
      if (!dominated || !equal_iff) ++bad;
    };
    check(r->overall);
    for (const auto& [type, m] : r->per_type) check(m);
  }
  verdict(3, bad == 0, fmt("%.0f violations over %.0f reports (overall and per type)", bad,
                           static_cast<double>(reports.size())));
}

void bias_shift(const std::vector<RunResult>& runs, const std::vector<double>& secs) {
  std::map<std::string, std::vector<double>> acc;
  for (const auto& r : runs)
    for (const auto* s : {"baseline", "random", "nig"}) acc[s].push_back(r.report(s, "test").overall.acc);
  const double base = median(acc["baseline"]), rnd = median(acc["random"]), nig = median(acc["nig"]);
  const double slowest = *std::max_element(secs.begin(), secs.end());
  const bool ok = base < rnd && rnd < nig && nig - base >= kNigOverBaseline && nig - rnd >= kNigOverRandom &&
                  slowest < kPipelineSeconds;
  verdict(4, ok,
          fmt("median test acc baseline %.4f, random %.4f, nig %.4f; slowest run %.1fs", base, rnd, nig, slowest));
}

void isi_separation(const std::vector<RunResult>& runs) {
  bool ok = true;
  double worst_irr = 1.0, worst_rel = 0.0, worst_gain = 1.0;
  for (const auto& r : runs) {
    const double gain =
        r.report("nig_gate", "test_mixed").overall.acc_spe - r.report("nig", "test_mixed").overall.acc_spe;
    worst_irr = std::min(worst_irr, r.summary.test_irrelevant_abstention);
    worst_rel = std::max(worst_rel, r.summary.test_relevant_abstention);
    worst_gain = std::min(worst_gain, gain);
    ok = ok && r.summary.test_irrelevant_abstention >= kIrrelevantAbstention &&
         r.summary.test_relevant_abstention <= kRelevantAbstention && gain > 0.0;
  }
  verdict(5, ok,
          fmt("worst seed: abstain c=0 %.4f, abstain c=1 %.4f, gate acc_spe gain %.4f", worst_irr, worst_rel,
              worst_gain));
}

void leak_rates() {
  bool ok = true;
  double worst_nig = 0.0, min_gap = 1.0;
  for (auto seed : kSeeds) {
    RunConfig cfg;
    cfg.seed = seed;
    cfg.apply_seed();
    const auto world = build_world(cfg.world);
    const auto split = generate_split(world, SplitRole::TrainBiased, kLeakPairs, derive_seed(seed, 0x6c6b));
    const auto reviser = corpus_reviser(cfg, world, split);
    std::vector<QIPair> nig, rnd;
    Rng rng(derive_seed(seed, 0x726e));
    for (std::size_t i = 0; i < split.pairs.size(); ++i) {
      nig.push_back(generate_negative_pair(world, reviser, split.pairs[i]));
      rnd.push_back(random_negative_pair(split.pairs, i, rng));
    }
    const double ln = relevance_leak_rate(nig), lr = relevance_leak_rate(rnd);
    worst_nig = std::max(worst_nig, ln);
    min_gap = std::min(min_gap, lr - ln);
    ok = ok && ln <= kNigLeak && ln < lr;
  }
  verdict(6, ok, fmt("worst nig leak %.4f, smallest random-minus-nig gap %.4f over 5 seeds", worst_nig, min_gap));
}

void revision_behavior() {
  Rng rng(derive_seed(7, 0x6571));
  const RevisionWeights w;
  int non_decreasing = 0;
  for (int t = 0; t < kScoreTriples; ++t) {
    const double lm = 1e-3 + rng.uniform(), syi = rng.bernoulli(0.5) ? 1.0 : 0.5;
    double a = 1e-6 + rng.uniform(), b = 1e-6 + rng.uniform();
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (!(revision_score(lm, a, syi, w) > revision_score(lm, b, syi, w))) ++non_decreasing;
  }

  int mismatches = 0, cases = 0;
  const std::vector<std::string> dets = {"1", "2", "3", "4"}, adjs = {"black", "white", "red", "green"},
                                 nouns = {"cat", "dog", "cow", "bus", "cup"};
  for (int toy = 0; toy < 20; ++toy) {
    Lexicon lex;
    const std::size_t nd = 1 + rng.index(dets.size()), na = 1 + rng.index(adjs.size()),
                      nn = 2 + rng.index(nouns.size() - 1);
    for (std::size_t i = 0; i < nd; ++i) lex.add(Tag::D, dets[i]);
    for (std::size_t i = 0; i < na; ++i) lex.add(Tag::JJ, adjs[i]);
    for (std::size_t i = 0; i < nn; ++i) lex.add(Tag::N, nouns[i]);
    lex.add(Tag::CC, "and");
    auto phrase = [&] {
      std::vector<std::string> p = {dets[rng.index(nd)]};
      if (rng.bernoulli(0.7)) p.push_back(adjs[rng.index(na)]);
      p.push_back(nouns[rng.index(nn)]);
      return p;
    };
    std::vector<std::vector<std::string>> corpus;
    for (int i = 0; i < 12; ++i) {
      auto c = phrase();
      if (rng.bernoulli(0.4)) {
        c.push_back("and");
        for (const auto& x : phrase()) c.push_back(x);
      }
      corpus.push_back(c);
    }
    NGramLM lm(2);
    lm.train(corpus);
    SemanticSpace sem;
    sem.dim = 4;
    for (std::size_t i = 0; i < nn; ++i) sem.concept_vectors[nouns[i]] = Vec::NullaryExpr(4, [&] { return rng.normal(); });
    const RevisionWeights rw{0.1 + rng.uniform(), 0.5 + 2.0 * rng.uniform()};
    for (const auto& caption : corpus) {
      auto cands = enumerate_candidates(parse_caption(caption, lex), lex);
      const CandidateSentence* best = nullptr;
      std::vector<CandidateSentence> scored;
      for (auto& c : cands) scored.push_back(score_candidate(caption, c, lm, rw, lex, sem));
      for (const auto& c : scored)
        if (!best || c.score > best->score || (c.score == best->score && c.tokens < best->tokens)) best = &c;
      const auto got = select_negative_caption(caption, lm, lex, sem, rw);
      ++cases;
      if (!best || got.tokens != best->tokens || got.score != best->score) ++mismatches;
    }
  }
  verdict(7, non_decreasing == 0 && mismatches == 0,
          fmt("%.0f of %.0f triples not strictly decreasing in f_SeI; %.0f of %.0f toy selections differ from "
              "exhaustive search",
              non_decreasing, kScoreTriples, mismatches, cases));
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_file(e.path().string());
  return files;
}

void determinism(std::vector<RunResult>& keep) {
  const auto base = fs::temp_directory_path() / "qirl_acceptance";
  fs::remove_all(base);
  RunConfig cfg;
  cfg.seed = 7;
  cfg.apply_seed();
  const int threads_before = omp_get_max_threads();
  std::vector<std::map<std::string, std::string>> trees;
  for (int threads : {1, 4, 1}) {
    omp_set_num_threads(threads);
    const auto dir = base / ("t" + std::to_string(threads) + "_" + std::to_string(trees.size()));
    keep.push_back(run_pipeline(cfg, OutputTree{dir.string()}));
    trees.push_back(read_tree(dir));
  }
  omp_set_num_threads(threads_before);
  fs::remove_all(base);
  std::size_t reports = 0, checkpoints = 0;
  for (const auto& [name, bytes] : trees[0]) {
    reports += name.rfind("reports/", 0) == 0;
    checkpoints += name.rfind("checkpoints/", 0) == 0;
  }
  const bool ok = trees[0] == trees[1] && trees[0] == trees[2] && reports > 0 && checkpoints > 0;
  verdict(8, ok,
          fmt("3 pipeline runs (threads 1, 4, 1): %.0f files incl. %.0f reports and %.0f checkpoints, ",
              static_cast<double>(trees[0].size()), static_cast<double>(reports), static_cast<double>(checkpoints)) +
              (ok ? "byte-identical" : "differ"));
}

}  // namespace

int main() {
  gradient_fidelity();
  lse_bounds();

  std::vector<RunResult> runs;
  std::vector<double> secs;
  for (auto seed : kSeeds) {
    RunConfig cfg;
    cfg.seed = seed;
    cfg.apply_seed();
    const auto t0 = std::chrono::steady_clock::now();
    runs.push_back(run_in_memory(cfg));
    secs.push_back(seconds_since(t0));
    const auto& r = runs.back();
    std::printf("  seed %llu: test acc baseline %.4f random %.4f nig %.4f | mixed acc_spe nig %.4f gate %.4f | %.1fs\n",
                static_cast<unsigned long long>(seed), r.report("baseline", "test").overall.acc,
                r.report("random", "test").overall.acc, r.report("nig", "test").overall.acc,
                r.report("nig", "test_mixed").overall.acc_spe, r.report("nig_gate", "test_mixed").overall.acc_spe,
                secs.back());
    std::fflush(stdout);
  }

  std::vector<RunResult> pipeline_runs;
  determinism(pipeline_runs);

  std::vector<const EvalReport*> reports;
  for (const auto* group : {&runs, &pipeline_runs})
    for (const auto& r : *group)
      for (const auto& rep : r.reports) reports.push_back(&rep);
  metric_dominance(reports);
  bias_shift(runs, secs);
  isi_separation(runs);
  leak_rates();
  revision_behavior();

  int failures = 0;
  for (const auto& [n, v] : verdicts) {
    std::printf("criterion %d: %s  %s\n", n, v.first ? "PASS" : "FAIL", v.second.c_str());
    failures += !v.first;
  }
  std::printf("%d of %zu criteria failed\n", failures, verdicts.size());
  return failures == 0 ? 0 : 1;
}
