#include <benchmark/benchmark.h>

#include <vector>

#include "qirl/kernels.hpp"
#include "qirl/matching_trainer.hpp"
#include "qirl/revision.hpp"
#include "qirl/vqa.hpp"
#include "qirl/world.hpp"

namespace {

using namespace qirl;

struct Fixture {
  World world = build_world(WorldConfig{});
  DatasetSplit split = generate_split(world, SplitRole::TrainBiased, 256, 11);
  Reviser reviser = make_reviser(world, split, {});
  MatchingModel matcher = MatchingModel::init(world.dim(), world.dim(), 16, 0.1, 3);
  VQAClassifier vqa = VQAClassifier::init(world, 32, 0.1, 3);
  std::vector<Mat> words;
  std::vector<kernels::ScoreJob> jobs;
  TripletBatch batch;
  std::vector<std::vector<QIPair>> negatives;
  std::vector<VQASample> samples;
  VQAObjectiveWeights weights;
  std::vector<std::string> caption;
  std::vector<CandidateSentence> candidates;

  Fixture() {
    for (const auto& p : split.pairs) words.push_back(world.embed_tokens(p.question_tokens));
    for (std::size_t i = 0; i < split.pairs.size(); ++i) jobs.push_back({&split.pairs[i].regions, &words[i]});
    std::vector<const QIPair*> anchors;
    for (std::size_t i = 0; i < 32; ++i) anchors.push_back(&split.pairs[i]);
    batch = make_triplet_batch(world, anchors);
    for (const auto& p : split.pairs) negatives.push_back({generate_negative_pair(world, reviser, p)});
    samples = make_vqa_samples(vqa, split.pairs, negatives);
    weights = objective_weights(samples, VQATrainConfig{}, true);
    Scene scene;
    scene.objects = {{0, 1, 0}, {3, 2, 1}};
    caption = caption_scene(world, scene);
    candidates = enumerate_candidates(parse_caption(caption, reviser.lexicon), reviser.lexicon);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_PairScores(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::pair_scores(f.matcher, f.jobs));
}
void BM_PairScoresSerial(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::pair_scores_serial(f.matcher, f.jobs));
}
void BM_Triplet(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::triplet(f.matcher, f.batch, 0.2, true));
}
void BM_TripletSerial(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::triplet_serial(f.matcher, f.batch, 0.2, true));
}
void BM_VQAObjective(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::vqa_objective(f.vqa, f.samples, f.weights, true));
}
void BM_VQAObjectiveSerial(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::vqa_objective_serial(f.vqa, f.samples, f.weights, true));
}
void BM_ScoreCandidates(benchmark::State& state) {
  const auto& f = fixture();
  const auto& r = f.reviser;
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::score_candidates(f.caption, f.candidates, r.lm, r.weights, r.lexicon, r.semantics));
}
void BM_ScoreCandidatesSerial(benchmark::State& state) {
  const auto& f = fixture();
  const auto& r = f.reviser;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        kernels::score_candidates_serial(f.caption, f.candidates, r.lm, r.weights, r.lexicon, r.semantics));
}

BENCHMARK(BM_PairScores)->UseRealTime();
BENCHMARK(BM_PairScoresSerial)->UseRealTime();
BENCHMARK(BM_Triplet)->UseRealTime();
BENCHMARK(BM_TripletSerial)->UseRealTime();
BENCHMARK(BM_VQAObjective)->UseRealTime();
BENCHMARK(BM_VQAObjectiveSerial)->UseRealTime();
BENCHMARK(BM_ScoreCandidates)->UseRealTime();
BENCHMARK(BM_ScoreCandidatesSerial)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
