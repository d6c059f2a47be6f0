#include <omp.h>

#include <cstdio>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qirl/config.hpp"
#include "qirl/errors.hpp"
#include "qirl/gradcheck.hpp"
#include "qirl/pipeline.hpp"
#include "qirl/revision.hpp"
#include "qirl/rng.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
  int threads = 0;
  bool force = false;
};

qirl::RunConfig resolve(const Common& c) {
  qirl::RunConfig cfg = c.config_path.empty() ? qirl::RunConfig{} : qirl::load_run_config(c.config_path);
  if (c.seed_given) cfg.seed = c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  cfg.apply_seed();
  cfg.validate();
  return cfg;
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string join(const std::vector<std::string>& v, const char* sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

void print_result(const qirl::RunResult& r) {
  for (const auto& rep : r.reports)
    std::printf("%-9s %-10s acc %.4f acc_spe %.4f abstain %.4f\n", rep.system.c_str(), rep.split.c_str(),
                rep.overall.acc, rep.overall.acc_spe, rep.overall.abstention_rate);
  const auto& s = r.summary;
  std::printf("leak nig %.4f random %.4f | gamma %.4f | abstain c=1 %.4f c=0 %.4f\n", s.nig_leak_rate,
              s.random_leak_rate, s.gamma, s.test_relevant_abstention, s.test_irrelevant_abstention);
}

int run_revise(const qirl::RunConfig& cfg, const std::string& caption, const std::string& lexicon_path,
               std::size_t top) {
  const auto world = qirl::build_world(cfg.world);
  const auto train = qirl::generate_split(world, qirl::SplitRole::TrainBiased, cfg.sizes.train,
                                          qirl::derive_seed(cfg.seed, 0x7472));
  auto reviser = qirl::corpus_reviser(cfg, world, train);
  if (!lexicon_path.empty()) reviser.lexicon = qirl::load_lexicon(lexicon_path);
  const auto ranked = qirl::ranked_negative_captions(split_words(caption), reviser.lm, reviser.lexicon,
                                                     reviser.semantics, reviser.weights, top);
  std::printf("rank\tscore\tf_lm\tf_sei\tf_syi\tedits\tcandidate\n");
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& c = ranked[i];
    std::vector<std::string> edits;
    for (const auto& e : c.edits) edits.push_back(e.describe());
    std::printf("%zu\t%.6f\t%.6f\t%.6f\t%.1f\t%s\t%s\n", i + 1, c.score, c.f_lm, c.f_sei, c.f_syi,
                join(edits, ";").c_str(), join(c.tokens).c_str());
  }
  return 0;
}

int run_gradcheck(int instances) {
  qirl::GradCheckOptions opt;
  opt.instances = instances;
  bool ok = true;
  for (const auto& r : {qirl::gradcheck_triplet(opt), qirl::gradcheck_vqa(opt)}) {
    std::printf("%-8s checked %d skipped %d max_rel_error %.3e tolerance %.0e %.2fs %s\n", r.name.c_str(), r.checked,
                r.skipped, r.max_rel_error, r.tolerance, r.seconds, r.passed() ? "PASS" : "FAIL");
    ok = ok && r.passed();
  }
  return ok ? 0 : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Question-image relevance learning on a synthetic concept world"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--config", common.config_path, "Run configuration (JSON)");
  app.add_option_function<std::uint64_t>(
      "--seed",
      [&](const std::uint64_t& s) {
        common.seed = s;
        common.seed_given = true;
      },
      "Run seed");
  app.add_option("--out", common.out, "Output directory");
  app.add_option("--threads", common.threads, "Worker thread cap")->check(CLI::PositiveNumber);
  app.add_flag("--force", common.force, "Accept inputs produced by a different config");

  auto* world_gen = app.add_subcommand("world-gen", "Generate splits and negatives");
  auto* train_matcher = app.add_subcommand("train-matcher", "Train the relevance scorer");
  auto* calibrate = app.add_subcommand("calibrate", "Calibrate the abstention threshold");
  auto* train_vqa = app.add_subcommand("train-vqa", "Train VQA models");
  std::string vqa_system = "all";
  train_vqa->add_option("--system", vqa_system, "baseline, random, nig or all")
      ->check(CLI::IsMember({"baseline", "random", "nig", "all"}));
  auto* evaluate = app.add_subcommand("evaluate", "Write evaluation reports");
  std::vector<std::string> eval_systems(std::begin(qirl::kSystems), std::end(qirl::kSystems));
  evaluate->add_option("--system", eval_systems, "Systems to evaluate")
      ->check(CLI::IsMember({"baseline", "random", "nig", "nig_gate"}));
  auto* revise = app.add_subcommand("revise", "Score revisions of a caption");
  std::string caption, lexicon_path;
  std::size_t top = std::numeric_limits<std::size_t>::max();
  revise->add_option("--caption", caption, "Caption to revise")->required();
  revise->add_option("--lexicon", lexicon_path, "Lexicon file");
  revise->add_option("--top", top, "Print only the best N candidates");
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  int instances = 100;
  gradcheck->add_option("--instances", instances, "Random instances per objective")->check(CLI::PositiveNumber);
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  try {
    if (common.threads > 0) omp_set_num_threads(common.threads);
    if (gradcheck->parsed()) return run_gradcheck(instances);
    const auto cfg = resolve(common);
    const qirl::OutputTree out{cfg.output_dir};
    if (world_gen->parsed()) {
      qirl::stage_world_gen(cfg, out);
    } else if (train_matcher->parsed()) {
      qirl::stage_train_matcher(cfg, out, common.force);
    } else if (calibrate->parsed()) {
      qirl::stage_calibrate(cfg, out, common.force);
    } else if (train_vqa->parsed()) {
      if (vqa_system == "all") {
        for (const auto* s : {"baseline", "random", "nig"}) qirl::stage_train_vqa(cfg, out, s, common.force);
      } else {
        qirl::stage_train_vqa(cfg, out, vqa_system, common.force);
      }
    } else if (evaluate->parsed()) {
      print_result(qirl::stage_evaluate(cfg, out, eval_systems, common.force));
    } else if (revise->parsed()) {
      return run_revise(cfg, caption, lexicon_path, top);
    } else if (pipeline->parsed()) {
      print_result(qirl::run_pipeline(cfg, out));
    }
    return 0;
  } catch (const qirl::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
