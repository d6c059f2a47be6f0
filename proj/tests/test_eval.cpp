#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qirl/errors.hpp"
#include "qirl/eval.hpp"
#include "qirl/world.hpp"

using namespace qirl;

namespace {

std::vector<std::string> votes(std::initializer_list<std::pair<const char*, int>> counts) {
  std::vector<std::string> out;
  for (const auto& [a, n] : counts)
    for (int i = 0; i < n; ++i) out.emplace_back(a);
  while (out.size() < 10) out.emplace_back("other");
  return out;
}

QIPair pair(const std::string& id, QuestionType t, std::vector<std::string> annotations) {
  QIPair p;
  p.pair_id = id;
  p.question_type = t;
  p.annotations = std::move(annotations);
  p.answer = p.annotations[0];
  return p;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("acc and acc_spe") {
  CHECK(acc("yes", votes({{"yes", 5}})) == 1.0);
  CHECK(acc("yes", votes({{"yes", 2}})) == doctest::Approx(2.0 / 3.0));
  CHECK(acc("no", votes({{"yes", 10}})) == 0.0);
  CHECK(acc(kAbstain, votes({{"yes", 10}})) == 0.0);
  CHECK(acc_spe(kAbstain, votes({{"yes", 10}})) == 1.0);
  for (int n = 0; n <= 10; ++n) {
    const auto a = votes({{"red", n}});
    CHECK(acc_spe("red", a) == acc("red", a));
  }
  CHECK_THROWS_AS(acc("yes", {"yes", "yes"}), ValidationError);
  CHECK_THROWS_AS(acc_spe("yes", std::vector<std::string>(11, "yes")), ValidationError);
}

TEST_CASE("summarize six hand-built pairs") {
  const std::vector<QIPair> pairs = {
      pair("p0", QuestionType::YesNo, votes({{"yes", 10}})),
      pair("p1", QuestionType::YesNo, votes({{"no", 2}, {"yes", 8}})),
      pair("p2", QuestionType::Num, votes({{"2", 1}, {"3", 9}})),
      pair("p3", QuestionType::Num, votes({{"4", 6}, {"1", 4}})),
      pair("p4", QuestionType::Others, votes({{"red", 3}, {"blue", 7}})),
      pair("p5", QuestionType::Others, votes({{"green", 10}})),
  };
  const std::vector<std::string> answers = {"yes", "no", "2", kAbstain, "blue", kAbstain};
  const auto r = summarize("sys", "hand", pairs, answers);
  r.validate();

  // per-pair oracle values
  const double a[] = {1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0, 1.0, 0.0};
  const double s[] = {1.0, 2.0 / 3.0, 1.0 / 3.0, 1.0, 1.0, 1.0};
  auto mean2 = [](double x, double y) { return (x + y) / 2.0; };
  CHECK(r.per_type.at("yes/no").acc == doctest::Approx(mean2(a[0], a[1])));
  CHECK(r.per_type.at("num").acc == doctest::Approx(mean2(a[2], a[3])));
  CHECK(r.per_type.at("num").acc_spe == doctest::Approx(mean2(s[2], s[3])));
  CHECK(r.per_type.at("others").acc_spe == doctest::Approx(mean2(s[4], s[5])));
  CHECK(r.per_type.at("others").abstention_rate == 0.5);
  double sum_a = 0, sum_s = 0;
  for (int i = 0; i < 6; ++i) sum_a += a[i], sum_s += s[i];
  CHECK(r.overall.acc == doctest::Approx(sum_a / 6.0).epsilon(1e-12));
  CHECK(r.overall.acc_spe == doctest::Approx(sum_s / 6.0).epsilon(1e-12));
  CHECK(r.overall.abstention_rate == doctest::Approx(2.0 / 6.0));
  CHECK(r.overall.count == 6);
  CHECK(r.overall.acc_spe > r.overall.acc);

  double weighted_acc = 0, weighted_spe = 0;
  std::size_t n = 0;
  for (const auto& [name, m] : r.per_type) {
    weighted_acc += m.acc * static_cast<double>(m.count);
    weighted_spe += m.acc_spe * static_cast<double>(m.count);
    n += m.count;
  }
  CHECK(std::abs(weighted_acc / static_cast<double>(n) - r.overall.acc) < 1e-12);
  CHECK(std::abs(weighted_spe / static_cast<double>(n) - r.overall.acc_spe) < 1e-12);
}

TEST_CASE("extreme answer sets") {
  const std::vector<QIPair> pairs = {
      pair("a", QuestionType::YesNo, votes({{"yes", 3}})),
      pair("b", QuestionType::Others, votes({{"red", 9}})),
  };
  const auto right = summarize("s", "x", pairs, {"yes", "red"});
  CHECK(right.overall.acc == 1.0);
  CHECK(right.overall.acc_spe == 1.0);
  CHECK(right.overall.abstention_rate == 0.0);

  const auto none = summarize("s", "x", pairs, {kAbstain, kAbstain});
  CHECK(none.overall.acc == 0.0);
  CHECK(none.overall.acc_spe == 1.0);
  CHECK(none.overall.abstention_rate == 1.0);

  CHECK_THROWS_AS(summarize("s", "x", {}, {}), ValidationError);
  CHECK_THROWS_AS(summarize("s", "x", pairs, {"yes"}), ValidationError);
}

TEST_CASE("evaluate_split agrees with per-pair predictions") {
  const auto world = build_world(WorldConfig{});
  const auto split = generate_split(world, SplitRole::TestShifted, 60, 3);
  const auto vqa = VQAClassifier::init(world, 8, 0.5, 5);
  System sys;
  sys.name = "bare";
  sys.world = &world;
  sys.vqa = &vqa;
  const auto r = evaluate_split(sys, "test", split.pairs, 2);
  double total = 0.0;
  for (const auto& p : split.pairs) total += acc(predict(vqa, p).answer, p.annotations);
  CHECK(r.overall.acc == doctest::Approx(total / 60.0).epsilon(1e-12));
  CHECK(r.overall.acc_spe == r.overall.acc);
  CHECK(r.overall.abstention_rate == 0.0);
  REQUIRE(r.series.size() == 2u);
  CHECK(r.series[0].pair_id == split.pairs[0].pair_id);
  double sum = 0.0;
  for (double x : r.series[0].probabilities) sum += x;
  CHECK(sum == doctest::Approx(1.0));
  CHECK_THROWS_AS(evaluate_split(sys, "test", {}), ValidationError);
}

TEST_CASE("report serialization") {
  const std::vector<QIPair> pairs = {
      pair("a", QuestionType::YesNo, votes({{"yes", 3}})),
      pair("b", QuestionType::Num, votes({{"2", 1}})),
      pair("c", QuestionType::Others, votes({{"red", 9}})),
  };
  auto r = summarize("nig_gate", "test", pairs, {"yes", "2", kAbstain});
  r.config_hash = "0123456789abcdef";
  r.seed = 42;
  r.series.push_back({"a", {"yes", "no"}, {0.1 / 3.0, 1.0 - 0.1 / 3.0}});

  CHECK(parse_report(report_json(r)) == r);
  CHECK(report_json(r) == report_json(r));
  const auto csv = report_csv(r);
  CHECK(csv.rfind("split,type,metric,value,count\n", 0) == 0);
  CHECK(csv.find("test,overall,acc_spe,") != std::string::npos);

  const auto dir = std::filesystem::temp_directory_path() / "qirl_test_eval";
  std::filesystem::create_directories(dir);
  const auto j1 = (dir / "r1.json").string(), c1 = (dir / "r1.csv").string();
  const auto j2 = (dir / "r2.json").string(), c2 = (dir / "r2.csv").string();
  emit_report(r, j1, c1);
  emit_report(r, j2, c2);
  CHECK(slurp(j1) == slurp(j2));
  CHECK(slurp(c1) == slurp(c2));
  CHECK(parse_report(slurp(j1)) == r);

  auto bad = r;
  bad.overall.acc = std::nan("");
  const auto jb = (dir / "bad.json").string();
  CHECK_THROWS_AS(emit_report(bad, jb, (dir / "bad.csv").string()), ValidationError);
  CHECK_FALSE(std::filesystem::exists(jb));
  CHECK_THROWS_AS(emit_report(r, (dir / "missing" / "x.json").string(), c1), IoError);
  std::filesystem::remove_all(dir);
}
