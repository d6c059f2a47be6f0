#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "qirl/errors.hpp"
#include "qirl/kernels.hpp"
#include "qirl/revision.hpp"
#include "qirl/rng.hpp"
#include "qirl/world.hpp"

using namespace qirl;

namespace {

using Tokens = std::vector<std::string>;

std::string join(const Tokens& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) s += (i ? " " : "") + t[i];
  return s;
}

Tokens words(const std::string& s) {
  std::istringstream in(s);
  Tokens out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

struct Toy {
  Tokens dets, adjs, nouns;
  Lexicon lexicon() const {
    Lexicon lex;
    for (const auto& d : dets) lex.add(Tag::D, d);
    for (const auto& a : adjs) lex.add(Tag::JJ, a);
    for (const auto& n : nouns) lex.add(Tag::N, n);
    lex.add(Tag::CC, "and");
    return lex;
  }
};

// An object phrase with optional determiner and adjective.
struct Obj {
  std::string det, adj, noun;
  bool removed = false;
};

Tokens render(const std::vector<Obj>& objs) {
  Tokens out;
  for (const auto& o : objs) {
    if (o.removed) continue;
    if (!out.empty()) out.push_back("and");
    if (!o.det.empty()) out.push_back(o.det);
    if (!o.adj.empty()) out.push_back(o.adj);
    out.push_back(o.noun);
  }
  return out;
}

// Independent enumerator over (object, field) sites.
std::set<std::string> brute_force(const std::vector<Obj>& orig, const Toy& toy) {
  struct Op {
    std::size_t obj;
    int field;  // -1 whole phrase, 0 det, 1 adj, 2 noun
    std::string value;
    bool remove;
  };
  std::vector<Op> ops;
  for (std::size_t k = 0; k < orig.size(); ++k) {
    if (orig.size() > 1) ops.push_back({k, -1, "", true});
    const auto& o = orig[k];
    if (!o.det.empty()) {
      ops.push_back({k, 0, "", true});
      for (const auto& d : toy.dets)
        if (d != o.det) ops.push_back({k, 0, d, false});
    }
    if (!o.adj.empty()) {
      ops.push_back({k, 1, "", true});
      for (const auto& a : toy.adjs)
        if (a != o.adj) ops.push_back({k, 1, a, false});
    }
    for (const auto& n : toy.nouns)
      if (n != o.noun) ops.push_back({k, 2, n, false});
  }
  auto apply = [](std::vector<Obj>& objs, const Op& op) {
    auto& o = objs[op.obj];
    if (op.field == -1) o.removed = true;
    if (op.field == 0) o.det = op.value;
    if (op.field == 1) o.adj = op.value;
    if (op.field == 2) o.noun = op.value;
  };
  auto conflict = [](const Op& a, const Op& b) {
    return a.obj == b.obj && (a.field == b.field || a.field == -1 || b.field == -1);
  };
  std::set<std::string> out;
  const auto original = join(render(orig));
  auto add = [&](const std::vector<Obj>& objs) {
    const auto t = render(objs);
    if (!t.empty() && join(t) != original) out.insert(join(t));
  };
  for (std::size_t a = 0; a < ops.size(); ++a) {
    auto one = orig;
    apply(one, ops[a]);
    add(one);
    for (std::size_t b = a + 1; b < ops.size(); ++b) {
      if (conflict(ops[a], ops[b])) continue;
      auto two = one;
      apply(two, ops[b]);
      add(two);
    }
  }
  return out;
}

std::set<std::string> enumerated(const Tokens& caption, const Lexicon& lex) {
  std::set<std::string> out;
  for (const auto& c : enumerate_candidates(parse_caption(caption, lex), lex)) out.insert(join(c.tokens));
  return out;
}

// Add-one bigram probabilities computed from raw counts.
struct BigramOracle {
  std::map<std::string, std::map<std::string, double>> counts;
  std::set<std::string> vocab;
  explicit BigramOracle(const std::vector<Tokens>& corpus) {
    for (const auto& s : corpus) {
      std::string prev = "<s>";
      for (const auto& w : s) {
        vocab.insert(w);
        counts[prev][w] += 1;
        prev = w;
      }
      counts[prev]["</s>"] += 1;
    }
    vocab.insert("</s>");
    vocab.insert("<unk>");
  }
  double prob(const std::string& prev, std::string w) const {
    if (!vocab.count(w)) w = "<unk>";
    double row = 0.0, c = 0.0;
    if (auto it = counts.find(prev); it != counts.end()) {
      for (const auto& [k, v] : it->second) row += v;
      if (auto jt = it->second.find(w); jt != it->second.end()) c = jt->second;
    }
    return (c + 1.0) / (row + static_cast<double>(vocab.size()));
  }
  double fluency(const Tokens& t) const {
    double s = 0.0;
    std::string prev = "<s>";
    for (const auto& w : t) {
      s += std::log(prob(prev, w));
      prev = vocab.count(w) ? w : "<unk>";
    }
    s += std::log(prob(prev, "</s>"));
    return std::exp(s / static_cast<double>(t.size() + 1));
  }
};

}  // namespace

TEST_CASE("parse_caption") {
  const Toy toy{{"1", "2"}, {"black", "white"}, {"cat", "dog"}};
  const auto lex = toy.lexicon();
  const auto tree = parse_caption(words("1 black cat"), lex);
  CHECK(tree.tag == Tag::NP);
  REQUIRE(tree.children.size() == 3u);
  CHECK(tree.children[0].tag == Tag::D);
  CHECK(tree.children[1].tag == Tag::JJ);
  CHECK(tree.children[2].tag == Tag::N);

  // every 2-object template
  std::vector<Tokens> phrases;
  for (const std::string d : {"", "1", "2"})
    for (const std::string a : {"", "black", "white"})
      for (const auto& n : toy.nouns) phrases.push_back(render({{d, a, n}}));
  int checked = 0;
  for (const auto& p : phrases) {
    CHECK(parse_caption(p, lex).leaves() == p);
    for (const auto& q : phrases) {
      Tokens s = p;
      s.push_back("and");
      s.insert(s.end(), q.begin(), q.end());
      const auto t = parse_caption(s, lex);
      CHECK(t.tag == Tag::S);
      REQUIRE(t.children.size() == 3u);
      CHECK(t.children[0].tag == Tag::NP);
      CHECK(t.children[1].tag == Tag::CC);
      CHECK(t.children[2].tag == Tag::NP);
      CHECK(t.leaves() == s);
      ++checked;
    }
  }
  CHECK(checked == 18 * 18);

  try {
    parse_caption(words("1 black zebra"), lex);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.token_index() == 2u);
  }
  CHECK_THROWS_AS(parse_caption(words("1 black"), lex), ParseError);
  CHECK_THROWS_AS(parse_caption(words("cat and"), lex), ParseError);
}

TEST_CASE("enumerate_candidates") {
  const Toy toy{{"1", "2"}, {"black", "white"}, {"cat", "dog"}};
  const auto lex = toy.lexicon();
  const auto got = enumerated(words("1 black cat"), lex);
  CHECK(got.count("1 white cat"));
  CHECK(got.count("1 cat"));
  CHECK_FALSE(got.count("1 black cat"));
  // singles (c-1)+(k-1)+(q-1)+2 removals, doubles over disjoint fields
  const int c = 2, k = 2, q = 2;
  const int singles = (c - 1) + (k - 1) + (q - 1) + 2;
  const int doubles = q * c + q * (k - 1) + c * (k - 1);
  CHECK(got.size() == static_cast<std::size_t>(singles + doubles));
  CHECK(got == brute_force({{"1", "black", "cat"}}, toy));

  const Toy big{{"1", "2", "3"}, {"black", "white", "red"}, {"cat", "dog", "cow", "bus"}};
  const auto blex = big.lexicon();
  const std::vector<std::vector<Obj>> captions = {
      {{"1", "black", "cat"}},
      {{"", "", "dog"}},
      {{"2", "", "cow"}},
      {{"1", "black", "cat"}, {"3", "red", "bus"}},
      {{"", "white", "dog"}, {"2", "", "cow"}},
  };
  for (const auto& objs : captions) {
    const auto caption = render(objs);
    const auto cands = enumerate_candidates(parse_caption(caption, blex), blex);
    std::set<std::string> uniq;
    for (const auto& cand : cands) {
      CHECK(cand.tokens != caption);
      CHECK(uniq.insert(join(cand.tokens)).second);
      CHECK_FALSE(cand.edits.empty());
      CHECK(cand.edits.size() <= 2u);
    }
    CHECK(uniq == brute_force(objs, big));
  }

  Lexicon no_adj;
  no_adj.add(Tag::D, "1");
  no_adj.add(Tag::N, "cat");
  no_adj.add(Tag::N, "dog");
  CHECK_THROWS_AS(enumerate_candidates(parse_caption(words("1 cat"), no_adj), no_adj), ValidationError);
}

TEST_CASE("revision score") {
  const RevisionWeights w{0.3, 1.0};
  CHECK(revision_score(0.5, 0.8, 1.0, w) == doctest::Approx(std::pow(0.5, 0.3) / 0.8).epsilon(1e-15));
  CHECK(revision_score(0.5, 0.8, 1.0, w) == doctest::Approx(1.0154).epsilon(1e-4));
  // f_SeI < 1 sits in the denominator, so a larger beta raises the score
  CHECK(revision_score(0.5, 0.8, 1.0, {0.3, 2.0}) > revision_score(0.5, 0.8, 1.0, w));
  CHECK(revision_score(0.5, 0.8, 1.0, {0.3, 2.0}) == doctest::Approx(std::pow(0.5, 0.3) / 0.64).epsilon(1e-15));
  CHECK(semantic_integrity(1.0) == 1.0);
  CHECK(semantic_integrity(-1.0) == 1e-6);

  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double lm = 0.01 + 0.99 * rng.uniform();
    const double syi = rng.bernoulli(0.5) ? 1.0 : 0.5;
    const double a = 1e-6 + rng.uniform(), b = 1e-6 + rng.uniform();
    const RevisionWeights rw{0.05 + rng.uniform(), 0.05 + 2.0 * rng.uniform()};
    const double lo = std::min(a, b), hi = std::max(a, b);
    if (lo == hi) continue;
    CHECK(revision_score(lm, hi, syi, rw) < revision_score(lm, lo, syi, rw));
    CHECK(revision_score(lm, lo, syi, rw) > 0.0);
  }
  CHECK_THROWS_AS(RevisionWeights({0.0, 1.0}).validate(), ConfigError);
}

TEST_CASE("NGramLM add-one bigram") {
  const std::vector<Tokens> corpus = {words("1 black cat"), words("2 white dog"), words("1 black cat and 2 white dog")};
  NGramLM lm(2);
  lm.train(corpus);
  const BigramOracle oracle(corpus);
  for (const auto& prev : {"<s>", "1", "black", "cat", "and", "dog"}) {
    double sum = 0.0;
    for (const auto& w : lm.vocabulary()) {
      const double p = lm.prob({prev}, w);
      CHECK(p > 0.0);
      CHECK(p <= 1.0);
      CHECK(p == doctest::Approx(oracle.prob(prev, w)).epsilon(1e-12));
      sum += p;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(lm.fluency(words("1 black cat")) == doctest::Approx(oracle.fluency(words("1 black cat"))).epsilon(1e-12));
}

TEST_CASE("select_negative_caption") {
  SUBCASE("uniform LM picks the concept substitution") {
    Lexicon lex;
    lex.add(Tag::D, "1");
    lex.add(Tag::JJ, "black");
    lex.add(Tag::N, "cat");
    lex.add(Tag::N, "dog");
    lex.add(Tag::CC, "and");
    SemanticSpace sem;
    sem.dim = 2;
    sem.concept_vectors["cat"] = Vec::Unit(2, 0);
    sem.concept_vectors["dog"] = Vec::Unit(2, 1);
    const NGramLM lm(2);
    const auto best = select_negative_caption(words("1 black cat"), lm, lex, sem, {});
    CHECK(join(best.tokens) == "1 black dog");
    REQUIRE(best.edits.size() == 1u);
    CHECK(best.edits[0].kind == Edit::Kind::Substitution);
  }

  SUBCASE("equals exhaustive search") {
    const Toy toy{{"1", "2", "3"}, {"black", "white", "red"}, {"cat", "dog", "cow", "bus"}};
    const auto lex = toy.lexicon();
    const std::vector<Tokens> corpus = {words("1 black cat"), words("2 white dog and 3 red cow"), words("1 red bus"),
                                        words("3 black dog and 1 white cat"), words("2 red cow")};
    NGramLM lm(2);
    lm.train(corpus);
    const BigramOracle oracle(corpus);
    SemanticSpace sem;
    sem.dim = 3;
    Rng rng(3);
    for (const auto& n : toy.nouns) sem.concept_vectors[n] = Vec::NullaryExpr(3, [&] { return rng.normal(); });
    auto mean_vec = [&](const Tokens& t) {
      Vec v = Vec::Zero(3);
      int k = 0;
      for (const auto& w : t)
        if (sem.concept_vectors.count(w)) v += sem.concept_vectors.at(w), ++k;
      return k ? Vec(v / k) : v;
    };
    const RevisionWeights rw{0.3, 1.0};
    const std::vector<std::vector<Obj>> captions = {
        {{"1", "black", "cat"}}, {{"2", "", "dog"}}, {{"1", "black", "cat"}, {"3", "red", "bus"}}};
    for (const auto& objs : captions) {
      const auto orig = render(objs);
      const auto a = mean_vec(orig);
      double best = -1.0;
      Tokens arg;
      for (const auto& s : brute_force(objs, toy)) {
        const auto t = words(s);
        const auto b = mean_vec(t);
        const double cosv = a.norm() * b.norm() > 0 ? a.dot(b) / (a.norm() * b.norm()) : 0.0;
        const double sei = std::max(1e-6, (cosv + 1.0) / 2.0);
        const bool same_root = (std::count(t.begin(), t.end(), "and") > 0) == (objs.size() > 1);
        const double f = std::pow(oracle.fluency(t), rw.alpha) / (std::pow(sei, rw.beta) * (same_root ? 1.0 : 0.5));
        if (f > best * (1 + 1e-12) || (std::abs(f - best) <= 1e-12 * best && t < arg)) {
          best = f;
          arg = t;
        }
      }
      const auto got = select_negative_caption(orig, lm, lex, sem, rw);
      CHECK(join(got.tokens) == join(arg));
      CHECK(got.score == doctest::Approx(best).epsilon(1e-10));
      for (const auto& c : kernels::score_candidates(orig, enumerate_candidates(parse_caption(orig, lex), lex), lm, rw,
                                                     lex, sem))
        CHECK(got.score >= c.score);
      const auto ranked = ranked_negative_captions(orig, lm, lex, sem, rw, 3);
      CHECK(ranked.front().tokens == got.tokens);
      for (std::size_t i = 1; i < ranked.size(); ++i) CHECK(ranked[i - 1].score >= ranked[i].score);
    }
  }
}

TEST_CASE("negative pairs and leak rates") {
  const auto w = build_world(WorldConfig{});
  const auto split = generate_split(w, SplitRole::TrainBiased, 1000, 21);
  const auto reviser = make_reviser(w, split, {});

  SUBCASE("substitution removes the focus concept") {
    QIPair p = split.pairs.front();
    p.focus_concept = *w.concept_index("cat");
    p.scene.objects = {{p.focus_concept, 0, 0}};
    p.question_tokens = question_tokens(w, QuestionType::YesNo, p.focus_concept, 0);
    const auto neg = generate_negative_pair(w, reviser, p);
    CHECK(neg.relevance == 0);
    CHECK_FALSE(neg.scene.contains(p.focus_concept));
    CHECK(neg.question_tokens == p.question_tokens);
    CHECK(neg.annotations == p.annotations);
    CHECK(neg.regions.rows() == static_cast<Eigen::Index>(neg.scene.objects.size()));
    auto bad = p;
    bad.relevance = 0;
    CHECK_THROWS_AS(generate_negative_pair(w, reviser, bad), ValidationError);
  }

  SUBCASE("NIG leaks at most 1% and less than random substitution") {
    std::vector<QIPair> nig, rnd;
    Rng rng(4);
    double expected_random = 0.0;
    for (std::size_t i = 0; i < split.pairs.size(); ++i) {
      const auto negs = generate_negative_pairs(w, reviser, split.pairs[i], 2);
      REQUIRE(!negs.empty());
      CHECK(negs.front().scene == generate_negative_pair(w, reviser, split.pairs[i]).scene);
      if (negs.size() > 1) CHECK(negs[0].pair_id != negs[1].pair_id);
      nig.push_back(negs.front());
      rnd.push_back(random_negative_pair(split.pairs, i, rng));
      CHECK(rnd.back().relevance == 0);
      std::size_t holders = 0;
      for (std::size_t j = 0; j < split.pairs.size(); ++j)
        holders += j != i && split.pairs[j].scene.contains(split.pairs[i].focus_concept);
      expected_random += static_cast<double>(holders) / static_cast<double>(split.pairs.size() - 1);
    }
    expected_random /= static_cast<double>(split.pairs.size());
    const double nig_leak = relevance_leak_rate(nig), rnd_leak = relevance_leak_rate(rnd);
    CHECK(nig_leak <= 0.01);
    CHECK(nig_leak < rnd_leak);
    // binomial standard error at n = 1000 is about 0.01
    CHECK(std::abs(rnd_leak - expected_random) < 0.035);
  }

  SUBCASE("random substitution") {
    const std::vector<QIPair> two = {split.pairs[0], split.pairs[1]};
    Rng rng(1);
    for (int i = 0; i < 10; ++i) {
      const auto n = random_negative_pair(two, 0, rng);
      CHECK(n.regions == two[1].regions);
      CHECK(n.relevance == 0);
      CHECK(n.question_tokens == two[0].question_tokens);
    }
    CHECK_THROWS_AS(random_negative_pair({split.pairs[0]}, 0, rng), ValidationError);
  }
}

TEST_CASE("relevance_leak_rate counts") {
  const auto w = build_world(WorldConfig{});
  auto base = generate_split(w, SplitRole::TrainBiased, 10, 2).pairs;
  for (auto& p : base) p.relevance = 0;
  auto all = base;
  CHECK(relevance_leak_rate(all) == 1.0);
  auto none = base;
  for (auto& p : none) {
    p.scene.objects.resize(1);
    p.focus_concept = (p.scene.objects[0].concept_id + 1) % 12;
  }
  CHECK(relevance_leak_rate(none) == 0.0);
  auto mixed = none;
  for (int i = 0; i < 3; ++i) mixed[static_cast<std::size_t>(i)] = base[static_cast<std::size_t>(i)];
  CHECK(relevance_leak_rate(mixed) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK_THROWS_AS(relevance_leak_rate({}), ValidationError);
}

TEST_CASE("lexicon file") {
  std::istringstream in("# comment\nD 1\nD 2\nJJ black white\nJJ white black\nN cat\nN dog\n");
  const auto lex = parse_lexicon(in);
  CHECK(lex.alternatives(Tag::JJ, "black") == Tokens{"white"});
  CHECK(lex.alternatives(Tag::N, "cat") == Tokens{"dog"});
  CHECK(lex.tag_of("and") == Tag::CC);
  std::istringstream bad("XX foo\n");
  CHECK_THROWS_AS(parse_lexicon(bad), ValidationError);
}
