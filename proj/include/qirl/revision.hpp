#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "qirl/linalg.hpp"
#include "qirl/rng.hpp"
#include "qirl/world.hpp"

namespace qirl {

enum class Tag { S, NP, VP, CC, PRP, VBD, ADJP, JJ, N, D };
const char* to_string(Tag t);
std::optional<Tag> tag_from_string(const std::string& s);

struct ParseNode {
  Tag tag = Tag::S;
  std::string token;  // leaves only
  std::vector<ParseNode> children;

  bool is_leaf() const { return children.empty(); }
  std::vector<std::string> leaves() const;
  const ParseNode& at(const std::vector<int>& path) const;
};
using ParseTree = ParseNode;

// Tagged word classes with optional substitution sets. When an entry lists
// antonyms, substitutions of that value are restricted to them; otherwise any
// other value of the same tag may be substituted.
class Lexicon {
 public:
  void add(Tag tag, const std::string& value, std::vector<std::string> antonyms = {});
  std::optional<Tag> tag_of(const std::string& token) const;
  const std::vector<std::string>& values(Tag tag) const;
  std::vector<std::string> alternatives(Tag tag, const std::string& value) const;
  bool has_class(Tag tag) const;

 private:
  std::map<Tag, std::vector<std::string>> values_;
  std::unordered_map<std::string, Tag> tag_of_;
  std::unordered_map<std::string, std::vector<std::string>> antonyms_;
};

Lexicon lexicon_from_world(const World& world);
// "tag value [antonyms...]" per line; '#' starts a comment.
Lexicon parse_lexicon(std::istream& in);
Lexicon load_lexicon(const std::string& path);

// Throws ParseError carrying the offending token index.
ParseTree parse_caption(const std::vector<std::string>& tokens, const Lexicon& lexicon);

struct Edit {
  enum class Kind { Removal, Substitution };
  Kind kind = Kind::Removal;
  std::vector<int> site;     // child-index path from the root
  std::string replacement;   // substitutions only
  std::string describe() const;
  bool operator==(const Edit&) const = default;
};

struct CandidateSentence {
  std::vector<std::string> tokens;
  std::vector<Edit> edits;
  double f_lm = 0.0;
  double f_sei = 0.0;
  double f_syi = 0.0;
  double score = 0.0;
};

struct RevisionWeights {
  double alpha = 0.3;
  double beta = 1.0;
  void validate() const;
};

// Order-n language model with add-one smoothing.
class NGramLM {
 public:
  static constexpr const char* kBos = "<s>";
  static constexpr const char* kEos = "</s>";
  static constexpr const char* kUnk = "<unk>";

  explicit NGramLM(int order = 2);

  void train(const std::vector<std::vector<std::string>>& sentences);

  int order() const { return order_; }
  // Predictable vocabulary: observed words plus </s> and <unk>.
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  double prob(const std::vector<std::string>& context, const std::string& word) const;
  // Geometric mean of per-token probabilities, </s> included.
  double fluency(const std::vector<std::string>& tokens) const;

  // Count tables keyed by space-joined context, for checkpointing.
  using Counts = std::map<std::string, std::map<std::string, std::uint64_t>>;
  Counts counts() const;
  void restore(int order, std::vector<std::string> vocab, const Counts& counts);
  bool operator==(const NGramLM&) const = default;

 private:
  struct Row {
    std::vector<std::uint64_t> counts;  // dense over vocab_
    std::uint64_t total = 0;
    bool operator==(const Row&) const = default;
  };

  int id_of(const std::string& w) const;  // <unk> id for unseen words
  int bos_id() const { return static_cast<int>(vocab_.size()); }
  std::uint64_t push_context(std::uint64_t key, int id) const;
  std::uint64_t initial_context() const;
  double prob_ids(std::uint64_t context_key, int word) const;
  void index_vocabulary();

  int order_;
  std::vector<std::string> vocab_;  // sorted
  std::unordered_map<std::string, int> ids_;
  std::unordered_map<std::uint64_t, Row> rows_;
};

// Concept-word embeddings used by the semantic-integrity term.
struct SemanticSpace {
  std::unordered_map<std::string, Vec> concept_vectors;
  static SemanticSpace from_world(const World& world);
  // Mean of concept vectors found in the sentence (zero vector if none).
  Vec sentence_vector(const std::vector<std::string>& tokens, int dim) const;
  int dim = 0;
};

// f = f_LM^alpha / (f_SeI^beta * f_SyI)
double revision_score(double f_lm, double f_sei, double f_syi, const RevisionWeights& w);
// Cosine in [-1, 1] mapped to (0, 1].
double semantic_integrity(double cosine);

// Scores candidates against one original sentence; the original's semantic
// vector and root tag are computed once.
class CandidateScorer {
 public:
  CandidateScorer(const std::vector<std::string>& orig, const NGramLM& lm, const RevisionWeights& weights,
                  const Lexicon& lexicon, const SemanticSpace& semantics);
  void score(CandidateSentence& cand) const;

 private:
  const NGramLM& lm_;
  const RevisionWeights& weights_;
  const Lexicon& lexicon_;
  const SemanticSpace& semantics_;
  Vec orig_vec_;
  double orig_norm_ = 0.0;
  Tag orig_root_;
};

// Root tag of the caption's parse tree, without building the tree.
Tag caption_root_tag(const std::vector<std::string>& tokens, const Lexicon& lexicon);

std::vector<CandidateSentence> enumerate_candidates(const ParseTree& tree, const Lexicon& lexicon);

CandidateSentence score_candidate(const std::vector<std::string>& orig, CandidateSentence cand,
                                  const NGramLM& lm, const RevisionWeights& weights,
                                  const Lexicon& lexicon, const SemanticSpace& semantics);

// Argmax of the score; ties go to the lexicographically smallest tokens.
// Candidate scoring runs through kernels::score_candidates.
CandidateSentence select_negative_caption(const std::vector<std::string>& orig, const NGramLM& lm,
                                          const Lexicon& lexicon, const SemanticSpace& semantics,
                                          const RevisionWeights& weights);
// Same selection over an already scored list.
const CandidateSentence& best_candidate(const std::vector<CandidateSentence>& scored);
// The k best candidates in selection order (k = 1 gives select_negative_caption).
std::vector<CandidateSentence> ranked_negative_captions(const std::vector<std::string>& orig, const NGramLM& lm,
                                                        const Lexicon& lexicon, const SemanticSpace& semantics,
                                                        const RevisionWeights& weights, std::size_t k);

// Bundles everything the caption revision loop needs.
struct Reviser {
  Lexicon lexicon;
  NGramLM lm;
  SemanticSpace semantics;
  RevisionWeights weights;
};

// LM trained on the captions of `corpus`.
Reviser make_reviser(const World& world, const DatasetSplit& corpus, const RevisionWeights& weights);

Scene caption_to_scene(const World& world, const std::vector<std::string>& tokens);

// caption -> revised caption -> scene -> render; question kept, c = 0.
QIPair generate_negative_pair(const World& world, const Reviser& reviser, const QIPair& pair);
// Up to k negatives from the k best revisions; the first equals generate_negative_pair.
std::vector<QIPair> generate_negative_pairs(const World& world, const Reviser& reviser, const QIPair& pair,
                                            std::size_t k);

// Question kept, regions and scene taken from a uniformly drawn other pair.
QIPair random_negative_pair(const std::vector<QIPair>& dataset, std::size_t pair_index, Rng& rng);

double relevance_leak_rate(const std::vector<QIPair>& pairs);

}  // namespace qirl
