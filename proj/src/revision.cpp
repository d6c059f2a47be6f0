#include "qirl/revision.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "qirl/errors.hpp"
#include "qirl/kernels.hpp"

namespace qirl {
namespace {

constexpr Tag kAllTags[] = {Tag::S,   Tag::NP,   Tag::VP, Tag::CC, Tag::PRP,
                            Tag::VBD, Tag::ADJP, Tag::JJ, Tag::N,  Tag::D};

std::string join(const std::vector<std::string>& tokens, char sep = ' ') {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

// Flattened view of a caption tree: one slot per noun phrase.
struct PhraseSlot {
  std::vector<int> path;
  std::optional<std::string> det, adj;
  std::optional<int> det_child, adj_child;
  int noun_child = 0;
  std::string noun;
  bool removed = false;
};

enum class Field { Phrase, Det, Adj, Noun };

struct EditOp {
  Edit edit;
  std::size_t slot = 0;
  Field field = Field::Phrase;
};

std::vector<PhraseSlot> collect_slots(const ParseTree& tree) {
  std::vector<PhraseSlot> slots;
  auto add_np = [&](const ParseNode& np, std::vector<int> path) {
    PhraseSlot s;
    s.path = std::move(path);
    for (std::size_t i = 0; i < np.children.size(); ++i) {
      const auto& c = np.children[i];
      const int ci = static_cast<int>(i);
      if (c.tag == Tag::D) {
        s.det = c.token;
        s.det_child = ci;
      } else if (c.tag == Tag::JJ) {
        s.adj = c.token;
        s.adj_child = ci;
      } else if (c.tag == Tag::N) {
        s.noun = c.token;
        s.noun_child = ci;
      }
    }
    slots.push_back(std::move(s));
  };
  if (tree.tag == Tag::NP) {
    add_np(tree, {});
  } else {
    for (std::size_t i = 0; i < tree.children.size(); ++i)
      if (tree.children[i].tag == Tag::NP) add_np(tree.children[i], {static_cast<int>(i)});
  }
  return slots;
}

std::vector<int> child_path(const std::vector<int>& base, int child) {
  auto p = base;
  p.push_back(child);
  return p;
}

bool is_prefix(const std::vector<int>& a, const std::vector<int>& b) {
  return a.size() <= b.size() && std::equal(a.begin(), a.end(), b.begin());
}

// Edited view of a slot; strings point into the tree or the lexicon.
struct WorkSlot {
  const std::string* det;
  const std::string* adj;
  const std::string* noun;
  bool removed;
};

void apply(std::vector<WorkSlot>& work, const EditOp& op) {
  auto& s = work[op.slot];
  const std::string* repl = op.edit.kind == Edit::Kind::Removal ? nullptr : &op.edit.replacement;
  switch (op.field) {
    case Field::Phrase: s.removed = true; break;
    case Field::Det: s.det = repl; break;
    case Field::Adj: s.adj = repl; break;
    case Field::Noun: s.noun = repl; break;
  }
}

std::vector<std::string> linearize(const std::vector<WorkSlot>& work) {
  std::vector<std::string> out;
  out.reserve(3 * work.size() + work.size());
  for (const auto& s : work) {
    if (s.removed) continue;
    if (!out.empty()) out.emplace_back("and");
    if (s.det) out.push_back(*s.det);
    if (s.adj) out.push_back(*s.adj);
    out.push_back(*s.noun);
  }
  return out;
}

}  // namespace

const char* to_string(Tag t) {
  switch (t) {
    case Tag::S: return "S";
    case Tag::NP: return "NP";
    case Tag::VP: return "VP";
    case Tag::CC: return "CC";
    case Tag::PRP: return "PRP";
    case Tag::VBD: return "VBD";
    case Tag::ADJP: return "ADJP";
    case Tag::JJ: return "JJ";
    case Tag::N: return "N";
    case Tag::D: return "D";
  }
  return "?";
}

std::optional<Tag> tag_from_string(const std::string& s) {
  for (auto t : kAllTags)
    if (s == to_string(t)) return t;
  return std::nullopt;
}

std::vector<std::string> ParseNode::leaves() const {
  if (is_leaf()) return {token};
  std::vector<std::string> out;
  for (const auto& c : children) {
    auto l = c.leaves();
    out.insert(out.end(), l.begin(), l.end());
  }
  return out;
}

const ParseNode& ParseNode::at(const std::vector<int>& path) const {
  const ParseNode* n = this;
  for (int i : path) n = &n->children.at(static_cast<std::size_t>(i));
  return *n;
}

void Lexicon::add(Tag tag, const std::string& value, std::vector<std::string> antonyms) {
  auto it = tag_of_.find(value);
  if (it != tag_of_.end() && it->second != tag)
    throw ValidationError("lexicon value '" + value + "' has two tags");
  if (it == tag_of_.end()) {
    tag_of_[value] = tag;
    values_[tag].push_back(value);
  }
  if (!antonyms.empty()) antonyms_[value] = std::move(antonyms);
}

std::optional<Tag> Lexicon::tag_of(const std::string& token) const {
  auto it = tag_of_.find(token);
  if (it == tag_of_.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::string>& Lexicon::values(Tag tag) const {
  static const std::vector<std::string> empty;
  auto it = values_.find(tag);
  return it == values_.end() ? empty : it->second;
}

bool Lexicon::has_class(Tag tag) const { return !values(tag).empty(); }

std::vector<std::string> Lexicon::alternatives(Tag tag, const std::string& value) const {
  if (!has_class(tag)) throw ValidationError(std::string("lexicon has no entries for tag ") + to_string(tag));
  auto it = antonyms_.find(value);
  if (it != antonyms_.end()) {
    std::vector<std::string> out;
    for (const auto& a : it->second)
      if (a != value) out.push_back(a);
    return out;
  }
  std::vector<std::string> out;
  for (const auto& v : values(tag))
    if (v != value) out.push_back(v);
  return out;
}

Lexicon lexicon_from_world(const World& world) {
  Lexicon lex;
  for (const auto& c : world.counts()) lex.add(Tag::D, c);
  for (const auto& c : world.colors()) lex.add(Tag::JJ, c);
  for (const auto& c : world.concept_names()) lex.add(Tag::N, c);
  lex.add(Tag::CC, "and");
  return lex;
}

Lexicon parse_lexicon(std::istream& in) {
  Lexicon lex;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string tag_s, value;
    if (!(ls >> tag_s)) continue;
    if (!(ls >> value))
      throw ValidationError("lexicon line " + std::to_string(lineno) + ": missing value");
    auto tag = tag_from_string(tag_s);
    if (!tag) throw ValidationError("lexicon line " + std::to_string(lineno) + ": unknown tag '" + tag_s + "'");
    std::vector<std::string> antonyms;
    for (std::string a; ls >> a;) antonyms.push_back(a);
    lex.add(*tag, value, std::move(antonyms));
  }
  if (!lex.has_class(Tag::CC)) lex.add(Tag::CC, "and");
  return lex;
}

Lexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open lexicon");
  return parse_lexicon(in);
}

ParseTree parse_caption(const std::vector<std::string>& tokens, const Lexicon& lexicon) {
  if (tokens.empty()) throw ParseError(0, "empty caption");
  std::vector<ParseNode> phrases;
  std::vector<ParseNode> conjunctions;
  std::size_t i = 0;
  auto tag_at = [&](std::size_t k) -> std::optional<Tag> {
    auto t = lexicon.tag_of(tokens[k]);
    if (!t) throw ParseError(k, "unknown word '" + tokens[k] + "'");
    return t;
  };
  while (true) {
    ParseNode np{Tag::NP, {}, {}};
    if (i < tokens.size() && tag_at(i) == Tag::D) np.children.push_back({Tag::D, tokens[i++], {}});
    if (i < tokens.size() && tag_at(i) == Tag::JJ) np.children.push_back({Tag::JJ, tokens[i++], {}});
    if (i >= tokens.size()) throw ParseError(i, "noun phrase is missing its noun");
    if (tag_at(i) != Tag::N) throw ParseError(i, "expected a noun, got '" + tokens[i] + "'");
    np.children.push_back({Tag::N, tokens[i++], {}});
    phrases.push_back(std::move(np));
    if (i == tokens.size()) break;
    if (tag_at(i) != Tag::CC) throw ParseError(i, "expected a conjunction, got '" + tokens[i] + "'");
    conjunctions.push_back({Tag::CC, tokens[i++], {}});
    if (i == tokens.size()) throw ParseError(i, "dangling conjunction");
  }
  if (phrases.size() == 1) return std::move(phrases.front());
  ParseTree root{Tag::S, {}, {}};
  for (std::size_t k = 0; k < phrases.size(); ++k) {
    if (k) root.children.push_back(std::move(conjunctions[k - 1]));
    root.children.push_back(std::move(phrases[k]));
  }
  return root;
}

std::string Edit::describe() const {
  std::string path;
  for (int p : site) path += "/" + std::to_string(p);
  if (path.empty()) path = "/";
  return kind == Kind::Removal ? "remove@" + path : "sub@" + path + "=" + replacement;
}

void RevisionWeights::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("revision.alpha", "must be > 0");
  if (!(beta > 0.0)) throw ConfigError("revision.beta", "must be > 0");
}

std::vector<CandidateSentence> enumerate_candidates(const ParseTree& tree, const Lexicon& lexicon) {
  for (auto tag : {Tag::D, Tag::JJ, Tag::N})
    if (!lexicon.has_class(tag))
      throw ValidationError(std::string("lexicon has no entries for tag ") + to_string(tag));
  const auto original = tree.leaves();
  const auto slots = collect_slots(tree);
  const bool sentence_root = tree.tag == Tag::S;

  std::vector<EditOp> singles;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const auto& s = slots[k];
    if (sentence_root) singles.push_back({{Edit::Kind::Removal, s.path, {}}, k, Field::Phrase});
    auto leaf_ops = [&](std::optional<int> child, const std::string& value, Tag tag, Field field,
                        bool removable) {
      if (!child) return;
      const auto site = child_path(s.path, *child);
      if (removable) singles.push_back({{Edit::Kind::Removal, site, {}}, k, field});
      for (const auto& alt : lexicon.alternatives(tag, value))
        singles.push_back({{Edit::Kind::Substitution, site, alt}, k, field});
    };
    leaf_ops(s.det_child, s.det.value_or(""), Tag::D, Field::Det, true);
    leaf_ops(s.adj_child, s.adj.value_or(""), Tag::JJ, Field::Adj, true);
    leaf_ops(s.noun_child, s.noun, Tag::N, Field::Noun, false);
  }

  std::vector<WorkSlot> base;
  for (const auto& s : slots)
    base.push_back({s.det ? &*s.det : nullptr, s.adj ? &*s.adj : nullptr, &s.noun, false});

  std::vector<CandidateSentence> out;
  std::unordered_set<std::string> seen{join(original)};
  auto emit = [&](const EditOp* first, const EditOp* second) {
    auto work = base;
    apply(work, *first);
    if (second) apply(work, *second);
    auto tokens = linearize(work);
    if (tokens.empty()) return;
    if (!seen.insert(join(tokens)).second) return;
    CandidateSentence c;
    c.tokens = std::move(tokens);
    c.edits.push_back(first->edit);
    if (second) c.edits.push_back(second->edit);
    out.push_back(std::move(c));
  };
  for (const auto& op : singles) emit(&op, nullptr);
  for (std::size_t a = 0; a < singles.size(); ++a) {
    for (std::size_t b = a + 1; b < singles.size(); ++b) {
      const auto& sa = singles[a].edit.site;
      const auto& sb = singles[b].edit.site;
      if (is_prefix(sa, sb) || is_prefix(sb, sa)) continue;
      emit(&singles[a], &singles[b]);
    }
  }
  return out;
}

double semantic_integrity(double cosine) { return std::max(1e-6, (cosine + 1.0) / 2.0); }

double revision_score(double f_lm, double f_sei, double f_syi, const RevisionWeights& w) {
  return std::pow(f_lm, w.alpha) / (std::pow(f_sei, w.beta) * f_syi);
}

SemanticSpace SemanticSpace::from_world(const World& world) {
  SemanticSpace s;
  s.dim = world.dim();
  for (std::size_t i = 0; i < world.concept_names().size(); ++i)
    s.concept_vectors[world.concept_names()[i]] =
        world.concept_embeddings().row(static_cast<Eigen::Index>(i)).transpose();
  return s;
}

Vec SemanticSpace::sentence_vector(const std::vector<std::string>& tokens, int d) const {
  Vec sum = Vec::Zero(d);
  int n = 0;
  for (const auto& t : tokens) {
    auto it = concept_vectors.find(t);
    if (it == concept_vectors.end()) continue;
    sum += it->second;
    ++n;
  }
  return n ? Vec(sum / n) : sum;
}

Tag caption_root_tag(const std::vector<std::string>& tokens, const Lexicon& lexicon) {
  const bool conjoined = std::any_of(tokens.begin(), tokens.end(),
                                     [&](const std::string& t) { return lexicon.tag_of(t) == Tag::CC; });
  return conjoined ? Tag::S : Tag::NP;
}

CandidateScorer::CandidateScorer(const std::vector<std::string>& orig, const NGramLM& lm,
                                 const RevisionWeights& weights, const Lexicon& lexicon,
                                 const SemanticSpace& semantics)
    : lm_(lm), weights_(weights), lexicon_(lexicon), semantics_(semantics) {
  orig_root_ = parse_caption(orig, lexicon).tag;
  orig_vec_ = semantics.sentence_vector(orig, semantics.dim);
  orig_norm_ = orig_vec_.norm();
}

void CandidateScorer::score(CandidateSentence& cand) const {
  cand.f_lm = lm_.fluency(cand.tokens);
  if (!(cand.f_lm > 0.0)) throw NumericError("language model assigned zero probability to a candidate");
  const Vec b = semantics_.sentence_vector(cand.tokens, semantics_.dim);
  const double denom = orig_norm_ * b.norm();
  const double cosine = denom > 0.0 ? orig_vec_.dot(b) / denom : 0.0;
  cand.f_sei = semantic_integrity(cosine);
  cand.f_syi = caption_root_tag(cand.tokens, lexicon_) == orig_root_ ? 1.0 : 0.5;
  cand.score = revision_score(cand.f_lm, cand.f_sei, cand.f_syi, weights_);
}

CandidateSentence score_candidate(const std::vector<std::string>& orig, CandidateSentence cand,
                                  const NGramLM& lm, const RevisionWeights& weights,
                                  const Lexicon& lexicon, const SemanticSpace& semantics) {
  // Validates the candidate against the grammar as well.
  parse_caption(cand.tokens, lexicon);
  CandidateScorer(orig, lm, weights, lexicon, semantics).score(cand);
  return cand;
}

const CandidateSentence& best_candidate(const std::vector<CandidateSentence>& scored) {
  if (scored.empty()) throw ValidationError("no candidate sentences");
  const CandidateSentence* best = &scored.front();
  for (const auto& c : scored) {
    if (c.score > best->score || (c.score == best->score && c.tokens < best->tokens)) best = &c;
  }
  return *best;
}

std::vector<CandidateSentence> ranked_negative_captions(const std::vector<std::string>& orig, const NGramLM& lm,
                                                        const Lexicon& lexicon, const SemanticSpace& semantics,
                                                        const RevisionWeights& weights, std::size_t k) {
  const auto tree = parse_caption(orig, lexicon);
  auto scored = kernels::score_candidates(orig, enumerate_candidates(tree, lexicon), lm, weights, lexicon, semantics);
  if (scored.empty()) throw ValidationError("no candidate sentences");
  k = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                    [](const CandidateSentence& a, const CandidateSentence& b) {
                      return a.score > b.score || (a.score == b.score && a.tokens < b.tokens);
                    });
  scored.resize(k);
  return scored;
}

CandidateSentence select_negative_caption(const std::vector<std::string>& orig, const NGramLM& lm,
                                          const Lexicon& lexicon, const SemanticSpace& semantics,
                                          const RevisionWeights& weights) {
  const auto tree = parse_caption(orig, lexicon);
  const auto scored =
      kernels::score_candidates(orig, enumerate_candidates(tree, lexicon), lm, weights, lexicon, semantics);
  return best_candidate(scored);
}

NGramLM::NGramLM(int order) : order_(order) {
  if (order < 1) throw ConfigError("lm.order", "must be >= 1");
  vocab_ = {kEos, kUnk};
  index_vocabulary();
}

void NGramLM::index_vocabulary() {
  ids_.clear();
  for (std::size_t i = 0; i < vocab_.size(); ++i) ids_[vocab_[i]] = static_cast<int>(i);
  // Context keys pack order-1 ids in base (V + 1); keep them within 64 bits.
  const double bits = (order_ - 1) * std::log2(static_cast<double>(vocab_.size() + 1));
  if (bits > 62.0) throw ConfigError("lm.order", "too large for the vocabulary size");
}

int NGramLM::id_of(const std::string& w) const {
  if (auto it = ids_.find(w); it != ids_.end()) return it->second;
  if (w == kBos) return bos_id();
  return ids_.at(kUnk);
}

std::uint64_t NGramLM::initial_context() const {
  std::uint64_t key = 0;
  for (int k = 0; k < order_ - 1; ++k) key = push_context(key, bos_id());
  return key;
}

std::uint64_t NGramLM::push_context(std::uint64_t key, int id) const {
  if (order_ == 1) return 0;
  const std::uint64_t base = vocab_.size() + 1;
  std::uint64_t span = 1;
  for (int k = 0; k < order_ - 2; ++k) span *= base;
  return (key % span) * base + static_cast<std::uint64_t>(id);
}

void NGramLM::train(const std::vector<std::vector<std::string>>& sentences) {
  std::set<std::string> words{kEos, kUnk};
  for (const auto& s : sentences) words.insert(s.begin(), s.end());
  vocab_.assign(words.begin(), words.end());
  index_vocabulary();
  rows_.clear();
  const int eos = id_of(kEos);
  for (const auto& s : sentences) {
    auto key = initial_context();
    for (std::size_t i = 0; i <= s.size(); ++i) {
      const int w = i < s.size() ? id_of(s[i]) : eos;
      auto& row = rows_[key];
      if (row.counts.empty()) row.counts.assign(vocab_.size(), 0);
      ++row.counts[static_cast<std::size_t>(w)];
      ++row.total;
      key = push_context(key, w);
    }
  }
}

NGramLM::Counts NGramLM::counts() const {
  Counts out;
  for (const auto& [key, row] : rows_) {
    std::vector<std::string> ctx;
    std::uint64_t k = key;
    const std::uint64_t base = vocab_.size() + 1;
    for (int i = 0; i < order_ - 1; ++i) {
      const auto id = static_cast<std::size_t>(k % base);
      ctx.insert(ctx.begin(), id == vocab_.size() ? std::string(kBos) : vocab_[id]);
      k /= base;
    }
    auto& dst = out[join(ctx)];
    for (std::size_t w = 0; w < row.counts.size(); ++w)
      if (row.counts[w]) dst[vocab_[w]] = row.counts[w];
  }
  return out;
}

void NGramLM::restore(int order, std::vector<std::string> vocab, const Counts& counts) {
  if (order < 1) throw ValidationError("language model order must be >= 1");
  order_ = order;
  std::sort(vocab.begin(), vocab.end());
  vocab_ = std::move(vocab);
  if (!std::binary_search(vocab_.begin(), vocab_.end(), std::string(kUnk)) ||
      !std::binary_search(vocab_.begin(), vocab_.end(), std::string(kEos)))
    throw ValidationError("language model vocabulary lacks </s> or <unk>");
  index_vocabulary();
  rows_.clear();
  for (const auto& [ctx_s, row_s] : counts) {
    std::istringstream in(ctx_s);
    std::uint64_t key = 0;
    int n = 0;
    for (std::string w; in >> w; ++n) {
      if (w != kBos && !ids_.count(w)) throw ValidationError("context word '" + w + "' not in vocabulary");
      key = push_context(key, id_of(w));
    }
    if (n != order_ - 1) throw ValidationError("context '" + ctx_s + "' has the wrong length");
    auto& row = rows_[key];
    row.counts.assign(vocab_.size(), 0);
    for (const auto& [w, c] : row_s) {
      auto it = ids_.find(w);
      if (it == ids_.end()) throw ValidationError("word '" + w + "' not in vocabulary");
      row.counts[static_cast<std::size_t>(it->second)] = c;
      row.total += c;
    }
  }
}

double NGramLM::prob_ids(std::uint64_t context_key, int word) const {
  std::uint64_t c = 0, total = 0;
  if (auto it = rows_.find(context_key); it != rows_.end()) {
    c = it->second.counts[static_cast<std::size_t>(word)];
    total = it->second.total;
  }
  return (static_cast<double>(c) + 1.0) / (static_cast<double>(total) + static_cast<double>(vocab_.size()));
}

double NGramLM::prob(const std::vector<std::string>& context, const std::string& word) const {
  auto key = initial_context();
  for (const auto& w : context) key = push_context(key, id_of(w));
  return prob_ids(key, id_of(word));
}

double NGramLM::fluency(const std::vector<std::string>& tokens) const {
  double log_sum = 0.0;
  auto key = initial_context();
  for (std::size_t i = 0; i <= tokens.size(); ++i) {
    const int w = id_of(i < tokens.size() ? tokens[i] : std::string(kEos));
    log_sum += std::log(prob_ids(key, w));
    key = push_context(key, w);
  }
  return std::exp(log_sum / static_cast<double>(tokens.size() + 1));
}

Reviser make_reviser(const World& world, const DatasetSplit& corpus, const RevisionWeights& weights) {
  weights.validate();
  Reviser r{lexicon_from_world(world), NGramLM(2), SemanticSpace::from_world(world), weights};
  std::vector<std::vector<std::string>> captions;
  captions.reserve(corpus.pairs.size());
  for (const auto& p : corpus.pairs) captions.push_back(caption_scene(world, p.scene));
  r.lm.train(captions);
  return r;
}

Scene caption_to_scene(const World& world, const std::vector<std::string>& tokens) {
  const auto tree = parse_caption(tokens, lexicon_from_world(world));
  Scene scene;
  for (const auto& slot : collect_slots(tree)) {
    SceneObject o;
    auto concept_id = world.concept_index(slot.noun);
    if (!concept_id) throw ValidationError("unknown concept '" + slot.noun + "'");
    o.concept_id = *concept_id;
    if (slot.adj) o.color = world.color_index(*slot.adj).value();
    o.count = slot.det ? world.count_index(*slot.det).value() : world.count_index("1").value_or(0);
    scene.objects.push_back(o);
  }
  scene.canonicalize();
  return scene;
}

QIPair generate_negative_pair(const World& world, const Reviser& reviser, const QIPair& pair) {
  if (pair.relevance != 1) throw ValidationError("negative generation needs a relevant pair");
  const auto caption = caption_scene(world, pair.scene);
  const auto revised =
      select_negative_caption(caption, reviser.lm, reviser.lexicon, reviser.semantics, reviser.weights);
  QIPair out = pair;
  out.pair_id = pair.pair_id + "/nig";
  out.scene = caption_to_scene(world, revised.tokens);
  out.regions = render_regions(world, out.scene, out.pair_id);
  out.relevance = 0;
  return out;
}

std::vector<QIPair> generate_negative_pairs(const World& world, const Reviser& reviser, const QIPair& pair,
                                            std::size_t k) {
  if (pair.relevance != 1) throw ValidationError("negative generation needs a relevant pair");
  const auto caption = caption_scene(world, pair.scene);
  const auto ranked =
      ranked_negative_captions(caption, reviser.lm, reviser.lexicon, reviser.semantics, reviser.weights, k);
  std::vector<QIPair> out;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    QIPair neg = pair;
    neg.pair_id = pair.pair_id + "/nig" + (i ? std::to_string(i) : "");
    neg.scene = caption_to_scene(world, ranked[i].tokens);
    neg.regions = render_regions(world, neg.scene, neg.pair_id);
    neg.relevance = 0;
    out.push_back(std::move(neg));
  }
  return out;
}

QIPair random_negative_pair(const std::vector<QIPair>& dataset, std::size_t pair_index, Rng& rng) {
  if (dataset.size() < 2) throw ValidationError("random substitution needs at least two pairs");
  if (pair_index >= dataset.size()) throw ValidationError("pair index out of range");
  auto other = rng.index(dataset.size() - 1);
  if (other >= pair_index) ++other;
  QIPair out = dataset[pair_index];
  out.pair_id += "/rand";
  out.regions = dataset[other].regions;
  out.scene = dataset[other].scene;
  out.relevance = 0;
  return out;
}

double relevance_leak_rate(const std::vector<QIPair>& pairs) {
  if (pairs.empty()) throw ValidationError("leak rate of an empty set");
  std::size_t leaks = 0;
  for (const auto& p : pairs) {
    if (p.relevance != 0) throw ValidationError("leak rate expects irrelevant pairs, got " + p.pair_id);
    if (p.scene.contains(p.focus_concept)) ++leaks;
  }
  return static_cast<double>(leaks) / static_cast<double>(pairs.size());
}

}  // namespace qirl
