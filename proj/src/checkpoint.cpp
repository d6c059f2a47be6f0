#include "qirl/checkpoint.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "qirl/errors.hpp"
#include "qirl/io.hpp"

namespace qirl {

using nlohmann::json;

namespace {

constexpr const char* kMagic = "qirl-checkpoint";

json mat_json(const Mat& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Mat mat_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size())
    throw CheckpointError("matrix shape does not match its data");
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  return m;
}

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec vec_from(const json& j) {
  const auto d = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(d.data(), static_cast<Eigen::Index>(d.size()));
}

json hist_json(const ScoreHistogram& h) { return h.bins; }

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  json j;
  j["config_hash"] = c.config_hash;
  j["matcher"] = {{"w_v", mat_json(c.matcher.w_v)},
                  {"w_e", mat_json(c.matcher.w_e)},
                  {"lambda1", c.matcher.lambda1},
                  {"lambda2", c.matcher.lambda2}};
  const auto& p = c.vqa.params;
  j["vqa"] = {{"vocabulary", c.vqa.vocabulary},
              {"answers", c.vqa.answers},
              {"word_table", mat_json(p.word_table)},
              {"q_bias", vec_json(p.q_bias)},
              {"region_proj", mat_json(p.region_proj)},
              {"v_bias", vec_json(p.v_bias)},
              {"head_w", mat_json(p.head_w)},
              {"head_b", vec_json(p.head_b)}};
  j["lm"] = {{"order", c.lm.order()}, {"vocabulary", c.lm.vocabulary()}, {"counts", c.lm.counts()}};
  j["gate"] = {{"gamma", c.gate.gamma},
               {"policy", to_string(c.gate.policy)},
               {"relevant_histogram", hist_json(c.gate.report.relevant)},
               {"irrelevant_histogram", hist_json(c.gate.report.irrelevant)},
               {"false_reject", c.gate.report.false_reject},
               {"false_accept", c.gate.report.false_accept}};
  const auto payload = j.dump() + "\n";
  return std::string(kMagic) + " " + std::to_string(c.version) + " " + std::to_string(payload.size()) + "\n" +
         payload;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw CheckpointTruncatedError("checkpoint header incomplete");
  std::istringstream head(bytes.substr(0, nl));
  std::string magic;
  int version = -1;
  std::size_t size = 0;
  if (!(head >> magic >> version >> size) || magic != kMagic) throw CheckpointError("not a checkpoint file");
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint version " + std::to_string(version) + ", expected " +
                                 std::to_string(kCheckpointVersion));
  const auto payload_len = bytes.size() - nl - 1;
  if (payload_len < size)
    throw CheckpointTruncatedError("checkpoint truncated: " + std::to_string(payload_len) + " of " +
                                   std::to_string(size) + " payload bytes");
  if (payload_len > size) throw CheckpointError("trailing bytes after checkpoint payload");

  Checkpoint c;
  c.version = version;
  try {
    const auto j = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(nl + 1), bytes.end());
    c.config_hash = j.at("config_hash").get<std::string>();
    const auto& m = j.at("matcher");
    c.matcher.w_v = mat_from(m.at("w_v"));
    c.matcher.w_e = mat_from(m.at("w_e"));
    c.matcher.lambda1 = m.at("lambda1").get<double>();
    c.matcher.lambda2 = m.at("lambda2").get<double>();
    const auto& v = j.at("vqa");
    c.vqa.vocabulary = v.at("vocabulary").get<std::vector<std::string>>();
    c.vqa.answers = v.at("answers").get<std::vector<std::string>>();
    auto& p = c.vqa.params;
    p.word_table = mat_from(v.at("word_table"));
    p.q_bias = vec_from(v.at("q_bias"));
    p.region_proj = mat_from(v.at("region_proj"));
    p.v_bias = vec_from(v.at("v_bias"));
    p.head_w = mat_from(v.at("head_w"));
    p.head_b = vec_from(v.at("head_b"));
    const auto& l = j.at("lm");
    c.lm.restore(l.at("order").get<int>(), l.at("vocabulary").get<std::vector<std::string>>(),
                 l.at("counts").get<NGramLM::Counts>());
    const auto& g = j.at("gate");
    c.gate.gamma = g.at("gamma").get<double>();
    c.gate.policy = gate_policy_from_string(g.at("policy").get<std::string>());
    c.gate.report.relevant.bins = g.at("relevant_histogram").get<std::vector<int>>();
    c.gate.report.irrelevant.bins = g.at("irrelevant_histogram").get<std::vector<int>>();
    c.gate.report.false_reject = g.at("false_reject").get<double>();
    c.gate.report.false_accept = g.at("false_accept").get<double>();
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("invalid checkpoint: ") + e.what());
  }
  try {
    if (c.has_matcher()) c.matcher.validate();
    if (c.has_vqa()) c.vqa.validate();
    c.gate.validate();
  } catch (const std::exception& e) {
    throw CheckpointDimensionError(std::string("inconsistent checkpoint: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

void check_dimensions(const Checkpoint& c, const World& world) {
  const int d = world.dim();
  auto fail = [&](const std::string& what, long long got) {
    throw CheckpointDimensionError(what + " is " + std::to_string(got) + ", world feature_dim is " +
                                   std::to_string(d));
  };
  if (c.has_matcher()) {
    if (c.matcher.region_dim() != d) fail("matcher region dimension", c.matcher.region_dim());
    if (c.matcher.word_dim() != d) fail("matcher word dimension", c.matcher.word_dim());
  }
  if (!c.has_vqa()) return;
  if (c.vqa.region_dim() != d) fail("VQA region dimension", c.vqa.region_dim());
  if (c.vqa.answers != world.answers())
    throw CheckpointDimensionError("VQA answer vocabulary does not match the world");
}

}  // namespace qirl
