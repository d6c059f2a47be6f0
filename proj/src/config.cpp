#include "qirl/config.hpp"

#include <cstdio>
#include <set>

#include "qirl/errors.hpp"
#include "qirl/io.hpp"
#include "qirl/rng.hpp"

namespace qirl {

using nlohmann::json;

namespace {

// Reads optional keys of one JSON object and rejects anything unread.
class Section {
 public:
  Section(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(prefix_.empty() ? "<root>" : prefix_, "expected an object");
  }
  void done() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(name(k), "unknown key");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(name(key), "wrong type");
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string name(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

 private:
  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

}  // namespace

void RunConfig::validate() const {
  world.validate();
  if (sizes.train < 2) throw ConfigError("sizes.train", "must be at least 2");
  if (sizes.calibration < 1) throw ConfigError("sizes.calibration", "must be positive");
  if (sizes.test < 1) throw ConfigError("sizes.test", "must be positive");
  revision.validate();
  if (!(matcher.lambda1 > 0.0)) throw ConfigError("matcher.lambda1", "must be > 0");
  if (!(matcher.lambda2 > 0.0)) throw ConfigError("matcher.lambda2", "must be > 0");
  matcher.train.validate();
  vqa.validate();
  if (!(gate.gamma >= 0.0 && gate.gamma <= 1.0)) throw ConfigError("gate.gamma", "must lie in [0, 1]");
}

void RunConfig::apply_seed() {
  world.seed = seed;
  matcher.train.seed = derive_seed(seed, 0x6d61);
  vqa.seed = derive_seed(seed, 0x7671);
}

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["world"] = {{"concept_count", c.world.concept_count},
                {"feature_dim", c.world.feature_dim},
                {"attributes", c.world.attributes},
                {"region_noise_sigma", c.world.region_noise_sigma},
                {"annotator_accuracy", c.world.annotator_accuracy},
                {"bias_strength", c.world.bias_strength},
                {"max_objects", c.world.max_objects}};
  j["sizes"] = {{"train", c.sizes.train}, {"calibration", c.sizes.calibration}, {"test", c.sizes.test}};
  j["revision"] = {{"alpha", c.revision.alpha}, {"beta", c.revision.beta}};
  const auto& m = c.matcher.train;
  j["matcher"] = {{"lambda1", c.matcher.lambda1},
                  {"lambda2", c.matcher.lambda2},
                  {"margin", m.margin},
                  {"learning_rate", m.learning_rate},
                  {"epochs", m.epochs},
                  {"batch_size", m.batch_size},
                  {"hidden_dim", m.hidden_dim},
                  {"init_noise", m.init_noise},
                  {"use_generated_negatives", m.use_generated_negatives}};
  const auto& v = c.vqa;
  j["vqa"] = {{"hidden_dim", v.hidden_dim}, {"init_scale", v.init_scale}, {"learning_rate", v.learning_rate},
              {"epochs", v.epochs},         {"batch_size", v.batch_size}, {"phi", v.phi},
              {"learn_weight", v.learn_weight}, {"negative_ratio", v.negative_ratio}};
  j["gate"] = {{"policy", to_string(c.gate.policy)}, {"gamma", c.gate.gamma}};
  j["negatives_source"] = to_string(c.negatives_source);
  j["output_dir"] = c.output_dir;
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  {
    Section root(j, "");
    root.get("seed", c.seed);
    root.get("output_dir", c.output_dir);
    std::string neg = to_string(c.negatives_source);
    root.get("negatives_source", neg);
    try {
      c.negatives_source = negatives_source_from_string(neg);
    } catch (const std::exception&) {
      throw ConfigError("negatives_source", "expected none, random or nig");
    }
    if (const auto* w = root.child("world")) {
      Section s(*w, "world");
      s.get("concept_count", c.world.concept_count);
      s.get("feature_dim", c.world.feature_dim);
      s.get("attributes", c.world.attributes);
      s.get("region_noise_sigma", c.world.region_noise_sigma);
      s.get("annotator_accuracy", c.world.annotator_accuracy);
      s.get("bias_strength", c.world.bias_strength);
      s.get("max_objects", c.world.max_objects);
      s.done();
    }
    if (const auto* w = root.child("sizes")) {
      Section s(*w, "sizes");
      s.get("train", c.sizes.train);
      s.get("calibration", c.sizes.calibration);
      s.get("test", c.sizes.test);
      s.done();
    }
    if (const auto* w = root.child("revision")) {
      Section s(*w, "revision");
      s.get("alpha", c.revision.alpha);
      s.get("beta", c.revision.beta);
      s.done();
    }
    if (const auto* w = root.child("matcher")) {
      Section s(*w, "matcher");
      auto& m = c.matcher.train;
      s.get("lambda1", c.matcher.lambda1);
      s.get("lambda2", c.matcher.lambda2);
      s.get("margin", m.margin);
      s.get("learning_rate", m.learning_rate);
      s.get("epochs", m.epochs);
      s.get("batch_size", m.batch_size);
      s.get("hidden_dim", m.hidden_dim);
      s.get("init_noise", m.init_noise);
      s.get("use_generated_negatives", m.use_generated_negatives);
      s.done();
    }
    if (const auto* w = root.child("vqa")) {
      Section s(*w, "vqa");
      auto& v = c.vqa;
      s.get("hidden_dim", v.hidden_dim);
      s.get("init_scale", v.init_scale);
      s.get("learning_rate", v.learning_rate);
      s.get("epochs", v.epochs);
      s.get("batch_size", v.batch_size);
      s.get("phi", v.phi);
      s.get("learn_weight", v.learn_weight);
      s.get("negative_ratio", v.negative_ratio);
      s.done();
    }
    if (const auto* w = root.child("gate")) {
      Section s(*w, "gate");
      std::string policy = to_string(c.gate.policy);
      s.get("policy", policy);
      c.gate.policy = gate_policy_from_string(policy);
      s.get("gamma", c.gate.gamma);
      s.done();
    }
    root.done();
  }
  c.apply_seed();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  const auto text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("<file>", path + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

std::string config_hash(const RunConfig& cfg) {
  auto j = to_json(cfg);
  j.erase("output_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

}  // namespace qirl
