#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attrflip/attack.hpp"
#include "attrflip/core.hpp"

namespace attrflip {

// One serialized attack outcome. Pixel data lives in image files referenced
// by path so that every report can be recomputed from what is on disk.
struct OutcomeRecord {
  std::string image_id;
  std::string image_path;      // original image
  std::string perturbed_path;  // empty when the attack never produced a flip
  int attribute = 0;
  std::string attribute_name;
  std::string method;
  std::string mode;
  bool natural = false;
  std::vector<int> original_classes;
  int original_class = 0;
  bool flipped = false;
  bool quantization_reverted = false;
  bool is_adversarial = false;
  double pass_score = 0.0;
  bool ecc_converged = true;
  double epsilon = 0.0;
  int iterations = 0;
  int gradient_evals = 0;
  std::string failure_reason;
  std::string model_id;
  std::string config_hash;
};

inline std::string attack_config_hash(const AttackConfig& cfg) {
  nlohmann::json j;
  j["method"] = to_string(cfg.method);
  j["mode"] = to_string(cfg.mode);
  j["epsilon_initial"] = cfg.epsilon_initial;
  j["epsilon_max"] = cfg.effective_epsilon_max();
  j["binary_search_iters"] = cfg.binary_search_iters;
  j["max_iterations"] = cfg.max_iterations;
  j["pass_threshold"] = cfg.pass_threshold;
  j["quantize_result"] = cfg.quantize_result;
  j["ffa_literal_ascent"] = cfg.ffa_literal_ascent;
  return hex64(fnv1a64(j.dump()));
}

inline nlohmann::json to_json(const OutcomeRecord& r) {
  nlohmann::json j;
  j["image_id"] = r.image_id;
  j["image_path"] = r.image_path;
  j["perturbed_path"] = r.perturbed_path;
  j["attribute"] = r.attribute;
  j["attribute_name"] = r.attribute_name;
  j["method"] = r.method;
  j["mode"] = r.mode;
  j["natural"] = r.natural;
  j["original_classes"] = r.original_classes;
  j["original_class"] = r.original_class;
  j["flipped"] = r.flipped;
  j["quantization_reverted"] = r.quantization_reverted;
  j["is_adversarial"] = r.is_adversarial;
  j["pass_score"] = r.pass_score;
  j["ecc_converged"] = r.ecc_converged;
  j["epsilon"] = r.epsilon;
  j["iterations"] = r.iterations;
  j["gradient_evals"] = r.gradient_evals;
  j["failure_reason"] = r.failure_reason;
  j["model_id"] = r.model_id;
  j["config_hash"] = r.config_hash;
  return j;
}

inline OutcomeRecord outcome_record_from_json(const nlohmann::json& j) {
  OutcomeRecord r;
  r.image_id = j.at("image_id").get<std::string>();
  r.image_path = j.value("image_path", "");
  r.perturbed_path = j.value("perturbed_path", "");
  r.attribute = j.at("attribute").get<int>();
  r.attribute_name = j.value("attribute_name", "");
  r.method = j.at("method").get<std::string>();
  r.mode = j.at("mode").get<std::string>();
  r.natural = j.at("natural").get<bool>();
  r.original_classes = j.value("original_classes", std::vector<int>{});
  r.original_class = j.at("original_class").get<int>();
  r.flipped = j.at("flipped").get<bool>();
  r.quantization_reverted = j.value("quantization_reverted", false);
  r.is_adversarial = j.at("is_adversarial").get<bool>();
  r.pass_score = j.at("pass_score").get<double>();
  r.ecc_converged = j.value("ecc_converged", true);
  r.epsilon = j.value("epsilon", 0.0);
  r.iterations = j.value("iterations", 0);
  r.gradient_evals = j.value("gradient_evals", 0);
  r.failure_reason = j.value("failure_reason", "");
  r.model_id = j.value("model_id", "");
  r.config_hash = j.value("config_hash", "");
  return r;
}

inline OutcomeRecord make_record(const AttackOutcome& o, const std::string& attribute_name,
                                 const std::string& image_path,
                                 const std::string& perturbed_path, const std::string& model_id,
                                 const std::string& config_hash) {
  OutcomeRecord r;
  r.image_id = o.image_id;
  r.image_path = image_path;
  r.perturbed_path = perturbed_path;
  r.attribute = o.attribute;
  r.attribute_name = attribute_name;
  r.method = to_string(o.method);
  r.mode = to_string(o.mode);
  r.natural = o.natural;
  r.original_classes = o.original_classes;
  r.original_class = o.original_class;
  r.flipped = o.flipped;
  r.quantization_reverted = o.quantization_reverted;
  r.is_adversarial = o.is_adversarial;
  r.pass_score = o.pass_score;
  r.ecc_converged = o.ecc_converged;
  r.epsilon = o.epsilon;
  r.iterations = o.iterations;
  r.gradient_evals = o.gradient_evals;
  r.failure_reason = o.failure_reason;
  r.model_id = model_id;
  r.config_hash = config_hash;
  return r;
}

inline void write_outcomes_jsonl(const std::string& path,
                                 const std::vector<OutcomeRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot open for writing");
  for (const auto& r : records) out << to_json(r).dump() << "\n";
  if (!out) throw IoError(path + ": write failed");
}

inline std::vector<OutcomeRecord> read_outcomes_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::vector<OutcomeRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(outcome_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path, line_no, std::string("bad outcome record: ") + e.what());
    }
  }
  return out;
}

}  // namespace attrflip
