#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attrflip/core.hpp"
#include "attrflip/model.hpp"

namespace attrflip {

// Checkpoint format AFM1: one JSON manifest line, then the weights as raw
// little-endian float32 in declaration order.

inline nlohmann::json layer_spec_to_json(const LayerSpec& l) {
  nlohmann::json j;
  j["kind"] = to_string(l.kind);
  if (l.kind != LayerKind::avgpool) {
    j["in"] = l.in;
    j["out"] = l.out;
    j["activation"] = to_string(l.activation);
  }
  if (l.kind != LayerKind::dense) j["kernel"] = l.kernel;
  return j;
}

inline LayerSpec layer_spec_from_json(const nlohmann::json& j) {
  LayerSpec l;
  l.kind = layer_kind_from_string(j.at("kind").get<std::string>());
  l.in = j.value("in", 0);
  l.out = j.value("out", 0);
  l.kernel = j.value("kernel", 0);
  if (j.contains("activation"))
    l.activation = activation_from_string(j.at("activation").get<std::string>());
  return l;
}

inline std::string checkpoint_manifest(const ClassifierModel& m) {
  nlohmann::json j;
  j["format"] = "AFM1";
  j["input_shape"] = {m.input_height, m.input_width, m.input_channels};
  j["head_kind"] = to_string(m.head);
  j["attribute_count"] = m.attribute_count;
  j["attribute_names"] = m.attribute_names;
  j["input_scale"] = m.input_scale;
  j["input_mean"] = m.input_mean;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : m.layers) layers.push_back(layer_spec_to_json(l));
  j["layer_spec"] = layers;
  j["epoch_counter"] = m.epoch_counter;
  j["seed"] = m.seed;
  return j.dump();
}

// Stable identifier derived from the manifest; lands in outcome records so
// reports can tell which weights produced them.
inline std::string model_id(const ClassifierModel& m) {
  std::string manifest = checkpoint_manifest(m);
  std::string weight_bytes;
  weight_bytes.resize(m.weights.size() * sizeof(float));
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    float f = static_cast<float>(m.weights[i]);
    std::memcpy(weight_bytes.data() + i * sizeof(float), &f, sizeof(float));
  }
  return "afm1-" + hex64(fnv1a64(manifest) ^ fnv1a64(weight_bytes));
}

inline void save_checkpoint(const ClassifierModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << checkpoint_manifest(m) << "\n";
  for (double w : m.weights) {
    float f = static_cast<float>(w);
    char buf[sizeof(float)];
    std::memcpy(buf, &f, sizeof(float));  // x86-64: already little-endian
    out.write(buf, sizeof(float));
  }
  if (!out) throw IoError(path + ": write failed");
}

inline ClassifierModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::string manifest;
  if (!std::getline(in, manifest)) throw IoError(path + ": missing manifest line");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(manifest);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad manifest: " + e.what());
  }
  if (j.value("format", "") != std::string("AFM1"))
    throw IoError(path + ": unsupported checkpoint format '" + j.value("format", "") + "'");

  ClassifierModel m;
  try {
    auto shape = j.at("input_shape");
    m.input_height = shape.at(0).get<int>();
    m.input_width = shape.at(1).get<int>();
    m.input_channels = shape.at(2).get<int>();
    m.head = head_kind_from_string(j.at("head_kind").get<std::string>());
    m.attribute_count = j.at("attribute_count").get<int>();
    m.attribute_names = j.value("attribute_names", std::vector<std::string>{});
    m.input_scale = j.value("input_scale", 1.0);
    m.input_mean = j.value("input_mean", std::vector<double>{});
    for (const auto& lj : j.at("layer_spec")) m.layers.push_back(layer_spec_from_json(lj));
    m.epoch_counter = j.value("epoch_counter", 0);
    m.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad manifest field: " + e.what());
  }
  finalize_model(m);

  const std::size_t n = total_weight_count(m);
  m.weights.resize(n);
  std::vector<char> raw(n * sizeof(float));
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw IoError(path + ": weight blob truncated (expected " + std::to_string(n) + " floats)");
  char extra;
  if (in.read(&extra, 1))
    throw IoError(path + ": trailing bytes after " + std::to_string(n) + " weights");
  for (std::size_t i = 0; i < n; ++i) {
    float f;
    std::memcpy(&f, raw.data() + i * sizeof(float), sizeof(float));
    m.weights[i] = static_cast<double>(f);
  }
  return m;
}

}  // namespace attrflip
