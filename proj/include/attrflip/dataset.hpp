#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "attrflip/core.hpp"

namespace attrflip {

struct DatasetItem {
  std::string id;  // typically the image filename
  ImageTensor image;
  std::vector<int> labels;  // one entry per attribute, -1 or +1
};

struct AttributeDataset {
  std::vector<std::string> attribute_names;
  std::vector<DatasetItem> items;
  std::string split;

  int attribute_count() const { return static_cast<int>(attribute_names.size()); }

  void validate() const {
    for (const auto& it : items) {
      if (it.labels.size() != attribute_names.size())
        throw ShapeError("dataset item '" + it.id + "' has wrong label count");
      for (int v : it.labels)
        if (v != -1 && v != 1) throw ConfigError("dataset item '" + it.id + "' has non-binary label");
    }
  }
};

// Label file skeleton: filenames and labels, no pixel data.
struct LabelFile {
  std::vector<std::string> attribute_names;
  std::vector<std::string> image_names;
  std::vector<std::vector<int>> labels;  // [image][attribute]
};

// Attribute-list layout: line 1 holds the image count, line 2 the attribute
// names, then one line per image: filename followed by M values, each -1 or 1.
inline LabelFile parse_attribute_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");

  LabelFile out;
  std::string line;
  int line_no = 0;

  if (!std::getline(in, line)) throw ParseError(path, 1, "missing image count line");
  ++line_no;
  long declared = 0;
  {
    std::istringstream ss(line);
    std::string extra;
    if (!(ss >> declared) || declared < 0 || (ss >> extra))
      throw ParseError(path, line_no, "expected a single non-negative image count");
  }

  if (!std::getline(in, line)) throw ParseError(path, 2, "missing attribute name line");
  ++line_no;
  {
    std::istringstream ss(line);
    std::string name;
    while (ss >> name) out.attribute_names.push_back(name);
    if (out.attribute_names.empty()) throw ParseError(path, line_no, "no attribute names");
  }

  const std::size_t m = out.attribute_names.size();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;  // trailing blank
    std::istringstream ss(line);
    std::string fname;
    ss >> fname;
    std::vector<int> row;
    row.reserve(m);
    std::string tok;
    while (ss >> tok) {
      int v = 0;
      try {
        std::size_t used = 0;
        v = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(path, line_no, "bad label token '" + tok + "'");
      }
      if (v != -1 && v != 1)
        throw ParseError(path, line_no, "label value must be -1 or 1, got '" + tok + "'");
      row.push_back(v);
    }
    if (row.size() != m)
      throw ParseError(path, line_no,
                       "expected " + std::to_string(m) + " labels, got " + std::to_string(row.size()));
    out.image_names.push_back(fname);
    out.labels.push_back(std::move(row));
  }

  if (static_cast<long>(out.image_names.size()) != declared)
    throw ParseError(path, line_no == 0 ? 1 : line_no,
                     "image count mismatch: header says " + std::to_string(declared) + ", found " +
                         std::to_string(out.image_names.size()));
  return out;
}

inline void write_attribute_labels(const std::string& path, const LabelFile& lf) {
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << lf.image_names.size() << "\n";
  for (std::size_t i = 0; i < lf.attribute_names.size(); ++i)
    out << (i ? " " : "") << lf.attribute_names[i];
  out << "\n";
  for (std::size_t r = 0; r < lf.image_names.size(); ++r) {
    out << lf.image_names[r];
    for (int v : lf.labels[r]) out << " " << v;
    out << "\n";
  }
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace attrflip
