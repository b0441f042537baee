#pragma once

#include <filesystem>
#include <string>

#include "unimp/graph.hpp"

namespace unimp {

/// Plain-text dataset files. All files are newline terminated, header-less.
///   edges:    "src dst [f1 ... f_de]" per line, 0-indexed ids
///   features: one comma-separated row of m floats per node
///   labels:   one integer per line (multi-class) or c space-separated bits (multi-label)
///   splits:   "train" | "valid" | "test" per line
struct DatasetPaths {
  std::filesystem::path edges;
  std::filesystem::path features;  // may be empty when averaging edge features
  std::filesystem::path labels;
  std::filesystem::path splits;

  /// edges.txt, features.csv, labels.txt and splits.txt inside dir.
  static DatasetPaths in_directory(const std::filesystem::path& dir);
};

struct LoadOptions {
  /// Keep edges as given instead of storing both directions.
  bool directed = false;
  /// Replace (or supply missing) node features with the mean feature vector of
  /// all incident edges, in and out. Nodes without edges get zeros.
  bool average_edge_features = false;
  /// 0 infers max label + 1; otherwise labels must lie in [0, num_classes).
  std::size_t num_classes = 0;
};

/// Parses and validates the four files. Malformed lines raise ParseError with
/// path and line number; cross-file inconsistencies raise IntegrityError.
Dataset load_graph(const DatasetPaths& paths, const LoadOptions& options = {});

/// Writes the dataset so that load_graph reproduces it exactly. Each file is
/// written to a temporary sibling and renamed into place.
void save_dataset(const Dataset& data, const DatasetPaths& paths);

/// Writes text to path via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// Formats a double so that parsing it back yields the same value.
std::string format_exact(double value);

}  // namespace unimp
