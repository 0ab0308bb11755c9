#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace segdsl {

struct ManifestRow {
  std::string utterance_id;
  std::filesystem::path wav_path;  // resolved against the manifest's directory
  std::string label;               // empty when unlabeled
  std::string speaker;
};

// Comma-delimited: header "utterance_id,wav_path,label,speaker", '#' lines are
// comments. Class indices follow the lexicographic order of label names.
struct Manifest {
  std::vector<ManifestRow> rows;
  std::vector<std::string> class_names;
  std::vector<std::string> comments;  // '#' lines without the marker

  std::size_t num_classes() const { return class_names.size(); }
  std::optional<std::size_t> class_index(const std::string& name) const;
  // Utterance id -> class index, labeled rows only.
  std::map<std::string, std::size_t> label_map() const;
  const ManifestRow* find(const std::string& utterance_id) const;
};

// Throws DataError on missing file, bad header, duplicate ids or wrong column counts.
Manifest load_manifest(const std::filesystem::path& path);

void save_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows,
                   const std::vector<std::string>& comments);

}  // namespace segdsl
