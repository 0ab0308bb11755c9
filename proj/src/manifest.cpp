#include "segdsl/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "segdsl/error.hpp"

namespace segdsl {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cols;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cols.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cols.push_back(cur);
  return cols;
}

}  // namespace

std::optional<std::size_t> Manifest::class_index(const std::string& name) const {
  auto it = std::lower_bound(class_names.begin(), class_names.end(), name);
  if (it == class_names.end() || *it != name) return std::nullopt;
  return static_cast<std::size_t>(it - class_names.begin());
}

std::map<std::string, std::size_t> Manifest::label_map() const {
  std::map<std::string, std::size_t> out;
  for (const ManifestRow& r : rows) {
    if (!r.label.empty()) out[r.utterance_id] = *class_index(r.label);
  }
  return out;
}

const ManifestRow* Manifest::find(const std::string& utterance_id) const {
  for (const ManifestRow& r : rows) {
    if (r.utterance_id == utterance_id) return &r;
  }
  return nullptr;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  const std::filesystem::path base = path.parent_path();
  Manifest m;
  std::set<std::string> ids;
  std::set<std::string> names;
  std::string line;
  bool header_seen = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      m.comments.push_back(line.substr(line.size() > 1 && line[1] == ' ' ? 2 : 1));
      continue;
    }
    auto cols = split_csv(line);
    if (!header_seen) {
      if (cols.size() < 3 || cols[0] != "utterance_id" || cols[1] != "wav_path" || cols[2] != "label") {
        throw DataError(path.string() + ": expected header utterance_id,wav_path,label,speaker");
      }
      header_seen = true;
      continue;
    }
    if (cols.size() < 3 || cols.size() > 4) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 3 or 4 columns");
    }
    ManifestRow row;
    row.utterance_id = cols[0];
    if (row.utterance_id.empty()) throw DataError(path.string() + ":" + std::to_string(lineno) + ": empty utterance_id");
    if (!ids.insert(row.utterance_id).second) {
      throw DataError(path.string() + ": duplicate utterance_id '" + row.utterance_id + "'");
    }
    std::filesystem::path wav(cols[1]);
    row.wav_path = wav.is_absolute() ? wav : base / wav;
    row.label = cols[2];
    if (cols.size() == 4) row.speaker = cols[3];
    if (!row.label.empty()) names.insert(row.label);
    m.rows.push_back(std::move(row));
  }
  if (!header_seen) throw DataError(path.string() + ": missing manifest header");
  if (m.rows.empty()) throw DataError(path.string() + ": manifest lists no utterances");
  m.class_names.assign(names.begin(), names.end());
  return m;
}

void save_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows,
                   const std::vector<std::string>& comments) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  for (const std::string& c : comments) out << "# " << c << '\n';
  out << "utterance_id,wav_path,label,speaker\n";
  for (const ManifestRow& r : rows) {
    out << r.utterance_id << ',' << r.wav_path.generic_string() << ',' << r.label << ',' << r.speaker << '\n';
  }
}

}  // namespace segdsl
