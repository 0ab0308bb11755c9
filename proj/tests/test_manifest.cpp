#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "segdsl/error.hpp"
#include "segdsl/manifest.hpp"

using namespace segdsl;

TEST_CASE("manifest round trip with sorted class indices") {
  TempDir dir("manifest");
  const std::vector<ManifestRow> rows = {
      {"a", "wav/a.wav", "sad", "s1"}, {"b", "wav/b.wav", "angry", ""}, {"c", "wav/c.wav", "", ""}};
  save_manifest(dir / "m.csv", rows, {"made by hand"});
  const Manifest m = load_manifest(dir / "m.csv");
  REQUIRE(m.rows.size() == 3);
  CHECK(m.comments == std::vector<std::string>{"made by hand"});
  CHECK(m.class_names == std::vector<std::string>{"angry", "sad"});
  CHECK(m.class_index("sad") == 1u);
  CHECK(!m.class_index("happy").has_value());
  CHECK(m.rows[0].wav_path == dir.path() / "wav/a.wav");
  CHECK(m.rows[0].speaker == "s1");
  const auto labels = m.label_map();
  CHECK(labels.size() == 2);
  CHECK(labels.at("b") == 0);
  CHECK(m.find("c") != nullptr);
  CHECK(m.find("z") == nullptr);
}

TEST_CASE("three-column manifests and malformed input") {
  TempDir dir("manifest");
  std::ofstream(dir / "three.csv") << "utterance_id,wav_path,label\n# note\nx,/abs/x.wav,neutral\n";
  const Manifest m = load_manifest(dir / "three.csv");
  CHECK(m.rows[0].wav_path == "/abs/x.wav");
  CHECK(m.rows[0].speaker.empty());

  std::ofstream(dir / "dup.csv") << "utterance_id,wav_path,label\nx,a.wav,n\nx,b.wav,n\n";
  CHECK_THROWS_WITH_AS(load_manifest(dir / "dup.csv"), doctest::Contains("x"), DataError);
  std::ofstream(dir / "cols.csv") << "utterance_id,wav_path,label\nx,a.wav\n";
  CHECK_THROWS_AS(load_manifest(dir / "cols.csv"), DataError);
  std::ofstream(dir / "header.csv") << "id,path\nx,a.wav\n";
  CHECK_THROWS_AS(load_manifest(dir / "header.csv"), DataError);
  CHECK_THROWS_AS(load_manifest(dir / "missing.csv"), DataError);
}
